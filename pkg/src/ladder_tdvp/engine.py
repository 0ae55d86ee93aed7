"""Equations of motion and time evolution in the co-moving ladder basis.

The density matrix ansatz is rho = sum_ij B_ij |phi_i><phi_j| over the
tensor-product ladder basis; the coefficient matrix B and the per-mode
displacements alpha_k evolve jointly.  B follows

    dB/dt = S^-1 L S^-1 - S^-1 tau B - B tau^dag S^-1,

with L the generator matrix in the operator-sum form L = sum_p A_p B D_p and
tau the displacement-velocity contraction of the basis tangents.  Each
displacement follows a scalar quotient

    d alpha_k / dt = Tr{Y0_k B} / Tr{C0_k B S B},

where C0_k and Y0_k are built from one-step block shifts of extended overlap
and operator matrices.  C0_k is rank deficient, supported only on the highest
ladder index, so the quotient is gated: while the coefficient matrix carries
no weight on that corner the displacement is frozen and only B evolves.

All heavy algebra runs in the factorized form provided by
:mod:`ladder_tdvp.geometry`; nothing here ever builds a full Kronecker
operator.  Public entry points accept and return raw-convention matrices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import inf, prod

import numpy as np

from . import __version__ as _pkg_version
from . import integrate
from .basis import LadderBasisSpec, Sector
from .geometry import (
    CompiledTerm,
    FlatTerm,
    GeometryBundle,
    GeometryError,
    apply_mode_left,
    apply_mode_right,
    build_mode_geometry,
    flatten_kraus,
    trace_pair,
)
from . import geometry as _geometry
from .models import ModelSpec, kraus_terms


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    """Integration and regularization controls.

    ``epsilon_alpha`` is the relative threshold of the displacement gate;
    ``svd_cutoff`` the relative spectral cutoff of the overlap pseudo-inverse.
    """

    rtol: float = 1e-8
    atol: float = 1e-8
    epsilon_alpha: float = 1e-8
    svd_cutoff: float = 1e-12
    renormalize_trace: bool = True
    symmetrize_B: bool = True
    max_step: float = inf
    min_step: float = 0.0
    evolve_alpha: bool = True
    spectrum_diagnostics: str = "auto"  # "auto" | "on" | "off"

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.epsilon_alpha <= 0:
            raise ValueError("epsilon_alpha must be positive")
        if not 0.0 < self.svd_cutoff < 1.0:
            raise ValueError("svd_cutoff must lie in (0, 1)")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")
        if self.min_step < 0 or self.min_step >= self.max_step:
            raise ValueError("min_step must be non-negative and below max_step")
        if self.spectrum_diagnostics not in ("auto", "on", "off"):
            raise ValueError("spectrum_diagnostics must be auto, on or off")


@dataclass
class VariationalState:
    """Time, per-mode displacements and raw coefficient matrix."""

    t: float
    alphas: np.ndarray
    B: np.ndarray

    def copy(self) -> "VariationalState":
        return VariationalState(self.t, self.alphas.copy(), self.B.copy())


@dataclass
class Trajectory:
    """Sampled record of a variational evolution."""

    times: np.ndarray
    alphas: np.ndarray                 # (n_samples, M)
    observables: dict[str, np.ndarray]
    trace_dev: np.ndarray
    herm_defect: np.ndarray
    min_eig: np.ndarray
    gate_open: np.ndarray              # (n_samples, M) booleans
    gate_events: list[tuple[float, int, bool]]
    states: list[VariationalState] | None
    n_steps: int = 0
    n_rejected: int = 0
    n_rhs: int = 0
    n_forced: int = 0
    provenance: dict = field(default_factory=dict)


# -- initial-state embedding -------------------------------------------------


@dataclass(frozen=True)
class StateTarget:
    """A normalized single-mode target state to embed into a ladder basis."""

    kind: str        # "coherent" | "even-cat" | "odd-cat"
    amplitude: complex

    def __post_init__(self):
        if self.kind not in ("coherent", "even-cat", "odd-cat"):
            raise ValueError(f"unknown state kind {self.kind!r}")
        object.__setattr__(self, "amplitude", complex(self.amplitude))


def coherent_state(beta: complex) -> StateTarget:
    return StateTarget("coherent", beta)


def cat_state(beta: complex, parity: int = +1) -> StateTarget:
    return StateTarget("even-cat" if parity >= 0 else "odd-cat", beta)


def target_overlaps(spec: LadderBasisSpec, target: StateTarget) -> np.ndarray:
    """Raw overlaps <phi_i | psi> of the basis states with a normalized target."""
    beta = target.amplitude
    alpha = spec.alpha
    ab = np.conj(alpha) * beta
    bb = abs(beta) ** 2
    d = spec.dim
    v = np.zeros(d, dtype=complex)
    if target.kind == "coherent":
        norm = np.exp(-0.5 * bb)
    else:
        s = 1.0 if target.kind == "even-cat" else -1.0
        cat_norm2 = 2.0 * (np.exp(bb) + s * np.exp(-bb))
        if cat_norm2 <= 0.0:
            raise ValueError("cat target has zero norm (odd cat at beta = 0)")
        norm = 1.0 / np.sqrt(cat_norm2)
    for m in range(spec.depth + 1):
        for p in range(spec.n_parities):
            if spec.sector is Sector.PLAIN:
                if target.kind == "coherent":
                    val = beta ** m * np.exp(ab) * norm
                else:
                    s = 1.0 if target.kind == "even-cat" else -1.0
                    val = (
                        beta ** m * np.exp(ab) + s * (-beta) ** m * np.exp(-ab)
                    ) * norm
            else:
                b = (1.0 if p == 0 else -1.0) * (-1.0) ** m
                if target.kind == "coherent":
                    val = beta ** m * (np.exp(ab) + b * np.exp(-ab)) * norm
                else:
                    s = 1.0 if target.kind == "even-cat" else -1.0
                    sp = s * (-1.0) ** m
                    val = (
                        beta ** m
                        * ((1.0 + b * sp) * np.exp(ab) + (b + sp) * np.exp(-ab))
                        * norm
                    )
            v[spec.flat_index(m, p)] = val
    return v


def embed_single_mode(
    spec: LadderBasisSpec, target: StateTarget, svd_cutoff: float = 1e-12
):
    """Project a normalized target onto the basis span: B = c c^dag / <c,Sc>.

    Returns the raw coefficient matrix and the projection leakage
    ``1 - ||P psi||^2``.
    """
    geo = build_mode_geometry(spec, 1, svd_cutoff)
    d = spec.dim
    v_raw = target_overlaps(spec, target)
    v_hat = geo.scale[:d] * v_raw
    c = geo.Shat_inv @ v_hat
    weight = float(np.real(np.vdot(c, geo.Shat @ c)))
    if weight <= 0.0:
        raise EngineError("target state has no support on the basis span")
    B_hat = np.outer(c, c.conj()) / weight
    B_raw = B_hat * np.outer(geo.scale[:d], geo.scale[:d])
    return B_raw, max(0.0, 1.0 - weight)


def embed_product_state(
    targets, specs: list[LadderBasisSpec], svd_cutoff: float = 1e-12
):
    """Tensor product of single-mode embeddings; returns (B_raw, leakages)."""
    B = np.array([[1.0 + 0.0j]])
    leakages = []
    for target, spec in zip(targets, specs):
        Bk, leak = embed_single_mode(spec, target, svd_cutoff)
        B = np.kron(B, Bk)
        leakages.append(leak)
    return B, leakages


# -- raw <-> rescaled conversions --------------------------------------------


def _product_scale(bundle: GeometryBundle) -> np.ndarray:
    s = np.array([1.0])
    for g in bundle.modes:
        s = np.kron(s, g.scale[: g.d])
    return s


def to_scaled(bundle: GeometryBundle, B_raw: np.ndarray) -> np.ndarray:
    s = _product_scale(bundle)
    return B_raw / np.outer(s, s)


def to_raw(bundle: GeometryBundle, B_hat: np.ndarray) -> np.ndarray:
    s = _product_scale(bundle)
    return B_hat * np.outer(s, s)


# -- geometry assembly for a model -------------------------------------------


def assemble_geometry(
    alphas,
    specs: list[LadderBasisSpec],
    model: ModelSpec,
    t: float,
    config: EngineConfig | None = None,
    extra_observable_power: int = 0,
) -> GeometryBundle:
    """Per-mode overlaps, pseudo-inverses and compiled generator terms.

    The extension depth is the largest creation power appearing in the
    generator (or requested observables) plus one, so every block shift stays
    in range.
    """
    config = config or EngineConfig()
    flat = flatten_kraus(kraus_terms(model, t))
    return _assemble(alphas, specs, model, flat, config, extra_observable_power)


def _assemble(alphas, specs, model, flat_terms, config, extra_obs=0):
    alphas = np.asarray(alphas, dtype=complex)
    geos = []
    for k, spec in enumerate(specs):
        extra = max(model.max_raising_power(k), extra_obs) + 1
        geos.append(
            build_mode_geometry(
                spec.with_alpha(alphas[k]), extra, config.svd_cutoff, mode_index=k
            )
        )
    dims = tuple(g.d for g in geos)
    norms = np.array([g.norm_S for g in geos])
    spectator = np.array(
        [
            prod(float(n) for j, n in enumerate(norms) if j != k)
            for k in range(len(geos))
        ]
    )
    return GeometryBundle(
        modes=geos,
        dims=dims,
        D=prod(dims),
        terms=_geometry.compile_terms(flat_terms, geos),
        alphas=alphas,
        spectator_norms=spectator,
    )


# -- equations of motion core -------------------------------------------------


def _sandwich_sum(bundle: GeometryBundle, Y: np.ndarray):
    """Sum over generator terms of (x IA_L) Y (x IA_R), yielding each Z."""
    dims = bundle.dims
    U = np.zeros_like(Y)
    for term in bundle.terms:
        Z = Y
        for k, M in term.ia_right:
            Z = apply_mode_right(M, Z, dims, k)
        V = Z
        for k, M in term.ia_left:
            V = apply_mode_left(M, V, dims, k)
        U = U + term.coeff * V
        yield term, Z, U


def _corner_trace(factors, Z, R, dims, k, npar_k) -> complex:
    """Sum over corner rows e of mode k of [(x factors) Z][e, :] R[:, e].

    The mode-k factor is a pre-restricted (n_parities, d) row block (a corner
    force row); the other factors then act on the reduced row tensor.
    """
    d = dims[k]
    nc = npar_k
    pre = prod(dims[:k])
    post = prod(dims[k + 1 :])
    Mk = next(M for j, M in factors if j == k)
    X = np.matmul(Mk, Z.reshape(pre, d, -1))
    X = X.reshape(-1, Z.shape[1])
    dims_red = dims[:k] + (nc,) + dims[k + 1 :]
    for j, M in factors:
        if j != k:
            X = apply_mode_left(M, X, dims_red, j)
    Rcols = (
        R.reshape(R.shape[0], pre, d, post)[:, :, d - nc :, :]
        .reshape(R.shape[0], -1)
    )
    return complex(np.einsum("ec,ce->", X, Rcols))


def _gate_denominators(bundle: GeometryBundle, Bhat, W):
    dims = bundle.dims
    dens = np.zeros(bundle.n_modes, dtype=complex)
    for k, g in enumerate(bundle.modes):
        KB = Bhat
        for j, gj in enumerate(bundle.modes):
            KB = apply_mode_left(g.c0 if j == k else gj.Shat, KB, dims, j)
        dens[k] = trace_pair(KB, W)
    return dens


def _gate_scales(bundle, normB, normY, epsilon):
    return np.array(
        [
            epsilon * normY * normB * g.norm_c0 * bundle.spectator_norms[k]
            for k, g in enumerate(bundle.modes)
        ]
    )


# Hysteresis: the gate opens when the corner weight exceeds the threshold and
# closes only after it falls well below, so the co-moving basis does not
# chatter on the switching boundary.
_GATE_CLOSE_FRACTION = 0.05


def _rhs_full(
    bundle: GeometryBundle,
    Bhat: np.ndarray,
    config: EngineConfig,
    gate_override: np.ndarray | None = None,
):
    """One evaluation of (dB/dt, d alpha/dt, gate flags) in the scaled frame.

    Without ``gate_override`` the gate rule is applied at this state; with it
    (the integration path) the flags are held fixed across a step, except that
    a mode whose denominator collapses below the close threshold is frozen as
    a safety.
    """
    dims = bundle.dims
    M = bundle.n_modes
    Y = Bhat
    for k, g in enumerate(bundle.modes):
        Y = apply_mode_right(g.Shat, Y, dims, k)
    adots = np.zeros(M, dtype=complex)
    gates = np.zeros(M, dtype=bool)
    open_modes: list[int] = []
    if config.evolve_alpha and (gate_override is None or np.any(gate_override)):
        W = Bhat
        for k, g in enumerate(bundle.modes):
            W = apply_mode_left(g.Shat, W, dims, k)
        dens = _gate_denominators(bundle, Bhat, W)
        normB = float(np.linalg.norm(Bhat))
        normY = float(np.linalg.norm(Y))
        scales = _gate_scales(bundle, normB, normY, config.epsilon_alpha)
        if gate_override is None:
            gates = np.abs(dens) > scales
        else:
            gates = gate_override & (
                np.abs(dens) > _GATE_CLOSE_FRACTION * scales
            )
        open_modes = [k for k in range(M) if gates[k]]

    t1 = np.zeros(M, dtype=complex)
    U = np.zeros_like(Bhat)
    for term, Z, U in _sandwich_sum(bundle, Y):
        for k in open_modes:
            facs = term.force.get(k)
            if facs is not None:
                t1[k] += term.coeff * _corner_trace(
                    facs, Z, Bhat, dims, k, bundle.modes[k].npar
                )

    for k in open_modes:
        adots[k] = t1[k] / dens[k]

    Bdot = U
    for k, g in enumerate(bundle.modes):
        Bdot = apply_mode_right(g.Shat_inv, Bdot, dims, k)
    for k in open_modes:
        if adots[k] == 0.0:
            continue
        T = Bhat
        for j, gj in enumerate(bundle.modes):
            T = apply_mode_left(
                bundle.modes[k].inv_tangent if j == k else gj.proj, T, dims, j
            )
        Bdot = Bdot - adots[k] * T
        T = Bhat
        for j, gj in enumerate(bundle.modes):
            T = apply_mode_right(
                bundle.modes[k].tangent_dag_inv if j == k else gj.proj, T, dims, j
            )
        Bdot = Bdot - np.conj(adots[k]) * T
    return Bdot, adots, gates


# -- public single-shot operations --------------------------------------------


def liouvillian_matrix(bundle: GeometryBundle, B_raw: np.ndarray) -> np.ndarray:
    """Generator matrix L_ij = <phi_i| Lind[rho] |phi_j> (raw convention)."""
    dims = bundle.dims
    Bhat = to_scaled(bundle, B_raw)
    Lhat = np.zeros_like(Bhat)
    for term in bundle.terms:
        # restore the non-absorbed sandwich:  A = S (x IA),  D = S (x IA)
        V = Bhat
        for k, g in enumerate(bundle.modes):
            V = apply_mode_right(g.Shat, V, dims, k)
        for k, M in term.ia_right:
            V = apply_mode_right(M, V, dims, k)
        for k, M in term.ia_left:
            V = apply_mode_left(M, V, dims, k)
        for k, g in enumerate(bundle.modes):
            V = apply_mode_left(g.Shat, V, dims, k)
        Lhat = Lhat + term.coeff * V
    s = _product_scale(bundle)
    return Lhat / np.outer(s, s)


def compute_alpha_dot(bundle: GeometryBundle, B_raw: np.ndarray, config: EngineConfig):
    """Displacement velocities with per-mode gate flags (frozen modes -> 0)."""
    Bhat = to_scaled(bundle, B_raw)
    _, adots, gates = _rhs_full(bundle, Bhat, config)
    return adots, gates


def compute_B_dot(
    bundle: GeometryBundle,
    B_raw: np.ndarray,
    alpha_dots,
    config: EngineConfig | None = None,
) -> np.ndarray:
    """dB/dt (raw convention) for prescribed displacement velocities."""
    dims = bundle.dims
    Bhat = to_scaled(bundle, B_raw)
    Y = Bhat
    for k, g in enumerate(bundle.modes):
        Y = apply_mode_right(g.Shat, Y, dims, k)
    U = np.zeros_like(Bhat)
    for _, _, U in _sandwich_sum(bundle, Y):
        pass
    Bdot = U
    for k, g in enumerate(bundle.modes):
        Bdot = apply_mode_right(g.Shat_inv, Bdot, dims, k)
    alpha_dots = np.asarray(alpha_dots, dtype=complex)
    for k, adot in enumerate(alpha_dots):
        if adot == 0.0:
            continue
        T = Bhat
        for j, gj in enumerate(bundle.modes):
            T = apply_mode_left(
                bundle.modes[k].inv_tangent if j == k else gj.proj, T, dims, j
            )
        Bdot = Bdot - adot * T
        T = Bhat
        for j, gj in enumerate(bundle.modes):
            T = apply_mode_right(
                bundle.modes[k].tangent_dag_inv if j == k else gj.proj, T, dims, j
            )
        Bdot = Bdot - np.conj(adot) * T
    return to_raw(bundle, Bdot)


# -- trace / diagnostics helpers ----------------------------------------------


def scaled_trace(bundle: GeometryBundle, Bhat: np.ndarray) -> complex:
    Y = Bhat
    for k, g in enumerate(bundle.modes):
        Y = apply_mode_right(g.Shat, Y, bundle.dims, k)
    return complex(np.trace(Y))


def physical_spectrum_min(bundle: GeometryBundle, Bhat: np.ndarray) -> float:
    """Smallest eigenvalue of rho restricted to the retained span."""
    X = Bhat
    for k, g in enumerate(bundle.modes):
        X = apply_mode_left(g.Sroot, X, bundle.dims, k)
        X = apply_mode_right(g.Sroot, X, bundle.dims, k)
    X = 0.5 * (X + X.conj().T)
    return float(np.linalg.eigvalsh(X)[0])


# -- evolve --------------------------------------------------------------------


def evolve(
    state0: VariationalState,
    model: ModelSpec,
    specs: list[LadderBasisSpec],
    config: EngineConfig,
    t_span: tuple[float, float],
    sample_times,
    observable_evaluator=None,
    record_states: bool = True,
    extra_observable_power: int = 0,
) -> Trajectory:
    """Integrate the coupled (B, alpha) system over t_span, sampling on the way.

    ``observable_evaluator(t, bundle, Bhat) -> dict`` is called at every
    sample.  Drive-schedule switch times become integration breakpoints, and
    the geometry is reassembled whenever a displacement moves or a boundary is
    crossed.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0:
        raise ValueError("t_span must be increasing")
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size == 0:
        raise ValueError("need at least one sample time")
    if np.any(sample_times < t0 - 1e-12) or np.any(sample_times > t1 + 1e-12):
        raise ValueError("sample times must lie within t_span")
    if abs(state0.t - t0) > 1e-12:
        raise ValueError("initial state time must equal t_span start")
    M = len(specs)
    if len(state0.alphas) != M:
        raise ValueError("state/spec mode count mismatch")

    breakpoints = model.breakpoints(t0, t1)
    seg_edges = [t0] + breakpoints + [t1]
    flat_by_segment = [
        flatten_kraus(kraus_terms(model, seg_edges[i])) for i in range(len(seg_edges) - 1)
    ]

    cache: dict[tuple[int, bytes], GeometryBundle] = {}

    def get_bundle(seg: int, alphas: np.ndarray) -> GeometryBundle:
        key = (seg, alphas.tobytes())
        bundle = cache.get(key)
        if bundle is None:
            if len(cache) > 8:
                cache.clear()
            bundle = _assemble(
                alphas, specs, model, flat_by_segment[seg], config,
                extra_observable_power,
            )
            cache[key] = bundle
        return bundle

    bundle0 = get_bundle(0, np.asarray(state0.alphas, dtype=complex))
    D = bundle0.D
    if state0.B.shape != (D, D):
        raise ValueError(f"coefficient matrix must be {D}x{D}")
    Bhat0 = to_scaled(bundle0, np.asarray(state0.B, dtype=complex))

    def pack(Bhat, alphas):
        return np.concatenate([Bhat.reshape(-1), alphas])

    def unpack(y):
        return y[: D * D].reshape(D, D), y[D * D :]

    counters = {"rhs": 0, "steps": 0, "rejected": 0, "forced": 0}
    gate_state = np.zeros(M, dtype=bool)
    gate_events: list[tuple[float, int, bool]] = []
    current_seg = 0

    def rhs(t, y):
        counters["rhs"] += 1
        Bhat, alphas = unpack(y)
        bundle = get_bundle(current_seg, np.ascontiguousarray(alphas))
        Bdot, adots, _ = _rhs_full(bundle, Bhat, config, gate_override=gate_state)
        return pack(Bdot, adots)

    def hook(t, y):
        nonlocal gate_state
        Bhat, alphas = unpack(y)
        if config.symmetrize_B:
            Bhat = 0.5 * (Bhat + Bhat.conj().T)
        bundle = get_bundle(current_seg, np.ascontiguousarray(alphas))
        if config.renormalize_trace:
            tr = np.real(scaled_trace(bundle, Bhat))
            if tr <= 0.0:
                raise EngineError(f"state trace collapsed to {tr:.3e} at t={t:.6g}")
            Bhat = Bhat / tr
        if config.evolve_alpha:
            W = Bhat
            for k, g in enumerate(bundle.modes):
                W = apply_mode_left(g.Shat, W, bundle.dims, k)
            dens = _gate_denominators(bundle, Bhat, W)
            Y = Bhat
            for k, g in enumerate(bundle.modes):
                Y = apply_mode_right(g.Shat, Y, bundle.dims, k)
            scales = _gate_scales(
                bundle, float(np.linalg.norm(Bhat)), float(np.linalg.norm(Y)),
                config.epsilon_alpha,
            )
            flags = np.where(
                gate_state,
                np.abs(dens) > _GATE_CLOSE_FRACTION * scales,
                np.abs(dens) > scales,
            )
            for k in range(M):
                if flags[k] != gate_state[k]:
                    gate_events.append((t, k, bool(flags[k])))
            gate_state = flags
        return pack(Bhat, alphas)

    # sample bookkeeping
    n_samples = sample_times.size
    out_times = sample_times.copy()
    out_alphas = np.zeros((n_samples, M), dtype=complex)
    out_gate = np.zeros((n_samples, M), dtype=bool)
    trace_dev = np.zeros(n_samples)
    herm = np.zeros(n_samples)
    min_eig = np.full(n_samples, np.nan)
    states: list[VariationalState] | None = [] if record_states else None
    obs_series: dict[str, list] = {}

    want_spectrum = config.spectrum_diagnostics == "on" or (
        config.spectrum_diagnostics == "auto" and D <= 256
    )

    def record(idx, t, y):
        Bhat, alphas = unpack(y)
        bundle = get_bundle(current_seg, np.ascontiguousarray(alphas))
        out_alphas[idx] = alphas
        out_gate[idx] = gate_state
        tr = scaled_trace(bundle, Bhat)
        trace_dev[idx] = abs(np.real(tr) - 1.0)
        nB = np.linalg.norm(Bhat)
        herm[idx] = (
            float(np.linalg.norm(Bhat - Bhat.conj().T) / nB) if nB > 0 else 0.0
        )
        if want_spectrum:
            min_eig[idx] = physical_spectrum_min(bundle, Bhat)
        if states is not None:
            states.append(VariationalState(t, alphas.copy(), to_raw(bundle, Bhat)))
        if observable_evaluator is not None:
            values = observable_evaluator(t, bundle, Bhat)
            for name, val in values.items():
                obs_series.setdefault(name, []).append(val)

    # targets: samples and segment boundaries, integrated to exactly
    targets = np.unique(np.concatenate([sample_times, np.array(seg_edges)]))
    sample_lookup = {}
    for i, ts in enumerate(sample_times):
        sample_lookup.setdefault(round(float(ts), 12), []).append(i)

    y = pack(Bhat0, np.asarray(state0.alphas, dtype=complex))
    t = t0
    # establish initial gate flags
    y = hook(t, y)
    for idx in sample_lookup.get(round(t0, 12), []):
        record(idx, t0, y)
    h_prev = None
    wall0 = time.time()
    for target in targets:
        if target <= t + 1e-14 * max(abs(t), 1.0):
            continue
        while current_seg + 1 < len(seg_edges) - 1 and t >= seg_edges[current_seg + 1] - 1e-14:
            current_seg += 1
        try:
            res = integrate.integrate_to(
                rhs, t, float(target), y,
                rtol=config.rtol, atol=config.atol, max_step=config.max_step,
                min_step=config.min_step, first_step=h_prev, step_hook=hook,
            )
        except integrate.StepSizeUnderflow as exc:
            raise EngineError(
                f"integration stalled at t={exc.t:.9g} (step-size underflow)"
            ) from exc
        counters["steps"] += res.n_steps
        counters["rejected"] += res.n_rejected
        counters["forced"] += res.n_forced
        y = res.y
        h_prev = res.last_h
        t = float(target)
        for idx in sample_lookup.get(round(t, 12), []):
            record(idx, t, y)

    return Trajectory(
        times=out_times,
        alphas=out_alphas,
        observables={k: np.array(v) for k, v in obs_series.items()},
        trace_dev=trace_dev,
        herm_defect=herm,
        min_eig=min_eig,
        gate_open=out_gate,
        gate_events=gate_events,
        states=states,
        n_steps=counters["steps"],
        n_rejected=counters["rejected"],
        n_rhs=counters["rhs"],
        n_forced=counters["forced"],
        provenance={
            "engine_version": _pkg_version,
            "wall_time_s": time.time() - wall0,
        },
    )
