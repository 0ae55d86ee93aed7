"""Truncated Fock-space reference solver and ladder-basis conversions.

Dense operators over |0..n_max> per mode (tensor product for M modes) give an
exact integration of the Lindblad equation at benchmark cutoffs, used as the
verification oracle for the variational engine.  Conversions embed ladder
basis states into Fock coefficients so fidelities can be computed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import integrate
from .basis import LadderBasisSpec, ladder_fock_vectors, build_overlap, state_norm_squares
from .models import ModelSpec, KrausTermList, kraus_terms
from .operators import OperatorPolynomial

logger = logging.getLogger(__name__)


@dataclass
class FockDensityMatrix:
    """Dense density matrix over truncated Fock space, one cutoff per mode."""

    entries: np.ndarray
    cutoffs: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def normalized(self) -> "FockDensityMatrix":
        return FockDensityMatrix(self.entries / np.real(self.trace()), self.cutoffs)

    def hermiticity_defect(self) -> float:
        diff = self.entries - self.entries.conj().T
        return float(np.linalg.norm(diff) / max(np.linalg.norm(self.entries), 1e-300))

    def reduced(self, mode: int) -> "FockDensityMatrix":
        """Partial trace down to a single mode."""
        dims = tuple(c + 1 for c in self.cutoffs)
        M = len(dims)
        rho = self.entries.reshape(dims + dims)
        keep = mode
        for j in reversed([k for k in range(M) if k != keep]):
            rho = np.trace(rho, axis1=j, axis2=j + rho.ndim // 2)
        return FockDensityMatrix(rho, (self.cutoffs[mode],))


def lowering_operator(cutoff: int) -> np.ndarray:
    a = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    ns = np.arange(1, cutoff + 1)
    a[ns - 1, ns] = np.sqrt(ns)
    return a


def parity_operator(cutoff: int) -> np.ndarray:
    return np.diag((-1.0 + 0.0j) ** np.arange(cutoff + 1))


def _embed(op: np.ndarray, mode: int, cutoffs) -> np.ndarray:
    out = np.array([[1.0 + 0.0j]])
    for k, c in enumerate(cutoffs):
        factor = op if k == mode else np.eye(c + 1, dtype=complex)
        out = np.kron(out, factor)
    return out


def poly_to_matrix(poly: OperatorPolynomial, cutoffs) -> np.ndarray:
    """Dense Fock matrix of a normally ordered polynomial (mode-major)."""
    cutoffs = tuple(int(c) for c in np.atleast_1d(cutoffs))
    if len(cutoffs) != poly.modes:
        raise ValueError("cutoff count must match mode count")
    dim = int(np.prod([c + 1 for c in cutoffs]))
    out = np.zeros((dim, dim), dtype=complex)
    singles = {
        k: lowering_operator(c) for k, c in enumerate(cutoffs)
    }
    for coeff, powers in poly.monomials:
        term = np.array([[1.0 + 0.0j]])
        for k, (p, q) in enumerate(powers):
            a = singles[k]
            f = np.eye(cutoffs[k] + 1, dtype=complex)
            if q:
                f = np.linalg.matrix_power(a, q) @ f
            if p:
                f = np.linalg.matrix_power(a.conj().T, p) @ f
            term = np.kron(term, f)
        out += coeff * term
    return out


def apply_kraus(terms: KrausTermList, rho: np.ndarray, cutoffs) -> np.ndarray:
    """Apply an operator-sum generator to a Fock density matrix."""
    out = np.zeros_like(rho)
    for term in terms.terms:
        L = poly_to_matrix(term.left, cutoffs)
        R = poly_to_matrix(term.right, cutoffs)
        out += term.coeff * (L @ rho @ R)
    return out


def lindblad_rhs_matrices(model: ModelSpec, t: float, cutoffs):
    """Dense H and jump operators at time t, truncated at the cutoffs."""
    H = poly_to_matrix(model.hamiltonian_at(t), cutoffs)
    jumps = [
        (dd.rate, poly_to_matrix(dd.jump, cutoffs))
        for dd in model.dissipators
        if dd.rate > 0.0
    ]
    return H, jumps


def ladder_to_fock(
    B: np.ndarray,
    specs: list[LadderBasisSpec],
    cutoffs,
    leakage_tol: float = 1e-10,
) -> FockDensityMatrix:
    """Expand a ladder-basis density matrix into Fock coefficients.

    ``B`` is the raw-convention coefficient matrix over the tensor-product
    ladder basis.  Warns when the Fock truncation loses more than
    ``leakage_tol`` of any basis state's norm.
    """
    cutoffs = tuple(int(c) for c in np.atleast_1d(cutoffs))
    if len(cutoffs) == 1 and len(specs) > 1:
        cutoffs = cutoffs * len(specs)
    if len(cutoffs) != len(specs):
        raise ValueError("one cutoff per mode required")
    frames = []
    for spec, cutoff in zip(specs, cutoffs):
        V = ladder_fock_vectors(spec, cutoff)
        S = build_overlap(spec, 0)
        exact = state_norm_squares(spec, S)
        truncated = np.sum(np.abs(V) ** 2, axis=1)
        rel_loss = np.max(np.abs(exact - truncated) / exact)
        if rel_loss > leakage_tol:
            logger.warning(
                "Fock cutoff %d loses %.3e of a ladder-state norm (alpha=%s, N=%d)",
                cutoff,
                rel_loss,
                spec.alpha,
                spec.depth,
            )
        frames.append(V)
    # Phi rows: tensor-product basis states expanded over the Fock grid
    Phi = frames[0]
    for V in frames[1:]:
        Phi = np.einsum("if,jg->ijfg", Phi, V).reshape(
            Phi.shape[0] * V.shape[0], Phi.shape[1] * V.shape[1]
        )
    rho = Phi.T @ B @ Phi.conj()
    return FockDensityMatrix(entries=rho, cutoffs=cutoffs)


@dataclass
class FockTrajectory:
    times: np.ndarray
    states: list[FockDensityMatrix] = field(default_factory=list)
    observables: dict[str, np.ndarray] = field(default_factory=dict)
    trace_drift: np.ndarray | None = None
    hermiticity_defect: np.ndarray | None = None


def evolve_fock(
    rho0: FockDensityMatrix,
    model: ModelSpec,
    t_span: tuple[float, float],
    sample_times,
    rtol: float = 1e-8,
    atol: float = 1e-8,
    max_step: float = np.inf,
    observables: dict | None = None,
    keep_states: bool = True,
) -> FockTrajectory:
    """Integrate the truncated-Fock Lindblad equation.

    ``observables`` maps labels to dense matrices; expectation values are
    recorded at each sample.  Drive-schedule switch times are integration
    breakpoints so quenches stay sharp.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size == 0:
        raise ValueError("need at least one sample time")
    if np.any(sample_times < t0 - 1e-12) or np.any(sample_times > t1 + 1e-12):
        raise ValueError("sample times must lie within t_span")
    dim = rho0.dim
    cutoffs = rho0.cutoffs

    segments = {t0, t1}
    segments.update(model.breakpoints(t0, t1))
    checkpoints = np.unique(
        np.concatenate([sample_times, np.array(sorted(segments))])
    )

    cache: dict[int, tuple] = {}

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        seg = sum(1 for b in model.breakpoints(t0 - 1.0, t1 + 1.0) if b <= t)
        if seg not in cache:
            cache[seg] = lindblad_rhs_matrices(model, t, cutoffs)
        H, jumps = cache[seg]
        rho = y.reshape(dim, dim)
        drho = -1.0j * (H @ rho - rho @ H)
        for rate, L in jumps:
            Ld = L.conj().T
            LdL = Ld @ L
            drho += rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
        return drho.reshape(-1)

    traj = FockTrajectory(times=sample_times)
    obs = observables or {}
    series = {name: [] for name in obs}
    trace_drift = []
    herm = []

    def record(rho_mat: np.ndarray):
        state = FockDensityMatrix(rho_mat.copy(), cutoffs)
        if keep_states:
            traj.states.append(state)
        for name, op in obs.items():
            series[name].append(complex(np.trace(op @ rho_mat)))
        trace_drift.append(abs(np.real(np.trace(rho_mat)) - 1.0))
        herm.append(state.hermiticity_defect())

    y = rho0.entries.astype(complex).reshape(-1).copy()
    t = t0
    sample_set = {round(float(ts), 12) for ts in sample_times}
    if round(t0, 12) in sample_set:
        record(y.reshape(dim, dim))
    h_prev = None
    for target in checkpoints:
        if target <= t + 1e-14 * max(abs(t), 1.0):
            continue
        res = integrate.integrate_to(
            rhs, t, float(target), y, rtol=rtol, atol=atol,
            max_step=max_step, first_step=h_prev,
        )
        y = res.y
        h_prev = res.last_h
        t = float(target)
        if round(t, 12) in sample_set:
            record(y.reshape(dim, dim))

    traj.observables = {k: np.array(v) for k, v in series.items()}
    traj.trace_drift = np.array(trace_drift)
    traj.hermiticity_defect = np.array(herm)
    return traj
