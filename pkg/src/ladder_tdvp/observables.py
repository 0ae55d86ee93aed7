"""Expectation values, parities, fidelity and Wigner grids.

Works directly on variational states (exactly, inside the ladder span) and on
Fock density matrices.  Phase-space grids use the displaced-parity form of the
Wigner function over the complex-amplitude plane, normalized so a state
integrates to one against d(Re beta) d(Im beta).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial, prod, sqrt

import numpy as np
from scipy.special import eval_genlaguerre

from .basis import LadderBasisSpec, Sector, ladder_fock_vectors
from .engine import EngineConfig, VariationalState, to_scaled
from .fock import FockDensityMatrix
from .geometry import GeometryBundle, apply_mode_left, apply_mode_right, trace_pair
from .models import ModelSpec
from .operators import OperatorPolynomial


class ObservableError(RuntimeError):
    pass


def observable_bundle(
    specs: list[LadderBasisSpec],
    alphas,
    extra_power: int = 2,
    svd_cutoff: float = 1e-12,
) -> GeometryBundle:
    """A model-free geometry bundle for evaluating observables on a state."""
    from .engine import _assemble  # deferred to avoid a cycle at import time

    class _NoModel:
        @staticmethod
        def max_raising_power(mode):
            return extra_power

    cfg = EngineConfig(svd_cutoff=svd_cutoff)
    return _assemble(alphas, specs, _NoModel, [], cfg)


def _poly_trace(bundle: GeometryBundle, Bhat: np.ndarray, poly: OperatorPolynomial):
    """Tr(O B) from per-mode operator tables; spectator factor is the overlap."""
    dims = bundle.dims
    total = 0.0 + 0.0j
    for coeff, powers in poly.monomials:
        X = Bhat
        for k, g in enumerate(bundle.modes):
            p, q = powers[k]
            if p or q:
                A = g.op_ext(p, q)[: g.d, : g.d]
            else:
                A = g.Shat
            X = apply_mode_left(A, X, dims, k)
        total += coeff * np.trace(X)
    return total


def expectation(
    state: VariationalState,
    specs: list[LadderBasisSpec],
    poly: OperatorPolynomial,
    svd_cutoff: float = 1e-12,
) -> complex:
    """<O> = sum_ij B_ij <phi_j|O|phi_i> on a variational state.

    For Hermitian polynomials the imaginary part must vanish to 1e-9 of the
    magnitude; its violation signals a broken state and raises.
    """
    extra = max(poly.max_raising_power(k) for k in range(poly.modes))
    bundle = observable_bundle(specs, state.alphas, extra + 1, svd_cutoff)
    Bhat = to_scaled(bundle, state.B)
    val = _poly_trace(bundle, Bhat, poly)
    if poly.is_hermitian():
        if abs(val.imag) > 1e-9 * max(1.0, abs(val)):
            raise ObservableError(
                f"Hermitian observable returned imaginary part {val.imag:.3e}"
            )
        return complex(val.real, 0.0)
    return val


def _parity_factor(g) -> np.ndarray:
    """Scaled parity matrix on a cat-sector mode: column parity as eigenvalue."""
    d = g.d
    signs = np.array([1.0 if (i % g.npar) == 0 else -1.0 for i in range(d)])
    return g.Shat * signs[None, :]


def auto_cutoff(spec: LadderBasisSpec, alpha: complex) -> int:
    n = abs(alpha) ** 2
    return int(np.ceil(n + 7.0 * sqrt(n + 1.0) + spec.depth + 10))


def reduced_matrix(bundle: GeometryBundle, Bhat: np.ndarray, keep: tuple[int, ...]):
    """Coefficient matrix of the reduced state on a subset of modes.

    Tracing out mode j contracts its (row, column) index pair against the
    overlap S_j.
    """
    dims = bundle.dims
    M = len(dims)
    X = Bhat.reshape(dims + dims)
    row_axes = list(range(M))
    col_axes = list(range(M, 2 * M))
    order = [k for k in range(M)]
    for j in range(M - 1, -1, -1):
        if j in keep:
            continue
        ra, ca = row_axes[j], col_axes[j]
        X = np.tensordot(X, bundle.modes[j].Shat, axes=([ra, ca], [1, 0]))
        # tensordot removed two axes; re-index the bookkeeping
        removed = sorted((ra, ca))
        def _shift(a):
            return a - sum(1 for r in removed if r < a)
        row_axes = [_shift(a) for a in row_axes]
        col_axes = [_shift(a) for a in col_axes]
        order.remove(j)
    kept = [k for k in range(M) if k in keep]
    perm = [row_axes[k] for k in kept] + [col_axes[k] for k in kept]
    X = np.transpose(X, perm)
    dk = prod(dims[k] for k in kept)
    return np.ascontiguousarray(X.reshape(dk, dk))


def reduced_fock(
    bundle: GeometryBundle,
    Bhat: np.ndarray,
    keep: tuple[int, ...],
    cutoffs,
) -> FockDensityMatrix:
    """Fock density matrix of the reduced state on a mode subset."""
    cutoffs = tuple(int(c) for c in np.atleast_1d(cutoffs))
    Bred = reduced_matrix(bundle, Bhat, keep)
    Phi = np.array([[1.0 + 0.0j]])
    for k, cutoff in zip(keep, cutoffs):
        g = bundle.modes[k]
        V = ladder_fock_vectors(g.spec, cutoff) * g.scale[: g.d][:, None]
        Phi = np.einsum("if,jg->ijfg", Phi, V).reshape(
            Phi.shape[0] * V.shape[0], Phi.shape[1] * V.shape[1]
        )
    rho = Phi.T @ Bred @ Phi.conj()
    return FockDensityMatrix(entries=rho, cutoffs=cutoffs)


def parity(
    state_or_bundle,
    specs_or_Bhat,
    modes: tuple[int, ...],
    cutoff: int | None = None,
) -> float:
    """<prod_k Pi_k> over a mode subset.

    Exact from parity-block traces when every requested mode is a cat sector;
    otherwise evaluated through a truncated Fock embedding of the reduced
    state.  Accepts either (VariationalState, specs) or (bundle, Bhat).
    """
    if isinstance(state_or_bundle, VariationalState):
        state, specs = state_or_bundle, specs_or_Bhat
        bundle = observable_bundle(specs, state.alphas, 1)
        Bhat = to_scaled(bundle, state.B)
    else:
        bundle, Bhat = state_or_bundle, specs_or_Bhat
    modes = tuple(sorted(modes))
    if any(m < 0 or m >= bundle.n_modes for m in modes):
        raise ValueError("parity mode index out of range")
    if all(bundle.modes[k].spec.sector is Sector.Z2CAT for k in modes):
        X = Bhat
        for k, g in enumerate(bundle.modes):
            A = _parity_factor(g) if k in modes else g.Shat
            X = apply_mode_left(A, X, bundle.dims, k)
        val = np.trace(X)
    else:
        cuts = tuple(
            cutoff if cutoff is not None else auto_cutoff(bundle.modes[k].spec, bundle.alphas[k])
            for k in modes
        )
        rho = reduced_fock(bundle, Bhat, modes, cuts)
        signs = np.array([1.0])
        for c in cuts:
            signs = np.kron(signs, (-1.0) ** np.arange(c + 1))
        val = np.sum(signs * np.real(np.diag(rho.entries)))
    return float(np.real(val))


def purity(bundle: GeometryBundle, Bhat: np.ndarray) -> float:
    Y = Bhat
    for k, g in enumerate(bundle.modes):
        Y = apply_mode_right(g.Shat, Y, bundle.dims, k)
    return float(np.real(trace_pair(Y, Y)))


def fidelity(
    rho1: FockDensityMatrix | np.ndarray,
    rho2: FockDensityMatrix | np.ndarray,
    return_details: bool = False,
):
    """Uhlmann fidelity (Tr sqrt(sqrt(r1) r2 sqrt(r1)))^2 in [0, 1].

    Both inputs are renormalized to unit trace; negative eigenvalues (ansatz
    truncation artifacts) are clipped at zero and the clipped mass reported.
    """
    A = rho1.entries if isinstance(rho1, FockDensityMatrix) else np.asarray(rho1)
    B = rho2.entries if isinstance(rho2, FockDensityMatrix) else np.asarray(rho2)
    if A.shape != B.shape:
        raise ValueError("fidelity requires equal dimensions")

    def _clean(R):
        R = np.asarray(R, dtype=complex)
        R = 0.5 * (R + R.conj().T)
        R = R / np.real(np.trace(R))
        w, Q = np.linalg.eigh(R)
        clipped = float(-np.sum(w[w < 0.0]))
        w = np.clip(w, 0.0, None)
        return Q, w, clipped

    Qa, wa, clip_a = _clean(A)
    sqrtA = (Qa * np.sqrt(wa)) @ Qa.conj().T
    Qb, wb, clip_b = _clean(B)
    Bc = (Qb * wb) @ Qb.conj().T
    Mmat = sqrtA @ Bc @ sqrtA
    ev = np.linalg.eigvalsh(0.5 * (Mmat + Mmat.conj().T))
    ev = np.clip(ev, 0.0, None)
    F = float(np.sum(np.sqrt(ev)) ** 2)
    F = min(F, 1.0)
    if return_details:
        return F, {"clipped_mass": (clip_a, clip_b)}
    return F


# -- Wigner function ----------------------------------------------------------


def wigner_from_fock(rho: FockDensityMatrix | np.ndarray, xs, ps) -> np.ndarray:
    """W(beta) = (2/pi) Tr[rho D(2 beta) Pi] on a grid of beta = x + i p.

    Displacement matrix elements come from the associated-Laguerre closed
    form; the result is real with shape (len(ps), len(xs)).
    """
    R = rho.entries if isinstance(rho, FockDensityMatrix) else np.asarray(rho)
    dim = R.shape[0]
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    beta = xs[None, :] + 1.0j * ps[:, None]
    gamma = 2.0 * beta
    g2 = np.abs(gamma) ** 2
    env = np.exp(-0.5 * g2)
    W = np.zeros(beta.shape, dtype=complex)
    sqrt_fact = np.array([sqrt(float(factorial(n))) for n in range(dim)])
    for m in range(dim):
        for n in range(dim):
            # <n| D(gamma) |m>
            if n >= m:
                D_nm = (
                    (sqrt_fact[m] / sqrt_fact[n])
                    * gamma ** (n - m)
                    * env
                    * eval_genlaguerre(m, n - m, g2)
                )
            else:
                D_nm = (
                    (sqrt_fact[n] / sqrt_fact[m])
                    * (-np.conj(gamma)) ** (m - n)
                    * env
                    * eval_genlaguerre(n, m - n, g2)
                )
            W += R[m, n] * (-1.0) ** m * D_nm
    return (2.0 / np.pi) * np.real(W)


def wigner_of_state(
    state: VariationalState,
    specs: list[LadderBasisSpec],
    mode: int,
    xs,
    ps,
    cutoff: int | None = None,
) -> np.ndarray:
    """Wigner grid of one mode of a variational state (others traced out)."""
    bundle = observable_bundle(specs, state.alphas, 1)
    Bhat = to_scaled(bundle, state.B)
    c = cutoff if cutoff is not None else auto_cutoff(specs[mode], state.alphas[mode])
    rho = reduced_fock(bundle, Bhat, (mode,), (c,))
    return wigner_from_fock(rho, xs, ps)


# -- request plumbing for the runner ------------------------------------------


@dataclass(frozen=True)
class ExpectationRequest:
    label: str
    poly: OperatorPolynomial


@dataclass(frozen=True)
class ParityRequest:
    label: str
    modes: tuple[int, ...]


@dataclass(frozen=True)
class PurityRequest:
    label: str = "purity"


class StateObservables:
    """Evaluates a fixed list of requests inside the engine sampling loop."""

    def __init__(self, requests):
        self.requests = list(requests)

    def max_raising_power(self) -> int:
        out = 0
        for req in self.requests:
            if isinstance(req, ExpectationRequest):
                out = max(
                    out,
                    max(
                        req.poly.max_raising_power(k) for k in range(req.poly.modes)
                    ),
                )
        return out

    def __call__(self, t, bundle: GeometryBundle, Bhat: np.ndarray) -> dict:
        out = {}
        for req in self.requests:
            if isinstance(req, ExpectationRequest):
                out[req.label] = complex(_poly_trace(bundle, Bhat, req.poly))
            elif isinstance(req, ParityRequest):
                out[req.label] = parity(bundle, Bhat, req.modes)
            elif isinstance(req, PurityRequest):
                out[req.label] = purity(bundle, Bhat)
            else:
                raise ObservableError(f"unsupported request {req!r}")
        return out
