"""Per-mode tangent-space geometry and tensor-product linear algebra.

The multi-mode overlap matrix is a tensor product of single-mode overlaps, so
its regularized inverse, block shifts and operator matrices all factorize per
mode.  Everything here works in a similarity-rescaled frame where the ladder
state ``(mu, m)`` carries a factor ``1/sqrt(m!)``: at alpha = 0 the rescaled
basis is exactly orthonormal Fock, and for large depths the Gram matrices stay
far better conditioned.  Raw-convention quantities are converted at the API
boundary only.

In the rescaled frame a ladder shift by one step carries a ``sqrt(m+1)``
weight; shifted reads of extended matrices implement creation-operator rows
and alpha derivatives exactly as in the unscaled frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np

from .basis import (
    LadderBasisSpec,
    build_overlap,
    monomial_ket_matrix,
    overlap_table,
)
from .integrate import RecoverableRHSError
from .models import KrausTermList


class GeometryError(RecoverableRHSError):
    """Overlap geometry could not be built (singular or out of float range)."""


# -- Kronecker-structured applications --------------------------------------


def apply_mode_left(M: np.ndarray, X: np.ndarray, dims, k: int) -> np.ndarray:
    """(1 x .. x M_k x .. x 1) @ X for X with row index factored over dims.

    ``M`` may have fewer rows than dims[k] (restricted row reads).
    """
    pre = prod(dims[:k])
    d = dims[k]
    Xr = X.reshape(pre, d, -1)
    out = np.matmul(M, Xr)
    return out.reshape(-1, X.shape[1])


def apply_mode_right(M: np.ndarray, X: np.ndarray, dims, k: int) -> np.ndarray:
    """X @ (1 x .. x M_k x .. x 1) for X with column index factored over dims."""
    d = dims[k]
    post = prod(dims[k + 1 :])
    Xr = X.reshape(-1, d, post)
    out = np.matmul(M.T, Xr)
    return out.reshape(X.shape[0], -1)


def apply_left(factors, X: np.ndarray, dims) -> np.ndarray:
    for k, M in factors:
        X = apply_mode_left(M, X, dims, k)
    return X


def apply_right(factors, X: np.ndarray, dims) -> np.ndarray:
    for k, M in factors:
        X = apply_mode_right(M, X, dims, k)
    return X


def kron_matrix(mats) -> np.ndarray:
    """Explicit Kronecker product (reference path for tests/small systems)."""
    out = np.array([[1.0 + 0.0j]])
    for M in mats:
        out = np.kron(out, M)
    return out


def trace_pair(A: np.ndarray, B: np.ndarray) -> complex:
    """Tr(A @ B) without forming the product."""
    return complex(np.einsum("ij,ji->", A, B))


# -- single-mode geometry ----------------------------------------------------


def _cholesky_solve_ld(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve A X = B for Hermitian positive definite A in extended precision."""
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        s = A[j, j].real - np.sum(np.abs(L[j, :j]) ** 2)
        if not s > 0.0:
            raise GeometryError("extended-precision Cholesky lost definiteness")
        L[j, j] = np.sqrt(s)
        if j + 1 < n:
            L[j + 1 :, j] = (
                A[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j].conj()
            ) / L[j, j]
    X = np.array(B, dtype=A.dtype)
    if X.ndim == 1:
        X = X[:, None]
        squeeze = True
    else:
        squeeze = False
    for j in range(n):
        X[j] = (X[j] - L[j, :j] @ X[:j]) / L[j, j]
    for j in range(n - 1, -1, -1):
        X[j] = (X[j] - L[j + 1 :, j].conj() @ X[j + 1 :]) / L[j, j].conj()
    return X[:, 0] if squeeze else X


@dataclass
class ModeGeometry:
    """Rescaled overlap, pseudo-inverse and shift machinery for one mode.

    All matrices live in the norm-equilibrated frame (every basis state is
    divided by its exact norm): the Gram carries a unit diagonal and its
    conditioning is intrinsic, which matters for large displacements.

    The corner geometry (the rank-deficient displacement metric and the force
    rows) is built from the orthogonal complement of the one-step-raised
    corner state, computed in extended precision: the Schur complement of a
    strongly collinear Gram matrix cancels past double precision already at
    the benchmark displacements.
    """

    spec: LadderBasisSpec
    extent: int
    scale: np.ndarray          # 1/norm of each extended basis state
    shift_w: np.ndarray        # scale[i]/scale[i+npar]: one-ladder-step weights
    Shat_ext: np.ndarray       # rescaled overlap out to the extent
    Shat: np.ndarray           # depth-restricted block
    Shat_inv: np.ndarray       # spectral pseudo-inverse
    proj: np.ndarray           # Shat @ Shat_inv (retained-subspace projector)
    Sroot: np.ndarray          # Hermitian square root on the retained subspace
    Sl: np.ndarray             # left-shifted overlap read
    tangent: np.ndarray        # right-shifted overlap read = <phi_m|d_alpha phi_n>
    inv_tangent: np.ndarray    # Shat_inv @ tangent
    tangent_dag_inv: np.ndarray  # tangent^dag @ Shat_inv
    norm_S: float
    norm_c0: float
    c0: np.ndarray             # corner-diagonal displacement metric
    corner_values: np.ndarray  # <d phi_corner |(1-P)| d phi_corner> per parity
    eig_range: tuple[float, float]
    _w_ld: np.ndarray = None   # complement vectors over extended labels (rows)
    _Shat_ext_ld: np.ndarray = None
    _scale_ld: np.ndarray = None
    _gcache: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.spec.dim

    @property
    def npar(self) -> int:
        return self.spec.n_parities

    def lshift(self, M_ext: np.ndarray) -> np.ndarray:
        """Read rows one ladder step up, carrying the rescale weight ratio."""
        d, npar = self.d, self.npar
        w = self.shift_w
        return w[:, None] * M_ext[npar : npar + d, :d]

    def rshift(self, M_ext: np.ndarray) -> np.ndarray:
        d, npar = self.d, self.npar
        w = self.shift_w
        return M_ext[:d, npar : npar + d] * w[None, :]

    def lrshift(self, M_ext: np.ndarray) -> np.ndarray:
        d, npar = self.d, self.npar
        w = self.shift_w
        return (w[:, None] * M_ext[npar : npar + d, npar : npar + d]) * w[None, :]

    def op_ext_ld(self, adag_power: int, a_power: int) -> np.ndarray:
        """Extended-precision operator table, feeding the corner force rows."""
        key = ("ld", adag_power, a_power)
        if key not in self._gcache:
            if self.spec.depth + adag_power > self.extent:
                raise GeometryError(
                    f"monomial adag^{adag_power} exceeds geometry extent "
                    f"{self.extent} at depth {self.spec.depth}"
                )
            K = monomial_ket_matrix(self.spec, self.extent, adag_power, a_power)
            K = K.astype(np.clongdouble)
            Khat = (1.0 / self._scale_ld)[:, None] * K * self._scale_ld[None, :]
            self._gcache[key] = self._Shat_ext_ld @ Khat
        return self._gcache[key]

    def op_ext(self, adag_power: int, a_power: int) -> np.ndarray:
        """Rescaled extended operator-element table S_ext @ K for a monomial."""
        key = (adag_power, a_power)
        if key not in self._gcache:
            self._gcache[key] = self.op_ext_ld(adag_power, a_power).astype(complex)
        return self._gcache[key]

    def corner_rows(self, G_ld: np.ndarray) -> np.ndarray:
        """(n_parities, d) rows <w_mu| O |phi_n> of an operator table.

        ``w_mu`` is the component of the raised corner state orthogonal to the
        basis span; rows are evaluated in extended precision, where the
        subtraction of the in-span part is still well resolved.
        """
        return np.asarray(self._w_ld.conj() @ G_ld[:, : self.d], dtype=complex)


def build_mode_geometry(
    spec: LadderBasisSpec, extra_degree: int, svd_cutoff: float, mode_index: int = 0
) -> ModeGeometry:
    if abs(spec.alpha) ** 2 > 500.0:
        raise GeometryError(
            f"displacement |alpha|^2 = {abs(spec.alpha)**2:.3g} on mode "
            f"{mode_index} exceeds the overlap exponential range"
        )
    extent = spec.depth + extra_degree
    npar = spec.n_parities
    d = spec.dim
    S_ld = overlap_table(spec, extent, np.clongdouble)
    diag_ld = np.real(np.diag(S_ld))
    if np.any(diag_ld <= 0.0) or not np.all(np.isfinite(diag_ld.astype(float))):
        raise GeometryError(f"overlap diagonal is degenerate on mode {mode_index}")
    scale_ld = 1.0 / np.sqrt(diag_ld)
    Shat_ext_ld = scale_ld[:, None] * S_ld * scale_ld[None, :]
    Shat_ext = Shat_ext_ld.astype(complex)
    scale = scale_ld.astype(float)
    Shat = np.ascontiguousarray(Shat_ext[:d, :d])
    Shat = 0.5 * (Shat + Shat.conj().T)
    if not np.all(np.isfinite(Shat)):
        raise GeometryError(f"overlap matrix is not finite on mode {mode_index}")
    w, Q = np.linalg.eigh(Shat)
    wmax = float(w[-1])
    if not np.isfinite(wmax) or wmax <= 0.0 or not np.any(w > svd_cutoff * wmax):
        raise GeometryError(
            f"overlap matrix on mode {mode_index} is singular beyond regularization"
        )
    # Smooth ridge regularization in the dynamical path: a spectral cutoff is
    # not a smooth function of alpha and its stage-to-stage jitter at large
    # condition numbers defeats the adaptive error control.  The unit-diagonal
    # Gram has lambda_max in [1, d], so the ridge tracks the relative cutoff.
    delta = svd_cutoff * d
    ridge = Shat + delta * np.eye(d)
    Shat_inv = np.linalg.solve(ridge, np.eye(d, dtype=complex))
    Shat_inv = 0.5 * (Shat_inv + Shat_inv.conj().T)
    proj = Shat @ Shat_inv
    keep = w > svd_cutoff * wmax
    Qk = Q[:, keep]
    wk = w[keep]
    Sroot = (Qk * np.sqrt(wk)) @ Qk.conj().T
    shift_w = scale[:d] / scale[npar : npar + d]

    # orthogonal complement of the raised corner state, per parity sector
    w_ld = np.zeros((npar, Shat_ext_ld.shape[0]), dtype=np.clongdouble)
    corner_vals = np.zeros(npar)
    Shat_d_ld = Shat_ext_ld[:d, :d]
    for p in range(npar):
        i_corner = npar * spec.depth + p
        i_up = i_corner + npar
        u_amp = np.clongdouble(shift_w[i_corner])
        rhs = Shat_ext_ld[:d, i_up] * u_amp
        try:
            c = _cholesky_solve_ld(Shat_d_ld, rhs)
        except GeometryError:
            c = (Shat_inv @ rhs.astype(complex)).astype(np.clongdouble)
        wvec = np.zeros(Shat_ext_ld.shape[0], dtype=np.clongdouble)
        wvec[i_up] = u_amp
        wvec[:d] -= c
        w_ld[p] = wvec
        val = np.real(wvec.conj() @ (Shat_ext_ld @ wvec))
        corner_vals[p] = max(float(val), 0.0)

    c0 = np.zeros((d, d), dtype=complex)
    for p in range(npar):
        c0[npar * spec.depth + p, npar * spec.depth + p] = corner_vals[p]

    geo = ModeGeometry(
        spec=spec,
        extent=extent,
        scale=scale,
        shift_w=shift_w,
        Shat_ext=Shat_ext,
        Shat=Shat,
        Shat_inv=Shat_inv,
        proj=proj,
        Sroot=Sroot,
        Sl=np.empty(0),
        tangent=np.empty(0),
        inv_tangent=np.empty(0),
        tangent_dag_inv=np.empty(0),
        norm_S=float(np.linalg.norm(Shat)),
        norm_c0=float(np.linalg.norm(c0)),
        c0=c0,
        corner_values=corner_vals,
        eig_range=(float(w[0]), wmax),
        _w_ld=w_ld,
        _Shat_ext_ld=Shat_ext_ld,
        _scale_ld=scale_ld,
    )
    geo.Sl = geo.lshift(Shat_ext)
    geo.tangent = geo.rshift(Shat_ext)
    geo.inv_tangent = Shat_inv @ geo.tangent
    geo.tangent_dag_inv = geo.tangent.conj().T @ Shat_inv
    return geo


# -- flattened generator terms ----------------------------------------------


@dataclass(frozen=True)
class FlatTerm:
    """One monomial-pair summand of the operator-sum generator."""

    coeff: complex
    left: tuple[tuple[int, int, int], ...]   # (mode, adag_power, a_power)
    right: tuple[tuple[int, int, int], ...]


def flatten_kraus(kraus: KrausTermList) -> list[FlatTerm]:
    flat: list[FlatTerm] = []
    for term in kraus.terms:
        for cl, pwl in term.left.monomials:
            left = tuple(
                (k, p, q) for k, (p, q) in enumerate(pwl) if p or q
            )
            for cr, pwr in term.right.monomials:
                right = tuple(
                    (k, p, q) for k, (p, q) in enumerate(pwr) if p or q
                )
                flat.append(FlatTerm(term.coeff * cl * cr, left, right))
    return flat


@dataclass
class CompiledTerm:
    """A generator summand with per-mode inverse-absorbed matrices.

    ``ia_*`` lists hold ``S_k^-1 A_k`` factors so spectator modes drop out of
    the dB/dt contractions (exact by the pseudo-inverse identities).
    ``force`` holds, per mode k with creation weight in the left polynomial,
    the factor list whose mode-k entry is the corner force row
    ``<w_mu| A_k |phi_n>``; terms trivial on mode k exert no displacement
    force there (the complement row of the overlap vanishes identically).
    """

    coeff: complex
    ia_left: tuple[tuple[int, np.ndarray], ...]
    ia_right: tuple[tuple[int, np.ndarray], ...]
    force: dict[int, tuple[tuple[int, np.ndarray], ...]]


@dataclass
class GeometryBundle:
    """Everything the equations of motion need at one (alphas, segment)."""

    modes: list[ModeGeometry]
    dims: tuple[int, ...]
    D: int
    terms: list[CompiledTerm]
    alphas: np.ndarray
    spectator_norms: np.ndarray  # prod_{j != k} ||Shat_j||_F per mode

    @property
    def n_modes(self) -> int:
        return len(self.modes)


def compile_terms(flat: list[FlatTerm], geos: list[ModeGeometry]) -> list[CompiledTerm]:
    M = len(geos)
    # fold single-sided single-mode terms into one matrix per (side, mode)
    buckets: dict[tuple[str, int], np.ndarray] = {}
    singles: list[FlatTerm] = []
    scalars = 0.0 + 0.0j
    for t in flat:
        if not t.left and not t.right:
            scalars += t.coeff
        elif len(t.left) == 1 and not t.right:
            k, p, q = t.left[0]
            key = ("L", k)
            G = geos[k].op_ext_ld(p, q)
            buckets[key] = buckets.get(key, 0.0) + np.clongdouble(t.coeff) * G
        elif len(t.right) == 1 and not t.left:
            k, p, q = t.right[0]
            key = ("R", k)
            G = geos[k].op_ext_ld(p, q)
            buckets[key] = buckets.get(key, 0.0) + np.clongdouble(t.coeff) * G
        else:
            singles.append(t)

    compiled: list[CompiledTerm] = []

    def force_map(left_mats_ld: dict[int, np.ndarray]) -> dict:
        # factor lists of <w_mu (x) others| A_p; only modes with creation
        # weight in the left polynomial feel a force
        out = {}
        for k in left_mats_ld:
            facs = []
            for j in range(M):
                if j == k:
                    continue
                if j in left_mats_ld:
                    dj = geos[j].d
                    facs.append((j, left_mats_ld[j][:dj, :dj].astype(complex)))
                else:
                    facs.append((j, geos[j].Shat))
            facs.append((k, geos[k].corner_rows(left_mats_ld[k])))
            out[k] = tuple(facs)
        return out

    if scalars != 0.0:
        compiled.append(
            CompiledTerm(coeff=scalars, ia_left=(), ia_right=(), force={})
        )
    for (side, k), G in buckets.items():
        d = geos[k].d
        ia = ((k, geos[k].Shat_inv @ G[:d, :d].astype(complex)),)
        if side == "L":
            compiled.append(
                CompiledTerm(
                    coeff=1.0, ia_left=ia, ia_right=(), force=force_map({k: G})
                )
            )
        else:
            compiled.append(
                CompiledTerm(coeff=1.0, ia_left=(), ia_right=ia, force={})
            )
    for t in singles:
        left_mats_ld = {k: geos[k].op_ext_ld(p, q) for k, p, q in t.left}
        right_ia = tuple(
            (k, geos[k].Shat_inv @ geos[k].op_ext(p, q)[: geos[k].d, : geos[k].d])
            for k, p, q in t.right
        )
        left_ia = tuple(
            (k, geos[k].Shat_inv @ G[: geos[k].d, : geos[k].d].astype(complex))
            for k, G in left_mats_ld.items()
        )
        compiled.append(
            CompiledTerm(
                coeff=t.coeff,
                ia_left=left_ia,
                ia_right=right_ia,
                force=force_map(left_mats_ld),
            )
        )
    return compiled


def assemble_geometry(
    alphas,
    specs: list[LadderBasisSpec],
    flat_terms: list[FlatTerm],
    svd_cutoff: float,
    extra_degree: int,
) -> GeometryBundle:
    """Build per-mode geometries and compiled generator terms at ``alphas``."""
    alphas = np.asarray(alphas, dtype=complex)
    geos = []
    for k, (spec, alpha) in enumerate(zip(specs, alphas)):
        geos.append(
            build_mode_geometry(
                spec.with_alpha(alpha), extra_degree, svd_cutoff, mode_index=k
            )
        )
    dims = tuple(g.d for g in geos)
    norms = np.array([g.norm_S for g in geos])
    spectator = np.array(
        [prod(float(n) for j, n in enumerate(norms) if j != k) for k in range(len(geos))]
    )
    return GeometryBundle(
        modes=geos,
        dims=dims,
        D=prod(dims),
        terms=compile_terms(flat_terms, geos),
        alphas=alphas,
        spectator_norms=spectator,
    )
