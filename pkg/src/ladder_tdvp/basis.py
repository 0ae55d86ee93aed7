"""Photon-added coherent-state and cat-state ladder bases for a single mode.

A plain ladder basis is ``{adag^n ||alpha>, n = 0..N}`` built on the
unnormalized (Bargmann) coherent state ``||alpha> = exp(alpha adag)|0>``.
The cat ladder applies the same construction to the unnormalized even/odd
cat states ``||alpha> +- ||-alpha>``.

Cat-ladder states are labelled by their *physical* photon-number parity: the
basis state ``(mu, n)`` is ``adag^n`` applied to the base cat whose parity,
after adding ``n`` photons, is ``mu``.  With this labelling the overlap matrix
is block diagonal in parity, the annihilation operator flips the parity label,
and a derivative with respect to alpha is exactly a one-step shift of the
ladder index.  All derivative-like quantities therefore reduce to reading a
sufficiently extended overlap matrix at shifted indices.

Matrices are stored in a flat layout with the parity index fastest:
``i = n_parities*m + parity``.  All entries are in the raw (unscaled) state
convention; conditioning rescalings are applied downstream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from math import factorial

import numpy as np

from .operators import OperatorPolynomial


class Sector(enum.Enum):
    """Symmetry layout of a single-mode ladder basis."""

    PLAIN = "plain"
    Z2CAT = "z2cat"


@dataclass(frozen=True)
class LadderBasisSpec:
    """Single-mode variational basis: displacement, depth and sector.

    ``depth`` is the highest power of the creation operator included.  The
    plain sector has ``depth + 1`` states, the Z2 cat sector twice that
    (even/odd parity times ladder index).
    """

    alpha: complex
    depth: int
    sector: Sector = Sector.PLAIN

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("ladder depth must be non-negative")
        object.__setattr__(self, "alpha", complex(self.alpha))
        if self.sector is Sector.Z2CAT and self.alpha == 0:
            # The odd cat state vanishes identically at alpha = 0; the Gram
            # matrix is singular and no finite regularization is faithful.
            raise ValueError("Z2 cat ladder is singular at alpha = 0")

    @property
    def n_parities(self) -> int:
        return 2 if self.sector is Sector.Z2CAT else 1

    @property
    def dim(self) -> int:
        return self.n_parities * (self.depth + 1)

    def with_alpha(self, alpha: complex) -> "LadderBasisSpec":
        return LadderBasisSpec(alpha, self.depth, self.sector)

    def flat_index(self, m: int, parity: int = 0) -> int:
        return self.n_parities * m + parity


@dataclass(frozen=True)
class OverlapMatrix:
    """Gram matrix of ladder states built out to an extended depth.

    ``entries`` covers ladder indices ``0..extent`` in the flat layout, so
    block shifts (operator applications, alpha derivatives) on the depth-N
    window always stay in range.
    """

    spec: LadderBasisSpec
    extent: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def restricted(self) -> np.ndarray:
        """Overlaps of the depth-N basis states (no extension)."""
        d = self.spec.dim
        return self.entries[:d, :d]


def _plain_overlap_table(alpha: complex, extent: int, dtype=complex) -> np.ndarray:
    """Overlap recursion for the plain coherent-state ladder.

    Seeds S[0,0] = exp(|alpha|^2); first column follows the eigenvalue
    relation a||alpha,0> = alpha||alpha,0>, the interior follows the
    two-index recursion obtained from <m-1| a adag |n-1>.
    """
    alpha = dtype(alpha)
    r = (alpha * alpha.conjugate()).real
    E = extent
    S = np.zeros((E + 1, E + 1), dtype=dtype)
    S[0, 0] = np.exp(r)
    for m in range(1, E + 1):
        S[m, 0] = alpha * S[m - 1, 0]
    S[0, 1:] = np.conj(S[1:, 0])
    ns = np.arange(1, E + 1, dtype=float)
    for m in range(1, E + 1):
        row = (1.0 + r) * S[m - 1, 0:E]
        # conj(alpha) (n-1) S[m-1, n-2]; the n = 1 entry carries factor 0
        shifted = np.zeros(E, dtype=dtype)
        shifted[1:] = S[m - 1, 0 : E - 1]
        row = row + np.conj(alpha) * (ns - 1) * shifted
        if m >= 2:
            shifted2 = np.zeros(E, dtype=dtype)
            shifted2[1:] = S[m - 2, 0 : E - 1]
            row = row + (m - 1) * (ns - 1) * shifted2
            row = row + alpha * (m - 1) * S[m - 2, 0:E]
        S[m, 1:] = row
    return S


def _cat_overlap_table(alpha: complex, extent: int, dtype=complex) -> np.ndarray:
    """Overlap recursion for the Z2 cat ladder, parity-resolved.

    Returns an array indexed ``[mu, nu, m, n]``.  The recursion is the plain
    one with the parity labels flipped on the single term coming from the
    identity part of ``a adag``; cross-parity blocks stay identically zero.
    """
    alpha = dtype(alpha)
    r = (alpha * alpha.conjugate()).real
    E = extent
    S = np.zeros((2, 2, E + 1, E + 1), dtype=dtype)
    S[0, 0, 0, 0] = 4.0 * np.cosh(r)
    S[1, 1, 0, 0] = 4.0 * np.sinh(r)
    for m in range(1, E + 1):
        S[:, :, m, 0] = alpha * S[::-1, ::-1, m - 1, 0]
    for n in range(1, E + 1):
        S[:, :, 0, n] = np.conj(alpha) * S[::-1, ::-1, 0, n - 1]
    ns = np.arange(1, E + 1, dtype=float)
    for m in range(1, E + 1):
        row = S[::-1, ::-1, m - 1, 0:E] + r * S[:, :, m - 1, 0:E]
        shifted = np.zeros((2, 2, E), dtype=dtype)
        shifted[:, :, 1:] = S[:, :, m - 1, 0 : E - 1]
        row = row + np.conj(alpha) * (ns - 1) * shifted
        if m >= 2:
            shifted2 = np.zeros((2, 2, E), dtype=dtype)
            shifted2[:, :, 1:] = S[:, :, m - 2, 0 : E - 1]
            row = row + (m - 1) * (ns - 1) * shifted2
            row = row + alpha * (m - 1) * S[:, :, m - 2, 0:E]
        S[:, :, m, 1:] = row
    return S


def overlap_table(spec: LadderBasisSpec, extent: int, dtype=complex) -> np.ndarray:
    """Flat-layout overlap table out to ``extent`` in the requested dtype.

    ``np.clongdouble`` is used internally where the near-singular corner
    geometry would otherwise cancel past double precision.
    """
    if spec.sector is Sector.PLAIN:
        return _plain_overlap_table(spec.alpha, extent, dtype)
    table = _cat_overlap_table(spec.alpha, extent, dtype)
    return np.ascontiguousarray(
        table.transpose(2, 0, 3, 1).reshape(2 * (extent + 1), 2 * (extent + 1))
    )


def build_overlap(spec: LadderBasisSpec, extra_degree: int) -> OverlapMatrix:
    """Build the ladder overlap matrix out to depth + extra_degree."""
    if extra_degree < 0:
        raise ValueError("extra_degree must be non-negative")
    extent = spec.depth + extra_degree
    flat = overlap_table(spec, extent, complex)
    return OverlapMatrix(spec=spec, extent=extent, entries=flat)


# -- operator action on ket labels ----------------------------------------


def ket_lowering(spec: LadderBasisSpec, extent: int) -> np.ndarray:
    """Matrix of ``a`` acting on ket coefficient vectors over extended labels.

    Plain: a||alpha,n> = alpha ||alpha,n> + n ||alpha,n-1>.
    Cat:   both terms flip the parity label.
    """
    npar = spec.n_parities
    dim = npar * (extent + 1)
    K = np.zeros((dim, dim), dtype=complex)
    for n in range(extent + 1):
        for p in range(npar):
            col = npar * n + p
            pf = (p + 1) % npar  # parity flip; identity in the plain sector
            K[npar * n + pf, col] += spec.alpha
            if n > 0:
                K[npar * (n - 1) + pf, col] += n
    return K


def ket_raising(spec: LadderBasisSpec, extent: int) -> np.ndarray:
    """Matrix of ``adag`` on ket labels: shifts the ladder index up one.

    The top label column is left empty; callers must validate that monomial
    creation powers keep every reachable label within the extent.
    """
    npar = spec.n_parities
    dim = npar * (extent + 1)
    K = np.zeros((dim, dim), dtype=complex)
    for n in range(extent):
        for p in range(npar):
            pf = (p + 1) % npar
            K[npar * (n + 1) + pf, npar * n + p] = 1.0
    return K


def monomial_ket_matrix(
    spec: LadderBasisSpec, extent: int, adag_power: int, a_power: int
) -> np.ndarray:
    """Ket-space matrix of the normally ordered monomial adag^p a^q."""
    npar = spec.n_parities
    dim = npar * (extent + 1)
    K = np.eye(dim, dtype=complex)
    if a_power:
        K = np.linalg.matrix_power(ket_lowering(spec, extent), a_power) @ K
    if adag_power:
        K = np.linalg.matrix_power(ket_raising(spec, extent), adag_power) @ K
    return K


def operator_matrix(
    poly: OperatorPolynomial, spec: LadderBasisSpec, S: OverlapMatrix
) -> np.ndarray:
    """Matrix elements <phi_m| O |phi_n> of a single-mode polynomial.

    Every monomial is reduced to a linear combination of extended overlap
    entries by rewriting the operator action on ket labels; the creation
    power must fit inside the extension of ``S``.
    """
    if poly.modes != 1:
        raise ValueError("operator_matrix expects a single-mode polynomial")
    if S.spec != spec:
        raise ValueError("overlap matrix was built for a different basis spec")
    d = spec.dim
    out = np.zeros((d, d), dtype=complex)
    for coeff, powers in poly.monomials:
        p, q = powers[0]
        if spec.depth + p > S.extent:
            raise ValueError(
                f"monomial adag^{p} needs extent {spec.depth + p}, "
                f"overlap built to {S.extent}"
            )
        K = monomial_ket_matrix(spec, S.extent, p, q)
        out += coeff * (S.entries @ K)[:d, :d]
    return out


def tangent_overlap(spec: LadderBasisSpec, S: OverlapMatrix) -> np.ndarray:
    """Matrix <phi_m | d phi_n / d alpha>: a one-step ladder shift of the ket.

    In both sectors the alpha derivative of a basis state is the next state
    up the same ladder (the derivative of a base cat is adag applied to the
    opposite base cat, which restores the physical parity), so the tangent is
    the overlap matrix read at a ket index shifted by one ladder step.
    """
    if S.extent < spec.depth + 1:
        raise ValueError("overlap extent too small for tangent block shift")
    d = spec.dim
    npar = spec.n_parities
    return np.array(S.entries[:d, npar : npar + d])


# -- Fock-space embedding ---------------------------------------------------


def ladder_fock_vectors(spec: LadderBasisSpec, cutoff: int) -> np.ndarray:
    """Fock coefficients of every (unnormalized) basis state, rows = states.

    Plain state n:   adag^n sum_j alpha^j/sqrt(j!) |j>.
    Cat state (mu,m): adag^m applied to the base cat of parity mu*(-1)^m.
    """
    d = spec.dim
    npar = spec.n_parities
    V = np.zeros((d, cutoff + 1), dtype=complex)
    js = np.arange(cutoff + 1)
    sqrt_fact = np.sqrt([float(factorial(int(j))) for j in js])
    coh = spec.alpha ** js / sqrt_fact
    coh_neg = (-spec.alpha) ** js / sqrt_fact
    for m in range(spec.depth + 1):
        for p in range(npar):
            if spec.sector is Sector.PLAIN:
                base = coh
            else:
                sign = 1.0 if p == 0 else -1.0
                base_parity = sign * (-1.0) ** m
                base = coh + base_parity * coh_neg
            row = np.zeros(cutoff + 1, dtype=complex)
            if m <= cutoff:
                # adag^m |j> = sqrt((j+m)!/j!) |j+m>
                src = base[: cutoff + 1 - m]
                ratio = sqrt_fact[m:] / sqrt_fact[: cutoff + 1 - m]
                row[m:] = src * ratio
            V[spec.flat_index(m, p)] = row
    return V


def state_norm_squares(spec: LadderBasisSpec, S: OverlapMatrix) -> np.ndarray:
    """Exact squared norms of the basis states (diagonal of the Gram)."""
    d = spec.dim
    return np.real(np.diag(S.entries[:d, :d])).copy()
