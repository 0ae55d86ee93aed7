"""Normally ordered polynomials in bosonic creation/annihilation operators.

A polynomial is a sum of monomials ``c * prod_k (a_k^dag)^p_k (a_k)^q_k`` over
``M`` modes.  Products are reduced to normal order using ``[a, a^dag] = 1``,
so the type is closed under addition, multiplication and the adjoint.  These
polynomials are the common language for Hamiltonians, jump operators and
observables throughout the package.
"""

from __future__ import annotations

import numbers
from math import comb, factorial


PowersType = tuple[tuple[int, int], ...]


def _normal_order_pair(p1: int, q1: int, p2: int, q2: int):
    """Expand adag^p1 a^q1 * adag^p2 a^q2 in normal order (single mode).

    Uses a^q adag^p = sum_j j! C(q,j) C(p,j) adag^(p-j) a^(q-j).
    Yields (coefficient, adag_power, a_power) triples.
    """
    for j in range(min(q1, p2) + 1):
        c = factorial(j) * comb(q1, j) * comb(p2, j)
        yield c, p1 + p2 - j, q1 + q2 - j


class OperatorPolynomial:
    """Immutable normally ordered operator polynomial over M modes."""

    __slots__ = ("modes", "monomials")

    def __init__(self, modes: int, monomials):
        if modes < 1:
            raise ValueError("need at least one mode")
        combined: dict[PowersType, complex] = {}
        for coeff, powers in monomials:
            powers = tuple((int(p), int(q)) for p, q in powers)
            if len(powers) != modes:
                raise ValueError("monomial powers must cover every mode")
            if any(p < 0 or q < 0 for p, q in powers):
                raise ValueError("operator powers must be non-negative")
            combined[powers] = combined.get(powers, 0.0 + 0.0j) + complex(coeff)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(
            self,
            "monomials",
            tuple(
                (c, pw)
                for pw, c in sorted(combined.items())
                if c != 0.0
            ),
        )

    def __setattr__(self, *args):
        raise AttributeError("OperatorPolynomial is immutable")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def zero(modes: int = 1) -> "OperatorPolynomial":
        return OperatorPolynomial(modes, [])

    @staticmethod
    def identity(modes: int = 1) -> "OperatorPolynomial":
        powers = tuple((0, 0) for _ in range(modes))
        return OperatorPolynomial(modes, [(1.0, powers)])

    @staticmethod
    def lowering(mode: int = 0, modes: int = 1) -> "OperatorPolynomial":
        """The annihilation operator a_mode."""
        return OperatorPolynomial.monomial(1.0, mode, 0, 1, modes)

    @staticmethod
    def raising(mode: int = 0, modes: int = 1) -> "OperatorPolynomial":
        """The creation operator a_mode^dag."""
        return OperatorPolynomial.monomial(1.0, mode, 1, 0, modes)

    @staticmethod
    def number(mode: int = 0, modes: int = 1) -> "OperatorPolynomial":
        return OperatorPolynomial.monomial(1.0, mode, 1, 1, modes)

    @staticmethod
    def monomial(coeff, mode: int, adag_power: int, a_power: int, modes: int = 1):
        if not 0 <= mode < modes:
            raise ValueError(f"mode {mode} out of range for {modes} modes")
        powers = tuple(
            (adag_power, a_power) if k == mode else (0, 0) for k in range(modes)
        )
        return OperatorPolynomial(modes, [(coeff, powers)])

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "OperatorPolynomial") -> "OperatorPolynomial":
        if not isinstance(other, OperatorPolynomial):
            return NotImplemented
        if other.modes != self.modes:
            raise ValueError("mode count mismatch")
        return OperatorPolynomial(self.modes, self.monomials + other.monomials)

    def __sub__(self, other: "OperatorPolynomial") -> "OperatorPolynomial":
        return self + (-1.0) * other

    def __mul__(self, other):
        if isinstance(other, numbers.Number):
            return OperatorPolynomial(
                self.modes, [(c * other, pw) for c, pw in self.monomials]
            )
        if not isinstance(other, OperatorPolynomial):
            return NotImplemented
        if other.modes != self.modes:
            raise ValueError("mode count mismatch")
        out = []
        for c1, pw1 in self.monomials:
            for c2, pw2 in other.monomials:
                # per-mode normal-ordered expansions, combined multiplicatively
                expansions = [
                    list(_normal_order_pair(p1, q1, p2, q2))
                    for (p1, q1), (p2, q2) in zip(pw1, pw2)
                ]
                partial = [(c1 * c2, ())]
                for terms in expansions:
                    partial = [
                        (c * tc, pw + ((tp, tq),))
                        for c, pw in partial
                        for tc, tp, tq in terms
                    ]
                out.extend(partial)
        return OperatorPolynomial(self.modes, out)

    def __rmul__(self, other):
        if isinstance(other, numbers.Number):
            return self * other
        return NotImplemented

    def __neg__(self):
        return self * (-1.0)

    def dagger(self) -> "OperatorPolynomial":
        """Adjoint; (adag^p a^q)^dag = adag^q a^p is already normal ordered."""
        return OperatorPolynomial(
            self.modes,
            [
                (complex(c).conjugate(), tuple((q, p) for p, q in pw))
                for c, pw in self.monomials
            ],
        )

    # -- queries -----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.monomials

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self - self.dagger()
        scale = max((abs(c) for c, _ in self.monomials), default=0.0)
        return all(abs(c) <= tol * max(scale, 1.0) for c, _ in diff.monomials)

    def max_raising_power(self, mode: int) -> int:
        """Highest adag power on a mode; sets the required basis extension."""
        return max((pw[mode][0] for _, pw in self.monomials), default=0)

    def max_lowering_power(self, mode: int) -> int:
        return max((pw[mode][1] for _, pw in self.monomials), default=0)

    def restricted_to_mode(self, mode: int) -> "OperatorPolynomial":
        """Single-mode polynomial of the factors acting on one mode.

        Only valid for polynomials whose monomials are trivial elsewhere.
        """
        for _, pw in self.monomials:
            for k, (p, q) in enumerate(pw):
                if k != mode and (p or q):
                    raise ValueError("polynomial acts on more than one mode")
        return OperatorPolynomial(
            1, [(c, (pw[mode],)) for c, pw in self.monomials]
        )

    def __eq__(self, other):
        return (
            isinstance(other, OperatorPolynomial)
            and self.modes == other.modes
            and self.monomials == other.monomials
        )

    def __hash__(self):
        return hash((self.modes, self.monomials))

    def __repr__(self):
        if not self.monomials:
            return "OperatorPolynomial(0)"
        parts = []
        for c, pw in self.monomials:
            ops = []
            for k, (p, q) in enumerate(pw):
                if p:
                    ops.append(f"ad{k}^{p}" if p > 1 else f"ad{k}")
                if q:
                    ops.append(f"a{k}^{q}" if q > 1 else f"a{k}")
            parts.append(f"({c:.6g})*" + ("*".join(ops) if ops else "1"))
        return " + ".join(parts)
