"""Multi-mode Lindblad models as operator polynomials.

A model is a Hamiltonian (polynomial terms with piecewise-constant scalar
drives) plus a list of dissipators with non-negative rates.  The generator is
expanded into an operator-sum of (left, right, coefficient) polynomial pairs:
the commutator contributes ``(H, 1, -i)`` and ``(1, H, +i)``, and each
dissipator D[L] with rate g contributes ``(L, Ldag, g)``, ``(LdagL, 1, -g/2)``
and ``(1, LdagL, -g/2)``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .operators import OperatorPolynomial


@dataclass(frozen=True)
class DriveSchedule:
    """Piecewise-constant complex multiplier on a Hamiltonian term.

    ``segments`` are (t_start, value) pairs ordered by t_start; evaluation at
    time t returns the value of the last segment with t_start <= t.
    """

    segments: tuple[tuple[float, complex], ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("schedule needs at least one segment")
        starts = [s[0] for s in self.segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly increasing")
        object.__setattr__(
            self,
            "segments",
            tuple((float(t), complex(v)) for t, v in self.segments),
        )

    @staticmethod
    def constant(value: complex) -> "DriveSchedule":
        return DriveSchedule(((-math.inf, complex(value)),))

    @staticmethod
    def piecewise(segments) -> "DriveSchedule":
        return DriveSchedule(tuple(segments))

    @property
    def is_constant(self) -> bool:
        return len(self.segments) == 1

    def value(self, t: float) -> complex:
        starts = [s[0] for s in self.segments]
        idx = bisect.bisect_right(starts, t) - 1
        if idx < 0:
            raise ValueError(f"schedule undefined at t={t}")
        return self.segments[idx][1]

    def conjugated(self) -> "DriveSchedule":
        return DriveSchedule(
            tuple((t, complex(v).conjugate()) for t, v in self.segments)
        )

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        """Segment starts strictly inside (t0, t1)."""
        return [t for t, _ in self.segments if t0 < t < t1 and math.isfinite(t)]


@dataclass(frozen=True)
class HamiltonianTerm:
    poly: OperatorPolynomial
    schedule: DriveSchedule


@dataclass(frozen=True)
class Dissipator:
    jump: OperatorPolynomial
    rate: float
    jump_dag: OperatorPolynomial = field(init=False)
    jump_dag_jump: OperatorPolynomial = field(init=False)

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("dissipator rates must be non-negative")
        object.__setattr__(self, "jump_dag", self.jump.dagger())
        object.__setattr__(self, "jump_dag_jump", self.jump_dag * self.jump)


@dataclass(frozen=True)
class ModelSpec:
    """M modes, Hamiltonian terms with drives, dissipators with rates."""

    modes: int
    hamiltonian: tuple[HamiltonianTerm, ...]
    dissipators: tuple[Dissipator, ...]

    def __post_init__(self):
        for term in self.hamiltonian:
            if term.poly.modes != self.modes:
                raise ValueError("Hamiltonian term has wrong mode count")
        for dd in self.dissipators:
            if dd.jump.modes != self.modes:
                raise ValueError("dissipator jump has wrong mode count")
        for t in self._hermiticity_probes():
            if not self.hamiltonian_at(t).is_hermitian(tol=1e-10):
                raise ValueError(f"Hamiltonian is not Hermitian at t={t}")

    def _hermiticity_probes(self) -> list[float]:
        probes = {0.0}
        for term in self.hamiltonian:
            for t0, _ in term.schedule.segments:
                if math.isfinite(t0):
                    probes.update((t0, t0 - 1e-6, t0 + 1e-6))
        return sorted(probes)

    def hamiltonian_at(self, t: float) -> OperatorPolynomial:
        H = OperatorPolynomial.zero(self.modes)
        for term in self.hamiltonian:
            H = H + term.schedule.value(t) * term.poly
        return H

    def breakpoints(self, t0: float, t1: float) -> list[float]:
        pts: set[float] = set()
        for term in self.hamiltonian:
            pts.update(term.schedule.breakpoints(t0, t1))
        return sorted(pts)

    def max_raising_power(self, mode: int) -> int:
        """Highest creation power over every generator polynomial on a mode."""
        powers = [0]
        for term in self.hamiltonian:
            powers.append(term.poly.max_raising_power(mode))
        for dd in self.dissipators:
            powers.append(dd.jump.max_raising_power(mode))
            powers.append(dd.jump_dag.max_raising_power(mode))
            powers.append(dd.jump_dag_jump.max_raising_power(mode))
        return max(powers)


@dataclass(frozen=True)
class KrausTerm:
    left: OperatorPolynomial
    right: OperatorPolynomial
    coeff: complex


@dataclass(frozen=True)
class KrausTermList:
    modes: int
    terms: tuple[KrausTerm, ...]


def kraus_terms(model: ModelSpec, t: float) -> KrausTermList:
    """Operator-sum expansion of the Lindblad generator at time t."""
    ident = OperatorPolynomial.identity(model.modes)
    terms: list[KrausTerm] = []
    H = model.hamiltonian_at(t)
    if not H.is_zero():
        terms.append(KrausTerm(H, ident, -1.0j))
        terms.append(KrausTerm(ident, H, 1.0j))
    for dd in model.dissipators:
        if dd.rate == 0.0:
            continue
        terms.append(KrausTerm(dd.jump, dd.jump_dag, dd.rate))
        terms.append(KrausTerm(dd.jump_dag_jump, ident, -0.5 * dd.rate))
        terms.append(KrausTerm(ident, dd.jump_dag_jump, -0.5 * dd.rate))
    return KrausTermList(modes=model.modes, terms=tuple(terms))


# -- benchmark model builders ----------------------------------------------


def build_kerr_driven(U: float, F: float, kappa: float) -> ModelSpec:
    """Single-photon-driven Kerr resonator with single-photon loss.

    H = (U/2) adag^2 a^2 + F (a + adag), dissipator (a, kappa).
    """
    OP = OperatorPolynomial
    terms = []
    if U != 0.0:
        kerr = OP.monomial(0.5 * U, 0, 2, 2, 1)
        terms.append(HamiltonianTerm(kerr, DriveSchedule.constant(1.0)))
    if F != 0.0:
        drive = OP.monomial(F, 0, 0, 1, 1) + OP.monomial(F, 0, 1, 0, 1)
        terms.append(HamiltonianTerm(drive, DriveSchedule.constant(1.0)))
    return ModelSpec(
        modes=1,
        hamiltonian=tuple(terms),
        dissipators=(Dissipator(OP.lowering(0, 1), kappa),),
    )


def build_dimer(
    U: float, F: float, J: float, Delta: float, kappa: float
) -> ModelSpec:
    """Two coupled Kerr modes, drive on mode 1 only, loss on both.

    Per mode: -Delta adag_i a_i + (U/2) adag_i^2 a_i^2; hopping
    -J (adag_1 a_2 + a_1 adag_2); drive F (adag_1 + a_1).
    """
    OP = OperatorPolynomial
    terms = []
    for i in range(2):
        onsite = OP.monomial(-Delta, i, 1, 1, 2) + OP.monomial(0.5 * U, i, 2, 2, 2)
        terms.append(HamiltonianTerm(onsite, DriveSchedule.constant(1.0)))
    if J != 0.0:
        hop = OP.raising(0, 2) * OP.lowering(1, 2) + OP.lowering(0, 2) * OP.raising(1, 2)
        terms.append(HamiltonianTerm(-J * hop, DriveSchedule.constant(1.0)))
    if F != 0.0:
        drive = OP.monomial(F, 0, 1, 0, 2) + OP.monomial(F, 0, 0, 1, 2)
        terms.append(HamiltonianTerm(drive, DriveSchedule.constant(1.0)))
    return ModelSpec(
        modes=2,
        hamiltonian=tuple(terms),
        dissipators=(
            Dissipator(OP.lowering(0, 2), kappa),
            Dissipator(OP.lowering(1, 2), kappa),
        ),
    )


def build_two_photon_kerr(
    G: DriveSchedule, U: float, eta: float, F_x: float
) -> ModelSpec:
    """Two-photon-driven Kerr resonator with two-photon loss.

    H = (G(t)/2) a^2 + (G(t)*/2) adag^2 + (U/2) adag^2 a^2 + F_x (a + adag),
    dissipator (a^2, eta).
    """
    OP = OperatorPolynomial
    terms = [
        HamiltonianTerm(OP.monomial(0.5, 0, 0, 2, 1), G),
        HamiltonianTerm(OP.monomial(0.5, 0, 2, 0, 1), G.conjugated()),
    ]
    if U != 0.0:
        terms.append(
            HamiltonianTerm(OP.monomial(0.5 * U, 0, 2, 2, 1), DriveSchedule.constant(1.0))
        )
    if F_x != 0.0:
        drive = OP.monomial(F_x, 0, 0, 1, 1) + OP.monomial(F_x, 0, 1, 0, 1)
        terms.append(HamiltonianTerm(drive, DriveSchedule.constant(1.0)))
    return ModelSpec(
        modes=1,
        hamiltonian=tuple(terms),
        dissipators=(Dissipator(OP.monomial(1.0, 0, 0, 2, 1), eta),),
    )


def build_cat_chain(M: int, G: complex, U: float, eta: float, J) -> ModelSpec:
    """Open chain of two-photon-driven Kerr modes with beam-splitter hopping.

    Every mode carries the two-photon-Kerr terms with a common constant drive
    G and loss rate eta; nearest neighbours couple through
    J_i (a_i adag_{i+1} + adag_i a_{i+1}).
    """
    if M < 2:
        raise ValueError("cat chain needs at least two modes")
    J = [float(j) for j in np.atleast_1d(J)]
    if len(J) != M - 1:
        raise ValueError(f"open chain of {M} modes needs {M - 1} hopping constants")
    OP = OperatorPolynomial
    G = complex(G)
    terms = []
    for i in range(M):
        onsite = (
            OP.monomial(0.5 * G, i, 0, 2, M)
            + OP.monomial(0.5 * np.conj(G), i, 2, 0, M)
        )
        if U != 0.0:
            onsite = onsite + OP.monomial(0.5 * U, i, 2, 2, M)
        terms.append(HamiltonianTerm(onsite, DriveSchedule.constant(1.0)))
    for i, Ji in enumerate(J):
        if Ji == 0.0:
            continue
        hop = OP.lowering(i, M) * OP.raising(i + 1, M) + OP.raising(i, M) * OP.lowering(
            i + 1, M
        )
        terms.append(HamiltonianTerm(Ji * hop, DriveSchedule.constant(1.0)))
    dissipators = tuple(
        Dissipator(OP.monomial(1.0, i, 0, 2, M), eta) for i in range(M)
    )
    return ModelSpec(modes=M, hamiltonian=tuple(terms), dissipators=dissipators)


def kerr_semiclassical_steady_state(U: float, F: float, kappa: float) -> complex:
    """Mean-field steady amplitude of the driven Kerr resonator.

    Solves n (U^2 n^2 + kappa^2/4) = F^2 for the occupation and returns
    alpha = -i F / (i U n + kappa/2).
    """
    if F == 0.0:
        return 0.0 + 0.0j
    roots = np.roots([U * U, 0.0, kappa * kappa / 4.0, -F * F])
    n = max(
        float(np.real(r)) for r in roots if abs(np.imag(r)) < 1e-9 and np.real(r) >= 0
    )
    return -1.0j * F / (1.0j * U * n + kappa / 2.0)
