"""Variational dynamics of driven-dissipative bosonic modes.

Simulates Lindblad dynamics of coupled bosonic modes in co-moving
photon-added coherent-state (or cat-state) ladder bases, with a truncated
Fock-space reference solver for verification and a batch CLI for named
benchmark scenarios.
"""

__version__ = "0.1.0"

from .operators import OperatorPolynomial
from .basis import LadderBasisSpec, OverlapMatrix, Sector, build_overlap
from .models import (
    DriveSchedule,
    Dissipator,
    HamiltonianTerm,
    KrausTerm,
    KrausTermList,
    ModelSpec,
    build_cat_chain,
    build_dimer,
    build_kerr_driven,
    build_two_photon_kerr,
    kraus_terms,
)
from .engine import (
    EngineConfig,
    Trajectory,
    VariationalState,
    coherent_state,
    cat_state,
    embed_product_state,
    evolve,
)
from .fock import FockDensityMatrix, evolve_fock, ladder_to_fock

__all__ = [
    "OperatorPolynomial",
    "LadderBasisSpec",
    "OverlapMatrix",
    "Sector",
    "build_overlap",
    "DriveSchedule",
    "Dissipator",
    "HamiltonianTerm",
    "KrausTerm",
    "KrausTermList",
    "ModelSpec",
    "build_cat_chain",
    "build_dimer",
    "build_kerr_driven",
    "build_two_photon_kerr",
    "kraus_terms",
    "EngineConfig",
    "Trajectory",
    "VariationalState",
    "coherent_state",
    "cat_state",
    "embed_product_state",
    "evolve",
    "FockDensityMatrix",
    "evolve_fock",
    "ladder_to_fock",
]
