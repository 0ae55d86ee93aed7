import numpy as np
import pytest

from ladder_tdvp.basis import LadderBasisSpec, ladder_fock_vectors
from ladder_tdvp.fock import lowering_operator, poly_to_matrix


def fock_gram_matrix(spec: LadderBasisSpec, cutoff: int) -> np.ndarray:
    """Brute-force Gram matrix of the ladder states from Fock coefficients."""
    V = ladder_fock_vectors(spec, cutoff)
    return V.conj() @ V.T


def fock_operator_matrix(poly, spec: LadderBasisSpec, cutoff: int) -> np.ndarray:
    """Brute-force <phi_m|O|phi_n> through the truncated Fock expansion."""
    V = ladder_fock_vectors(spec, cutoff)
    O = poly_to_matrix(poly, (cutoff,))
    return V.conj() @ O @ V.T


def random_density_matrix(rng, dim: int) -> np.ndarray:
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = A @ A.conj().T
    return rho / np.real(np.trace(rho))


def lindblad_rhs_dense(H, jumps, rho):
    out = -1j * (H @ rho - rho @ H)
    for rate, L in jumps:
        Ld = L.conj().T
        LdL = Ld @ L
        out += rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
