import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fock_gram_matrix, fock_operator_matrix
from ladder_tdvp.basis import (
    LadderBasisSpec,
    Sector,
    build_overlap,
    ladder_fock_vectors,
    operator_matrix,
    tangent_overlap,
)
from ladder_tdvp.operators import OperatorPolynomial as OP


complex_alphas = st.complex_numbers(
    min_magnitude=0.05, max_magnitude=2.5, allow_nan=False, allow_infinity=False
)


def wirtinger_derivative(spec, h=1e-6):
    """Finite-difference d/d_alpha of the overlap with conj(alpha) fixed."""
    def S_at(al):
        return build_overlap(spec.with_alpha(al), 1).restricted()

    a = spec.alpha
    dx = (S_at(a + h) - S_at(a - h)) / (2 * h)
    dy = (S_at(a + 1j * h) - S_at(a - 1j * h)) / (2 * h)
    return 0.5 * (dx - 1j * dy)


class TestOverlapRecursion:
    def test_fock_limit(self):
        S = build_overlap(LadderBasisSpec(0.0, 2), 0).restricted()
        assert np.allclose(S, np.diag([1.0, 1.0, 2.0]), atol=1e-14)

    def test_cat_seed(self):
        S = build_overlap(LadderBasisSpec(2.0, 0, Sector.Z2CAT), 0).restricted()
        r = 4.0
        expected = np.diag([4 * np.cosh(r), 4 * np.sinh(r)])
        assert np.allclose(S, expected, rtol=1e-13)

    def test_plain_against_fock_sum(self):
        spec = LadderBasisSpec(0.5 + 0.3j, 4)
        S = build_overlap(spec, 0).restricted()
        G = fock_gram_matrix(spec, 60)
        assert np.max(np.abs(S - G) / np.abs(G)) < 1e-12

    def test_random_draws_against_fock_sum(self, rng):
        # 50 draws, |alpha| <= 3, N <= 6, cutoff-80 oracle, 1e-10 relative
        for _ in range(50):
            alpha = rng.uniform(-3, 3) + 1j * rng.uniform(-3, 3)
            if abs(alpha) > 3 or abs(alpha) < 1e-3:
                alpha = 1.5 * alpha / max(abs(alpha), 1e-3)
            N = int(rng.integers(0, 7))
            sector = Sector.Z2CAT if rng.random() < 0.4 else Sector.PLAIN
            spec = LadderBasisSpec(alpha, N, sector)
            S = build_overlap(spec, 0).restricted()
            G = fock_gram_matrix(spec, 80)
            scale = np.abs(G) + np.max(np.abs(G)) * 1e-30
            assert np.max(np.abs(S - G) / scale) < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(alpha=complex_alphas, depth=st.integers(0, 4))
    def test_hermitian_and_psd(self, alpha, depth):
        spec = LadderBasisSpec(alpha, depth, Sector.Z2CAT)
        S = build_overlap(spec, 2)
        M = S.entries
        assert np.allclose(M, M.conj().T, rtol=1e-12, atol=1e-12)
        evals = np.linalg.eigvalsh(S.restricted())
        assert evals[0] >= -1e-10 * np.linalg.norm(S.restricted())

    def test_cat_cross_parity_blocks_vanish(self):
        spec = LadderBasisSpec(1.3 - 0.4j, 4, Sector.Z2CAT)
        S = build_overlap(spec, 1).entries
        assert np.max(np.abs(S[0::2, 1::2])) == 0.0
        assert np.max(np.abs(S[1::2, 0::2])) == 0.0

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            LadderBasisSpec(1.0, -1)
        with pytest.raises(ValueError):
            LadderBasisSpec(0.0, 2, Sector.Z2CAT)
        with pytest.raises(ValueError):
            build_overlap(LadderBasisSpec(1.0, 2), -1)


class TestOperatorMatrix:
    def test_lowering_eigenvalue_relation(self):
        spec = LadderBasisSpec(0.7 + 0.2j, 3)
        S = build_overlap(spec, 2)
        A = operator_matrix(OP.lowering(), spec, S)
        assert np.allclose(A[:, 0], spec.alpha * S.restricted()[:, 0], rtol=1e-12)

    def test_identity_returns_overlap(self):
        spec = LadderBasisSpec(1.1 - 0.6j, 3, Sector.Z2CAT)
        S = build_overlap(spec, 1)
        assert np.array_equal(operator_matrix(OP.identity(), spec, S), S.restricted())

    def test_number_operator_against_fock_sum(self):
        spec = LadderBasisSpec(1.0, 3)
        S = build_overlap(spec, 2)
        Nmat = operator_matrix(OP.number(), spec, S)
        ref = fock_operator_matrix(OP.number(), spec, 60)
        assert np.max(np.abs(Nmat - ref)) < 1e-12 * np.max(np.abs(ref))

    @settings(max_examples=20, deadline=None)
    @given(alpha=complex_alphas, depth=st.integers(0, 3),
           p=st.integers(0, 2), q=st.integers(0, 2))
    def test_monomials_against_fock_sum(self, alpha, depth, p, q):
        spec = LadderBasisSpec(alpha, depth, Sector.Z2CAT)
        S = build_overlap(spec, p + 1)
        poly = OP.monomial(1.0, 0, p, q, 1)
        M = operator_matrix(poly, spec, S)
        ref = fock_operator_matrix(poly, spec, 70)
        assert np.max(np.abs(M - ref)) < 1e-9 * max(np.max(np.abs(ref)), 1.0)

    def test_composition_through_inverse(self):
        # <adag a> matrix equals Op(adag) S^-1 Op(a) when a keeps the span
        spec = LadderBasisSpec(0.8 + 0.1j, 3)
        S = build_overlap(spec, 2)
        Sd = S.restricted()
        A = operator_matrix(OP.lowering(), spec, S)
        Ad = operator_matrix(OP.raising(), spec, S)
        Nmat = operator_matrix(OP.number(), spec, S)
        combined = Ad @ np.linalg.solve(Sd, A)
        assert np.allclose(Nmat, combined, rtol=1e-9)

    def test_cat_parity_selection_rule(self):
        spec = LadderBasisSpec(1.4, 3, Sector.Z2CAT)
        S = build_overlap(spec, 3)
        odd = operator_matrix(OP.lowering(), spec, S)
        even = operator_matrix(OP.number(), spec, S)
        # odd total degree: diagonal-parity blocks vanish
        assert np.max(np.abs(odd[0::2, 0::2])) < 1e-12 * np.max(np.abs(odd))
        assert np.max(np.abs(odd[1::2, 1::2])) < 1e-12 * np.max(np.abs(odd))
        # even total degree: cross-parity blocks vanish
        assert np.max(np.abs(even[0::2, 1::2])) < 1e-12 * np.max(np.abs(even))

    def test_extent_violation_raises(self):
        spec = LadderBasisSpec(0.5, 2)
        S = build_overlap(spec, 1)
        with pytest.raises(ValueError):
            operator_matrix(OP.monomial(1.0, 0, 2, 0, 1), spec, S)


class TestTangentOverlap:
    def test_fock_case(self):
        spec = LadderBasisSpec(0.0, 1)
        S = build_overlap(spec, 2)
        T = tangent_overlap(spec, S)
        assert np.allclose(T, [[0.0, 0.0], [1.0, 0.0]], atol=1e-14)

    def test_block_shift_consistency(self):
        # identical arithmetic path: the tangent is a shifted read of the table
        spec = LadderBasisSpec(0.9 - 0.2j, 3, Sector.Z2CAT)
        S = build_overlap(spec, 2)
        T = tangent_overlap(spec, S)
        d, npar = spec.dim, spec.n_parities
        assert np.array_equal(T, S.entries[:d, npar : npar + d])

    def test_plain_matches_finite_difference(self):
        spec = LadderBasisSpec(0.7, 2)
        S = build_overlap(spec, 1)
        T = tangent_overlap(spec, S)
        assert np.max(np.abs(T - wirtinger_derivative(spec))) < 1e-6

    def test_cat_matches_finite_difference(self):
        # the derivative of a cat-ladder state is the next state up the same
        # (physical-parity) ladder; the tangent therefore lives in the
        # diagonal parity blocks
        spec = LadderBasisSpec(2.0, 2, Sector.Z2CAT)
        S = build_overlap(spec, 1)
        T = tangent_overlap(spec, S)
        fd = wirtinger_derivative(spec)
        assert np.max(np.abs(T - fd)) < 1e-5 * np.max(np.abs(T))
        assert np.max(np.abs(T[0::2, 1::2])) == 0.0
        assert np.max(np.abs(T[1::2, 0::2])) == 0.0

    def test_extent_too_small(self):
        spec = LadderBasisSpec(0.5, 2)
        S = build_overlap(spec, 0)
        with pytest.raises(ValueError):
            tangent_overlap(spec, S)


class TestFockVectors:
    def test_plain_norms(self):
        spec = LadderBasisSpec(0.9 + 0.4j, 3)
        V = ladder_fock_vectors(spec, 60)
        S = build_overlap(spec, 0).restricted()
        assert np.allclose(np.sum(np.abs(V) ** 2, axis=1), np.real(np.diag(S)), rtol=1e-12)

    def test_cat_parity_support(self):
        spec = LadderBasisSpec(1.2, 2, Sector.Z2CAT)
        V = ladder_fock_vectors(spec, 40)
        for m in range(3):
            for p in range(2):
                row = V[spec.flat_index(m, p)]
                odd_mass = np.sum(np.abs(row[1::2]) ** 2)
                even_mass = np.sum(np.abs(row[0::2]) ** 2)
                if p == 0:
                    assert odd_mass < 1e-28 * even_mass
                else:
                    assert even_mass < 1e-28 * odd_mass
