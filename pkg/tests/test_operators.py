import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ladder_tdvp.fock import poly_to_matrix
from ladder_tdvp.operators import OperatorPolynomial as OP


def test_identity_and_zero():
    ident = OP.identity(2)
    assert len(ident.monomials) == 1
    assert OP.zero(2).is_zero()
    assert (ident - ident).is_zero()


def test_normal_order_product_single_mode():
    # a * adag = adag a + 1
    prod = OP.lowering() * OP.raising()
    expected = OP.number() + OP.identity()
    assert prod == expected


def test_normal_order_powers():
    # a^2 adag^2 = adag^2 a^2 + 4 adag a + 2
    prod = OP.monomial(1.0, 0, 0, 2, 1) * OP.monomial(1.0, 0, 2, 0, 1)
    expected = (
        OP.monomial(1.0, 0, 2, 2, 1)
        + 4.0 * OP.number()
        + 2.0 * OP.identity()
    )
    assert prod == expected


def test_dagger_and_hermiticity():
    drive = OP.lowering() + OP.raising()
    assert drive.is_hermitian()
    assert drive.dagger() == drive
    g = 0.5j * OP.monomial(1.0, 0, 0, 2, 1)
    assert not g.is_hermitian()
    assert (g + g.dagger()).is_hermitian()


def test_jump_products_are_normal_ordered():
    L = OP.monomial(1.0, 0, 0, 2, 1)  # a^2
    LdL = L.dagger() * L
    assert LdL == OP.monomial(1.0, 0, 2, 2, 1)


def test_multimode_product_independent_modes():
    hop = OP.lowering(0, 2) * OP.raising(1, 2)
    ((coeff, powers),) = hop.monomials
    assert coeff == 1.0
    assert powers == ((0, 1), (1, 0))


def test_mode_bounds_checked():
    with pytest.raises(ValueError):
        OP.monomial(1.0, 2, 1, 0, 2)
    with pytest.raises(ValueError):
        OP.lowering(0, 1) + OP.lowering(0, 2)


@settings(max_examples=40, deadline=None)
@given(
    p1=st.integers(0, 2), q1=st.integers(0, 2),
    p2=st.integers(0, 2), q2=st.integers(0, 2),
)
def test_products_match_fock_matrices(p1, q1, p2, q2):
    # normal ordering must agree with literal operator products in Fock space
    cutoff = 12
    A = OP.monomial(1.0, 0, p1, q1, 1)
    B = OP.monomial(0.7 - 0.2j, 0, p2, q2, 1)
    prod = A * B
    MA = poly_to_matrix(A, (cutoff,))
    MB = poly_to_matrix(B, (cutoff,))
    MP = poly_to_matrix(prod, (cutoff,))
    # the top (p1+p2) rows feel the cutoff; compare on the protected block
    keep = cutoff + 1 - (p1 + p2)
    direct = (MA @ MB)[:keep, :keep]
    assert np.allclose(MP[:keep, :keep], direct, atol=1e-10)


def test_max_powers():
    poly = OP.monomial(2.0, 0, 3, 1, 2) + OP.monomial(1.0, 1, 0, 2, 2)
    assert poly.max_raising_power(0) == 3
    assert poly.max_raising_power(1) == 0
    assert poly.max_lowering_power(1) == 2


def test_restricted_to_mode():
    poly = OP.monomial(1.5, 1, 2, 1, 3)
    single = poly.restricted_to_mode(1)
    assert single.modes == 1
    assert single.monomials[0][1] == ((2, 1),)
    hop = OP.lowering(0, 2) * OP.raising(1, 2)
    with pytest.raises(ValueError):
        hop.restricted_to_mode(0)
