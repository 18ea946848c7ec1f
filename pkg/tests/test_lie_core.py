from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilmix.errors import (
    AntisymmetryViolation,
    BasisNotMalcevOrdered,
    DimensionMismatch,
    JacobiViolation,
    NotNilpotent,
)
from nilmix.lie_core import (
    abelian,
    algebra_from_brackets,
    dynkin_coefficients,
    exact_array,
    filiform4,
    heisenberg,
    validate_algebra,
)
from oracles import FILIFORM4_REP, HEISENBERG2_REP, matrix_bch

rationals = st.fractions(min_value=-5, max_value=5, max_denominator=12)


def vectors(d):
    return st.lists(rationals, min_size=d, max_size=d).map(exact_array)


# -- frozen values ---------------------------------------------------------------------

def test_dynkin_coefficients_step_three():
    c = dynkin_coefficients(3)
    assert c == {(0,): 1, (1,): 1, (0, 1): Fraction(1, 2), (0, 0, 1): Fraction(1, 12),
                 (1, 0, 1): Fraction(-1, 12)}


def test_dynkin_coefficients_step_four_adds_degree_four_terms():
    c = dynkin_coefficients(4)
    assert c[(0, 1, 0, 1)] == Fraction(-1, 48)
    assert c[(1, 0, 0, 1)] == Fraction(-1, 48)


def test_heisenberg_bracket_and_bch_closed_form(heis_alg):
    x = exact_array([1, Fraction(1, 2), 3])
    y = exact_array([Fraction(-2, 3), 4, 0])
    assert list(heis_alg.bracket(x, y)) == [0, 0, 2 * (1 * 4 - Fraction(1, 2) * Fraction(-2, 3))]
    z = heis_alg.bch(x, y)
    assert list(z) == list(x + y + heis_alg.bracket(x, y) / 2)


def test_heisenberg_second_kind_roundtrip_frozen(heis_alg):
    # exp(e1) exp(e2) = exp(e1 + e2 + e3) because [e1, e2] = 2 e3
    t = exact_array([1, 1, 0])
    assert list(heis_alg.first_from_second(t)) == [1, 1, 1]
    assert list(heis_alg.second_from_first(exact_array([1, 1, 1]))) == [1, 1, 0]


def test_filiform_lower_central_series(fili_alg):
    assert fili_alg.step == 3
    assert [len(t) for t in fili_alg.lcs] == [4, 2, 1, 0]
    assert fili_alg.abelian_dim == 2


def test_abelian_algebra_is_step_one():
    a = abelian(3)
    assert a.step == 1 and a.abelian_dim == 3
    x, y = exact_array([1, 2, 3]), exact_array([4, 5, 6])
    assert list(a.bch(x, y)) == [5, 7, 9]


def test_float_and_exact_agree(fili_alg, rng):
    x = rng.normal(size=(50, 4))
    y = rng.normal(size=(50, 4))
    fx = fili_alg.bch(x, y)
    ex = fili_alg.bch(exact_array(x), exact_array(y)).astype(float)
    assert np.allclose(fx, ex, atol=1e-12)


def test_bch_matches_matrix_representation(heis_alg, fili_alg, rng):
    for alg, images in ((heis_alg, HEISENBERG2_REP), (fili_alg, FILIFORM4_REP)):
        for _ in range(20):
            x, y = rng.normal(size=alg.dim), rng.normal(size=alg.dim)
            assert np.allclose(alg.bch(x, y), matrix_bch(images, x, y), atol=1e-12)


def test_adjoint_group_matrix_conjugates_representation(fili_alg, rng):
    from oracles import nil_exp, rep
    x, v = rng.normal(size=4), rng.normal(size=4)
    g = nil_exp(rep(FILIFORM4_REP, x))
    lhs = g @ rep(FILIFORM4_REP, v) @ np.linalg.inv(g)
    rhs = rep(FILIFORM4_REP, fili_alg.adjoint_group_matrix(x) @ v)
    assert np.allclose(lhs, rhs, atol=1e-12)


# -- validation errors -----------------------------------------------------------------

def test_antisymmetry_violation():
    c = np.zeros((3, 3, 3), dtype=object)
    c[...] = Fraction(0)
    c[0, 1, 2] = Fraction(1)
    c[1, 0, 2] = Fraction(1)
    with pytest.raises(AntisymmetryViolation):
        validate_algebra(3, c)


def test_mirrored_entries_must_agree():
    with pytest.raises(AntisymmetryViolation):
        algebra_from_brackets(3, [(1, 2, 3, 1, 1), (2, 1, 3, 1, 1)])


def test_jacobi_violation_reports_triple():
    # nilpotent and Malcev ordered, but [e3, [e1, e2]] = e5 is not cancelled
    brackets = [(1, 2, 4, 1, 1), (1, 3, 5, 1, 1), (3, 4, 5, 1, 1)]
    with pytest.raises(JacobiViolation) as exc:
        algebra_from_brackets(5, brackets)
    assert exc.value.triple == (1, 2, 3)
    assert list(exc.value.defect) == [0, 0, 0, 0, 1]


def test_not_nilpotent():
    # sl2-like relations: the series never reaches zero
    brackets = [(1, 2, 3, 1, 1), (3, 1, 1, 2, 1), (3, 2, 2, -2, 1)]
    with pytest.raises(NotNilpotent):
        algebra_from_brackets(3, brackets)


def test_basis_not_malcev_ordered():
    with pytest.raises(BasisNotMalcevOrdered):
        algebra_from_brackets(3, [(2, 3, 1, 1, 1)])


def test_dimension_mismatch(heis_alg):
    with pytest.raises(DimensionMismatch):
        heis_alg.bracket(np.zeros(3), np.zeros(2))
    with pytest.raises(DimensionMismatch):
        algebra_from_brackets(3, [(1, 2, 4, 1, 1)])


# -- properties ------------------------------------------------------------------------

@given(vectors(3), vectors(3), vectors(3))
def test_heisenberg_bch_associative(x, y, z):
    alg = heisenberg(2)
    assert list(alg.bch(alg.bch(x, y), z)) == list(alg.bch(x, alg.bch(y, z)))


@given(vectors(4), vectors(4), vectors(4))
def test_filiform_bch_associative(x, y, z):
    alg = filiform4()
    assert list(alg.bch(alg.bch(x, y), z)) == list(alg.bch(x, alg.bch(y, z)))


@given(vectors(4), vectors(4))
def test_bracket_antisymmetric_and_inverse(x, y):
    alg = filiform4()
    assert list(alg.bracket(x, y)) == list(-alg.bracket(y, x))
    assert all(v == 0 for v in alg.bch(x, alg.inverse(x)))


@given(vectors(4))
def test_coordinate_roundtrip(t):
    alg = filiform4()
    assert list(alg.second_from_first(alg.first_from_second(t))) == list(t)
    assert list(alg.first_from_second(alg.second_from_first(t))) == list(t)


@given(vectors(4), vectors(4))
def test_group_mul_second_matches_bch(s, t):
    alg = filiform4()
    lhs = alg.first_from_second(alg.group_mul_second(s, t))
    rhs = alg.bch(alg.first_from_second(s), alg.first_from_second(t))
    assert list(lhs) == list(rhs)


# -- unit-bracket worked examples ------------------------------------------------------

def test_unit_heisenberg_examples():
    alg = heisenberg(1)
    assert list(alg.bracket(exact_array([2, 1, 0]), exact_array([1, -1, 0]))) == [0, 0, -3]
    assert list(alg.bch(exact_array([1, 0, 0]), exact_array([0, 1, 0]))) == [1, 1, Fraction(1, 2)]
    a, b, c = Fraction(2, 3), Fraction(-5, 7), Fraction(1, 9)
    assert list(alg.first_from_second(exact_array([a, b, c]))) == [a, b, c + a * b / 2]


def test_unit_filiform_bch_degree_three_term():
    alg = filiform4()
    z = alg.bch(exact_array([1, 0, 0, 0]), exact_array([0, 1, 0, 0]))
    assert list(z) == [1, 1, Fraction(1, 2), Fraction(1, 12)]
