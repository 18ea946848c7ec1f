import math
from itertools import product

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from nilmix.errors import (
    BracketNotPreserved,
    DimensionMismatch,
    LatticeNotPreserved,
    NotUnimodular,
    SubspaceRational,
    ZeroDirection,
)
from nilmix.lie_core import exact_array, heisenberg
from nilmix.nilmanifold import Nilmanifold, torus
from nilmix.spectral import (
    diophantine_constant,
    generic_direction,
    integer_relation,
    is_ergodic,
    jordan_split,
    primary_decomposition,
    rational_hull,
    root_of_unity_probe,
    validate_automorphism,
)

GOLDEN = (1 + math.sqrt(5)) / 2


# -- validation ------------------------------------------------------------------------

def test_heisenberg_matrix_needs_scaled_bracket():
    # on [e1, e2] = e3 the image of exp(e2) is exp(e1 + e2), which has a half in e3
    X = Nilmanifold(heisenberg(1))
    with pytest.raises(LatticeNotPreserved) as exc:
        validate_automorphism(X, [[2, 1, 0], [1, 1, 0], [0, 0, 1]])
    assert exc.value.generator == 1


def test_bracket_not_preserved(H):
    with pytest.raises(BracketNotPreserved) as exc:
        validate_automorphism(H, [[2, 1, 0], [1, 1, 0], [0, 0, 2]])
    assert exc.value.pair == (0, 1)


def test_not_unimodular():
    with pytest.raises(NotUnimodular):
        validate_automorphism(torus(2), [[2, 0], [0, 1]])


def test_dimension_mismatch(T2):
    with pytest.raises(DimensionMismatch):
        validate_automorphism(T2, [[1, 0, 0], [0, 1, 0], [0, 0, 1]])


def test_heisenberg_centre_scales_by_determinant(H):
    a = validate_automorphism(H, [[1, 1, 0], [1, 0, 0], [0, 0, -1]])
    assert a.matrix[2, 2] == -1


def test_powers_exact(cat):
    A = cat.matrix
    assert (cat.power(3) == A.dot(A).dot(A)).all()
    eye = cat.power(4).dot(cat.power(-4))
    assert all(eye[i, j] == (i == j) for i in range(2) for j in range(2))


# -- ergodicity ------------------------------------------------------------------------

def test_cat_map_certificate(cat):
    c = is_ergodic(cat)
    assert c.ergodic and c.char_poly == [1, -3, 1] and c.orders_checked == [1, 2, 3, 4, 6]


def test_identity_not_ergodic(identity_aut):
    c = is_ergodic(identity_aut)
    assert not c.ergodic and c.cyclotomic_factor == 1


def test_rotation_not_ergodic(T2):
    c = is_ergodic(validate_automorphism(T2, [[0, -1], [1, 0]]))
    assert not c.ergodic and c.cyclotomic_factor == 4


def test_heisenberg_ergodic(heis_aut):
    assert is_ergodic(heis_aut).ergodic


unimodular = st.sampled_from([m for m in product(range(-4, 5), repeat=4)
                              if abs(m[0] * m[3] - m[1] * m[2]) == 1])


@given(unimodular)
def test_certificate_matches_probe(m):
    a = validate_automorphism(torus(2), [[m[0], m[1]], [m[2], m[3]]])
    c = is_ergodic(a)
    assert root_of_unity_probe(c.char_poly) == (not c.ergodic)


@given(st.lists(st.integers(-3, 3), min_size=2, max_size=2))
def test_companion_matrices_in_dim_three(coeffs):
    # x^3 + a x^2 + b x + 1: unimodular companion matrices
    a, b = coeffs
    M = [[0, 0, -1], [1, 0, -b], [0, 1, -a]]
    c = is_ergodic(validate_automorphism(torus(3), M))
    assert root_of_unity_probe(c.char_poly) == (not c.ergodic)


# -- Jordan split ----------------------------------------------------------------------

def test_cat_map_blocks(cat):
    s = jordan_split(cat)
    ev = sorted(b.eigenvalue.real for b in s.blocks)
    assert ev == pytest.approx([(3 - math.sqrt(5)) / 2, (3 + math.sqrt(5)) / 2])
    assert s.residual < 1e-12
    u = s.unstable_basis[:, 0]
    assert abs(u[1] / u[0]) == pytest.approx(GOLDEN - 1)


def test_heisenberg_central_direction(heis_aut):
    s = jordan_split(heis_aut)
    assert s.to_dict()["dims"] == {"unstable": 1, "stable": 1, "central": 1}
    c = s.central_basis[:, 0]
    assert np.allclose(np.abs(c) / np.linalg.norm(c), [0, 0, 1])


def test_rotation_gives_complex_block(T2):
    s = jordan_split(validate_automorphism(T2, [[0, -1], [1, 0]]))
    assert len(s.blocks) == 1 and s.blocks[0].kind == "complex"
    assert abs(s.blocks[0].eigenvalue.imag) == pytest.approx(1.0)


def test_shear_gives_size_two_block(T2):
    s = jordan_split(validate_automorphism(T2, [[1, 0], [1, 1]]))
    assert [b.size for b in s.blocks] == [2]


def test_primary_decomposition_dims(heis_aut):
    comps = primary_decomposition(heis_aut)
    assert sorted(c.basis.shape[1] if hasattr(c.basis, "shape") else len(c.basis) for c in comps) == [1, 2]


@given(st.lists(st.integers(-3, 3), min_size=2, max_size=2))
def test_split_reassembles(coeffs):
    a, b = coeffs
    M = np.array([[0, 0, -1], [1, 0, -b], [0, 1, -a]], dtype=float)
    aut = validate_automorphism(torus(3), M.astype(int).tolist())
    try:
        s = jordan_split(aut)
    except Exception as exc:  # ill-conditioned repeated roots are allowed to refuse
        assume(False)
        raise exc
    B, J = s.assembled()
    assert np.allclose(M @ B, B @ J, atol=1e-8)
    assert s.unstable_basis.shape[1] + s.stable_basis.shape[1] + s.central_basis.shape[1] == 3


# -- rational hull ---------------------------------------------------------------------

def test_rational_hull_examples(cat, heis_aut):
    u = jordan_split(cat).unstable_basis.T
    assert rational_hull(cat, u).shape[0] == 2
    hu = jordan_split(heis_aut).unstable_basis.T
    assert rational_hull(heis_aut, hu).shape[0] == 3
    e3 = exact_array([[0, 0, 1]])
    assert [list(r) for r in rational_hull(heis_aut, e3)] == [[0, 0, 1]]


# -- Diophantine constants -------------------------------------------------------------

def test_golden_direction_frozen():
    rep = diophantine_constant([1, GOLDEN], c2=1, zmax=100)
    assert rep.c1_hat == pytest.approx(1 / math.sqrt(5), rel=1e-6)
    assert rep.argmin_z == (89, -55)
    assert not rep.failure


def test_rational_direction_fails_with_witness():
    rep = diophantine_constant([1, 0.5], c2=1, zmax=10)
    assert rep.failure and rep.c1_hat == 0 and rep.argmin_z == (1, -2)


def test_zero_direction():
    with pytest.raises(ZeroDirection):
        diophantine_constant([0, 0], 1, 10)


def test_one_dimensional_direction():
    rep = diophantine_constant([0.3], c2=1, zmax=5, normalize=False)
    assert rep.c1_hat == pytest.approx(0.3) and rep.argmin_z == (1,)


@given(st.floats(0.1, 10))
def test_unnormalized_constant_is_homogeneous(s):
    w = np.array([1.0, GOLDEN])
    a = diophantine_constant(w, 1, 50, normalize=False)
    b = diophantine_constant(s * w, 1, 50, normalize=False)
    assert b.c1_hat == pytest.approx(s * a.c1_hat, rel=1e-9)
    assert b.argmin_z == a.argmin_z


def test_integer_relation_and_rational_subspace():
    assert integer_relation([[1, 2]]) == (2, -1)
    assert integer_relation([[1, GOLDEN]]) is None
    with pytest.raises(SubspaceRational) as exc:
        generic_direction(np.array([[1.0, 2.0]]), 3, 1, 50)
    assert exc.value.relation == (2, -1)
    with pytest.raises(SubspaceRational):
        generic_direction(exact_array([[1, 2]]), 3, 1, 50)


def test_generic_direction_on_unstable_line(cat):
    V = jordan_split(cat).unstable_basis.T
    rep = generic_direction(V, 2, 1, 200, np.random.default_rng(0))
    assert rep.c1_hat == pytest.approx(1 / math.sqrt(5), rel=1e-4)


def test_unit_heisenberg_bracket_checked_before_lattice():
    X = Nilmanifold(heisenberg(1))
    with pytest.raises(BracketNotPreserved):
        validate_automorphism(X, [[2, 1, 0], [1, 1, 0], [0, 0, 2]])
