from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilmix.errors import HorizonExceeded, NotCentered, NotErgodic, ZeroVariance
from nilmix.lie_core import exact_array
from nilmix.observables import Bump, Character, Constant
from nilmix.stochastics import (
    OrbitEngine,
    birkhoff_sums,
    character_product_integral,
    clt_experiment,
    coboundary_make,
    coboundary_solve,
    coboundary_test,
    correlation,
    correlation_series,
    donsker_paths,
    green_kubo,
    multi_correlation,
    solve_weights,
)

fracs = st.fractions(min_value=0, max_value=1, max_denominator=50).filter(lambda q: q < 1)


def test_cat_map_exact_step(cat_engine):
    x = exact_array([Fraction(1, 3), Fraction(1, 5)])
    # columns are images: A = [[2, 1], [1, 1]] sends (x, y) to (2x + y, x + y)
    assert list(cat_engine.apply(1, x)) == [Fraction(13, 15), Fraction(8, 15)]


@given(st.lists(fracs, min_size=3, max_size=3), st.integers(0, 6), st.integers(0, 6))
def test_exact_powers_compose(heis_engine, x, a, b):
    eng = heis_engine
    x = exact_array(x)
    assert list(eng.apply(a + b, x)) == list(eng.apply(a, eng.apply(b, x)))
    assert list(eng.apply(-a, eng.apply(a, x))) == list(x)


def test_float_orbit_tracks_exact_orbit(heis_engine, rng):
    H = heis_engine.manifold
    x = np.round(H.haar_sample(rng, 20) * 64) / 64
    ex = heis_engine.apply(6, exact_array(x.tolist())).astype(float)
    fl = heis_engine.apply(6, x)
    assert np.abs(fl - ex).max() < 1e-8


def test_horizon(cat):
    eng = OrbitEngine(cat, horizon=10)
    with pytest.raises(HorizonExceeded):
        eng.apply(11, np.zeros(2))


def test_engineered_character_match(cat_engine, rng):
    # (A^T)^3 (5, -8) = (1, 0), so the product at n = 3 contains cos^2 and integrates to 1/2
    ms = [(1, 0), (5, -8)]
    exact = [character_product_integral(cat_engine.aut, ms, [0, n]) for n in range(1, 7)]
    assert exact == [0, 0, 0.5, 0, 0, 0]
    f0, f1 = Character(cat_engine.manifold, ms[0]), Character(cat_engine.manifold, ms[1])
    c, se = correlation(cat_engine, f0, f1, 3, 50_000, rng)
    assert abs(c - 0.5) < 4 * se


def test_triple_character_oracle(cat):
    ms = [(1, 0), (3, 0), (1, 0)]
    assert character_product_integral(cat, ms, [0, 1, 2]) == 0.25
    assert character_product_integral(cat, ms, [0, 2, 4]) == 0.0


@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=2, max_size=3),
       st.integers(0, 4))
def test_character_products_are_dyadic_and_even(cat, ms, gap):
    aut = cat
    ns = [i * gap for i in range(len(ms))]
    v = character_product_integral(aut, ms, ns)
    assert (v * 2 ** len(ms)) == int(v * 2 ** len(ms))
    assert v == character_product_integral(aut, [(-a, -b) for a, b in ms], ns)


def test_correlation_series_constant_and_determinism(cat_engine):
    T2 = cat_engine.manifold
    c, se = correlation_series(cat_engine, Constant(T2, 2), Constant(T2, 3), [1, 2], 10, None)
    assert c.tolist() == [6, 6] and se.tolist() == [0, 0]
    f = Character(T2, (1, 1))
    a = correlation_series(cat_engine, f, f, [0, 1, 2], 5000, np.random.default_rng(9), workers=2)
    b = correlation_series(cat_engine, f, f, [0, 1, 2], 5000, np.random.default_rng(9), workers=2)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_multi_correlation_argument_checks(cat_engine):
    f = Character(cat_engine.manifold, (1, 0))
    with pytest.raises(ValueError):
        multi_correlation(cat_engine, [f], [0], 10, np.random.default_rng(0))


def test_green_kubo_character(cat_engine, rng):
    gk = green_kubo(cat_engine, Character(cat_engine.manifold, (1, 0)), 4, 20_000, rng)
    assert abs(gk.sigma2 - 0.5) < 3 * gk.sigma2_se + 1e-12
    assert gk.lags.shape == (5,) and not gk.tail_exceeds_noise


def test_not_ergodic_is_refused(identity_aut):
    eng = OrbitEngine(identity_aut)
    with pytest.raises(NotErgodic):
        clt_experiment(eng, Character(eng.manifold, (1, 0)), [4, 8], 10, J=1, budget=10)


def test_birkhoff_schedule_checks(cat_engine, rng):
    f = Character(cat_engine.manifold, (1, 0))
    with pytest.raises(ValueError):
        birkhoff_sums(cat_engine, f, [4, 4], 10, rng)
    S = birkhoff_sums(cat_engine, f, [0, 1, 3], 7, rng)
    assert S.shape == (7, 3) and np.all(S[:, 0] == 0)


def test_birkhoff_workers_reproducible(cat_engine):
    f = Character(cat_engine.manifold, (1, 0))
    a = birkhoff_sums(cat_engine, f, [5, 10], 101, np.random.default_rng(4), workers=3)
    b = birkhoff_sums(cat_engine, f, [5, 10], 101, np.random.default_rng(4), workers=3)
    assert np.array_equal(a, b)


def test_donsker_refuses_zero_variance(cat_engine, rng):
    with pytest.raises(ZeroVariance):
        donsker_paths(cat_engine, Character(cat_engine.manifold, (1, 0)), 16, 10, [0.5, 1], 0.0, rng)


def test_solve_weights():
    assert solve_weights(4).tolist() == [1, 0.75, 0.5, 0.25]
    assert solve_weights(3, "partial").tolist() == [1, 1, 1]
    assert solve_weights(3, "abel", 0.5).tolist() == [1, 0.5, 0.25]
    with pytest.raises(ValueError):
        solve_weights(3, "abel", 1.5)
    with pytest.raises(ValueError):
        solve_weights(3, "ramanujan")


def test_coboundary_construction_and_solve(cat_engine, rng):
    T2 = cat_engine.manifold
    assert isinstance(coboundary_make(cat_engine, Constant(T2, 4.0)), Constant)
    f = coboundary_make(cat_engine, Character(T2, (1, 1)))
    assert f.integral == 0.0
    x = T2.haar_sample(rng, 5)
    assert np.allclose(f(x), np.cos(2 * np.pi * (cat_engine.step(x) @ [1, 1])) - np.cos(2 * np.pi * (x @ [1, 1])))
    # for a coboundary the Cesaro residual telescopes to an average of psi differences, O(1/N)
    rep = coboundary_solve(cat_engine, f, 100, "cesaro", 1000, rng)
    assert rep.residual_l2 < 0.05 * rep.f_sup
    with pytest.raises(NotCentered):
        coboundary_solve(cat_engine, Constant(T2, 1.0), 10, rng=rng)


def test_coboundary_decisions(cat_engine, heis_engine, rng):
    T2 = cat_engine.manifold
    yes = coboundary_test(cat_engine, coboundary_make(cat_engine, Character(T2, (1, 1))), 8, 20_000, rng)
    assert yes.decision == "Coboundary"
    no = coboundary_test(cat_engine, Character(T2, (1, 0)), 8, 20_000, rng)
    assert no.decision == "NotCoboundary" and no.sigma2_hat == pytest.approx(0.5, abs=0.03)
    H = heis_engine.manifold
    bump = coboundary_make(heis_engine, Bump(H, np.array([0.25, 0.25, 0.25]), 0.45))
    assert coboundary_test(heis_engine, bump, 8, 20_000, rng, sample_count=1000).decision == "Coboundary"


def test_origin_is_fixed(heis_engine):
    x = exact_array([[0, 0, 0]])
    for n in (1, 5, -3):
        assert all(v == 0 for v in heis_engine.apply(n, x)[0])
    assert np.all(heis_engine.apply(7, np.zeros((1, 3))) == 0)


def test_two_point_multi_correlation_is_correlation(cat_engine):
    T2 = cat_engine.manifold
    f0, f1 = Character(T2, (1, 0)), Character(T2, (2, 1), "sin")
    for n in (1, 4):
        a = correlation(cat_engine, f0, f1, n, 3000, np.random.default_rng(8))
        b = multi_correlation(cat_engine, [f0, f1], [0, n], 3000, np.random.default_rng(8))
        assert a == b
