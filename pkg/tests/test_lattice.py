import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbsdelab import (ConfigurationError, LevelValues, TimeGrid, build_lattice,
                      cond_expect, cond_martingale_coeff, expectation_of_sum)


def test_grid_endpoints_and_spacing():
    g = TimeGrid(horizon=2.5, n_steps=10)
    assert g.t(0) == 0.0
    assert g.t(10) == 2.5
    ts = g.times()
    assert np.allclose(np.diff(ts), g.h)
    assert np.all(np.diff(ts) > 0)


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        TimeGrid(horizon=0.0, n_steps=4)
    with pytest.raises(ConfigurationError):
        TimeGrid(horizon=1.0, n_steps=0)


def test_phi_right_endpoint_map():
    g = TimeGrid(horizon=1.0, n_steps=8)
    h = g.h
    for i in range(8):
        for s in (h * 1e-3, h / 3, h / 2, h):
            assert g.phi(i * h + s) == pytest.approx(g.t(i + 1), abs=1e-15)
    assert g.phi(g.horizon) == g.horizon
    for i in range(9):
        assert g.phi(g.t(i)) == g.t(i)
    with pytest.raises(ConfigurationError):
        g.phi(1.5)


def test_build_lattice_examples():
    lat = build_lattice(1.0, 1)
    assert np.array_equal(lat.states(1), [-1.0, 1.0])
    lat = build_lattice(4.0, 4)  # h = 1
    assert np.array_equal(lat.states(2), [-2.0, 0.0, 2.0])
    lat = build_lattice(1.0, 100)
    assert lat.states(100).shape == (101,)
    assert lat.n_nodes(100) == 101


def test_build_lattice_validation():
    with pytest.raises(ConfigurationError):
        build_lattice(1.0, 0)
    with pytest.raises(ConfigurationError):
        build_lattice(-1.0, 4)


def test_level_values_shape_check():
    with pytest.raises(ConfigurationError):
        LevelValues(2, np.array([1.0, 2.0]))


def test_cond_expect_examples():
    out = cond_expect(LevelValues(1, np.array([0.0, 2.0])))
    assert out.level == 0 and np.array_equal(out.values, [1.0])
    out = cond_expect(LevelValues(3, np.full(4, 7.5)))
    assert np.array_equal(out.values, np.full(3, 7.5))
    out = cond_expect(LevelValues(2, np.array([1.0, 2.0, 3.0])))
    assert np.array_equal(out.values, [1.5, 2.5])
    with pytest.raises(ConfigurationError):
        cond_expect(LevelValues(0, np.array([1.0])))


def test_cond_martingale_coeff_examples():
    out = cond_martingale_coeff(LevelValues(1, np.array([0.0, 2.0])), h=0.25)
    assert np.array_equal(out.values, [2.0])
    out = cond_martingale_coeff(LevelValues(2, np.full(3, 3.0)), h=0.5)
    assert np.array_equal(out.values, [0.0, 0.0])
    out = cond_martingale_coeff(LevelValues(2, np.array([0.0, 1.0, 4.0])), h=1.0)
    assert np.array_equal(out.values, [0.5, 1.5])


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=10), st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_tower_property_vs_path_enumeration(n, seed):
    # repeated averaging must reproduce the exact expectation of any payoff,
    # checked against an independent binomial-weight sum
    rng = np.random.default_rng(seed)
    payoff = rng.uniform(-5.0, 5.0, size=n + 1)
    lv = LevelValues(n, payoff.copy())
    for _ in range(n):
        lv = cond_expect(lv)
    weights = np.array([math.comb(n, j) for j in range(n + 1)], dtype=float) / 2.0 ** n
    assert lv.values[0] == pytest.approx(float(weights @ payoff), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=12), st.integers(min_value=0, max_value=2 ** 31 - 1),
       st.floats(min_value=0.01, max_value=10.0))
def test_martingale_representation_reconstructs_children(n, seed, h):
    rng = np.random.default_rng(seed)
    values = rng.uniform(-3.0, 3.0, size=n + 1)
    lv = LevelValues(n, values)
    a = cond_expect(lv).values
    z = cond_martingale_coeff(lv, h).values
    sq = math.sqrt(h)
    np.testing.assert_allclose(a + sq * z, values[1:], rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(a - sq * z, values[:-1], rtol=1e-13, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_operators_are_linear(n, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=n + 1)
    v = rng.normal(size=n + 1)
    alpha, beta = rng.normal(size=2)
    combo = cond_expect(LevelValues(n, alpha * u + beta * v)).values
    parts = alpha * cond_expect(LevelValues(n, u)).values + beta * cond_expect(LevelValues(n, v)).values
    np.testing.assert_allclose(combo, parts, rtol=1e-12, atol=1e-12)
    combo_z = cond_martingale_coeff(LevelValues(n, alpha * u + beta * v), 0.3).values
    parts_z = (alpha * cond_martingale_coeff(LevelValues(n, u), 0.3).values
               + beta * cond_martingale_coeff(LevelValues(n, v), 0.3).values)
    np.testing.assert_allclose(combo_z, parts_z, rtol=1e-12, atol=1e-12)


def test_expectation_of_sum_matches_manual():
    # E[g0 + g1(node)] with g0 scalar at the root and g1 on level 1
    terms = [np.array([2.0]), np.array([1.0, 3.0])]
    assert expectation_of_sum(terms) == pytest.approx(2.0 + 2.0)
    assert expectation_of_sum([]) == 0.0
