import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracle
from sparsedom.space import (BallFamily, GridFunction, anisotropic_norm, doubling_constant,
                             enumerate_balls, lp_norm, make_grid_space, make_interval_space,
                             quasi_triangle_violation)

exps = st.sampled_from([1.0, 1.5, 2.0, 3.0])


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), exps, exps, st.floats(0.1, 10))
def test_norm_homogeneous_under_dilations(v, a1, a2, t):
    a = np.array([a1, a2])
    v = np.array(v)
    scaled = t**a * v
    assert anisotropic_norm(scaled, a) == pytest.approx(t * anisotropic_norm(v, a), rel=1e-9, abs=1e-12)


@given(exps, exps)
def test_quasi_triangle_constant_holds(a1, a2):
    space = make_grid_space(2, [a1, a2], n=8)
    assert quasi_triangle_violation(space, samples=2000) <= 1.0 + 1e-12


def test_interval_is_metric_with_known_doubling():
    space = make_interval_space(6)
    assert space.c_d == 1.0
    assert doubling_constant(space) == 3.0
    assert doubling_constant(space, closed=True) == 5.0


def test_ball_family_matches_brute_force_enumeration():
    space = make_interval_space(5)
    x, mu = oracle.interval_points(5)
    ref = {tuple(m) for m in oracle.all_balls(x)}
    got = {tuple(b.members) for b in enumerate_balls(space)}
    assert got == ref


@given(st.integers(0, 2**31 - 1))
def test_ball_averages_match_direct_sums(seed):
    space = make_interval_space(4)
    fam = BallFamily.build(space)
    g = np.random.default_rng(seed).normal(size=space.n)
    avg = fam.averages(g)
    for c, k in list(fam.iter_balls())[::7]:
        m = fam.order[c, :k]
        assert avg[c, k] == pytest.approx(np.mean(g[m]), abs=1e-12)


@given(st.integers(1, 4), st.floats(1, 4))
def test_lp_norm_of_vectors(m, r):
    y = np.ones((3, m))
    assert np.allclose(lp_norm(y, r), m ** (1 / r))


def test_grid_function_shape_checked():
    space = make_interval_space(3)
    with pytest.raises(ValueError):
        GridFunction(space, np.zeros(5))


def test_ball_mass_and_radius():
    space = make_interval_space(4)
    b = space.ball(8, 0.1)
    assert space.mass(b.members) == pytest.approx(len(b.members) / 16)
    assert np.all(space.distances[8, b.members] < 0.1)
