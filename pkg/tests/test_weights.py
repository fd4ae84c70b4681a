import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracle
from sparsedom.dyadic import build_anisotropic_system
from sparsedom.space import make_interval_space
from sparsedom.weights import Weight, ap_characteristic, power_weight, weak_lp_norm, weighted_lp_norm

# frozen from the brute-force ball enumeration in tests/oracle.py
A2_GOLDEN = [
    (6, 0.5, 1.283147570028901),
    (6, -0.7, 1.6677970569727059),
    (8, 0.5, 1.3081579800525287),
]


@pytest.mark.parametrize("depth,gamma,value", A2_GOLDEN)
def test_a2_of_power_weights_matches_oracle(depth, gamma, value):
    w = power_weight(make_interval_space(depth), gamma)
    assert ap_characteristic(w, 2) == pytest.approx(value, rel=1e-12)


@given(st.lists(st.floats(0.01, 100), min_size=16, max_size=16), st.floats(1, 4))
def test_ap_at_least_one_and_scale_invariant(vals, p):
    space = make_interval_space(4)
    w = Weight(space, np.array(vals))
    a = ap_characteristic(w, p)
    assert a >= 1 - 1e-12
    assert ap_characteristic(Weight(space, 7.0 * np.array(vals)), p) == pytest.approx(a, rel=1e-9)


def test_constant_weight_has_characteristic_one():
    space = make_interval_space(5)
    w = Weight(space, np.full(space.n, 3.0))
    assert ap_characteristic(w, 2) == pytest.approx(1.0)
    assert ap_characteristic(w, 1) == pytest.approx(1.0)
    assert ap_characteristic(w, 2, basis=build_anisotropic_system(space)) == pytest.approx(1.0)


def test_invalid_weights_rejected():
    space = make_interval_space(3)
    with pytest.raises(ValueError):
        Weight(space, np.zeros(space.n))
    with pytest.raises(ValueError):
        Weight(space, np.ones(3))


@given(st.integers(0, 2**31 - 1), st.floats(1, 3))
def test_weak_norm_matches_oracle_and_strong_bound(seed, p):
    space = make_interval_space(5)
    g = np.random.default_rng(seed).normal(size=space.n)
    _, mu = oracle.interval_points(5)
    weak = weak_lp_norm(g, p, space=space)
    assert weak == pytest.approx(oracle.weak_norm(g, mu, p), rel=1e-12)
    assert weak <= weighted_lp_norm(g, p, space=space) * (1 + 1e-12)


def test_weak_norm_of_indicator():
    space = make_interval_space(6)
    g = np.zeros(space.n)
    g[:40] = 1
    assert weak_lp_norm(g, 2, space=space) == pytest.approx(np.sqrt(40 / 64))
