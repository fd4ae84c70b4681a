import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsedom.dyadic import build_anisotropic_system, build_shifted_systems
from sparsedom.maximal import IdentityOperator
from sparsedom.operators import discrete_hilbert
from sparsedom.space import make_interval_space
from sparsedom.sparse import (ConstructionError, ConstructionParams, SparseEntry, SparseFamily,
                              chain_family, construct_global_sparse, construct_sparse_family,
                              domination_report, estimate_C_T, fractional_sparse_operator,
                              sparse_form, sparse_operator, sparse_weighted_norm, verify_sparsity)
from sparsedom.weights import power_weight

seeds = st.integers(0, 2**31 - 1)


def identity_setup(depth=8):
    space = make_interval_space(depth)
    system = build_anisotropic_system(space)
    op = IdentityOperator(space)
    op.alpha = 6.0
    return space, system, op


@given(st.lists(st.integers(0, 255), min_size=1, max_size=4, unique=True), seeds)
def test_identity_construction_on_spikes(spots, seed):
    space, system, op = identity_setup()
    f = np.zeros(space.n)
    f[spots] = np.random.default_rng(seed).uniform(0.5, 2, size=len(spots))
    fam, trace = construct_sparse_family(op, f, system, params=ConstructionParams(C_T=1.0))
    ok, eta, clash = verify_sparsity(fam)
    assert ok and eta >= 0.5, clash
    if f.max() > trace.records[0]["lam"] * np.abs(f).mean():
        # the spike escapes the root threshold, so the construction must stop
        assert len(fam.entries) > 1
    assert all(r["stop_ratio"] <= 0.5 for r in trace.records)
    assert all(r["uncovered"] == 0 for r in trace.records)
    rep = domination_report(f, sparse_operator(fam, f))
    assert rep["uncovered"] == 0
    assert rep["max_ratio"] <= 5 * trace.lam_max


def test_hilbert_construction_with_estimated_constant():
    space = make_interval_space(6)
    system = build_anisotropic_system(space)
    H = discrete_hilbert(space)
    ct = estimate_C_T(H, system)
    assert ct["C_T"] == pytest.approx(ct["T_weak"] + ct["sharp_weak"])
    f = np.random.default_rng(0).normal(size=space.n)
    fam, trace = construct_sparse_family(H, f, system, params=ConstructionParams(C_T=ct["C_T"]))
    assert verify_sparsity(fam)[0]
    rep = domination_report(H(f), sparse_operator(fam, f))
    assert rep["uncovered"] == 0
    assert rep["max_ratio"] <= 5 * trace.lam_max * ct["C_T"]


def test_parameters_guarded():
    space, system, op = identity_setup(5)
    f = np.ones(space.n)
    with pytest.raises(ValueError):
        construct_sparse_family(op, f, system)
    with pytest.raises(ValueError):
        construct_sparse_family(op, f, system, params=ConstructionParams(C_T=1.0, lam=1.0))
    with pytest.raises(ValueError):
        ConstructionParams(variant="form")


def test_non_adaptive_construction_reports_small_constant():
    space, system, op = identity_setup()
    f = np.zeros(space.n)
    f[:40] = 1.0
    f[100] = 1e6
    params = ConstructionParams(C_T=1e-6, adaptive=False)
    with pytest.raises(ConstructionError):
        construct_sparse_family(op, f, system, params=params)


@given(st.sampled_from(["dilated", "upgraded"]), seeds)
def test_global_construction_modes(mode, seed):
    space = make_interval_space(6)
    adj = build_shifted_systems(space, check=False)
    op = IdentityOperator(space)
    op.alpha = 6.0
    f = np.zeros(space.n)
    f[np.random.default_rng(seed).integers(0, 64, size=3)] = 1.0
    fam, trace, info = construct_global_sparse(op, f, adj, ConstructionParams(C_T=1.0), mode=mode)
    ok, eta, _ = verify_sparsity(fam)
    assert ok and eta >= fam.eta
    if mode == "upgraded":
        assert info["upgrade"]["average_bound_holds"]


def test_root_family_averages():
    space = make_interval_space(4)
    system = build_anisotropic_system(space)
    root = system.root
    fam = SparseFamily(space, [SparseEntry(root, root.members, root.members, 1.0)])
    f = np.arange(space.n, dtype=float)
    assert np.allclose(sparse_operator(fam, f), f.mean())
    assert np.allclose(sparse_operator(fam, f, p0=2), np.sqrt(np.mean(f**2)))


def test_overlapping_witnesses_detected():
    space = make_interval_space(4)
    system = build_anisotropic_system(space)
    q = system.level(1)[0]
    fam = SparseFamily(space, [SparseEntry(system.root, q.members, system.root.members, 1.0),
                               SparseEntry(q, q.members, q.members, 0.5)])
    ok, _, clash = verify_sparsity(fam)
    assert not ok and clash == (0, 1)


@given(seeds)
def test_fractional_reduces_to_standard_when_exponents_match(seed):
    space, system, op = identity_setup(6)
    fam = chain_family(system, 5)
    f = np.random.default_rng(seed).normal(size=space.n)
    assert np.allclose(fractional_sparse_operator(fam, f, 1, 1), sparse_operator(fam, f))


@given(st.floats(0.1, 10), seeds)
def test_sparse_form_homogeneous(c, seed):
    space, system, op = identity_setup(5)
    fam = chain_family(system, 3)
    f, g = np.random.default_rng(seed).normal(size=(2, space.n))
    base = sparse_form(fam, f, g, q0=4, r=2)
    assert sparse_form(fam, c * f, g, q0=4, r=2) == pytest.approx(c * base, rel=1e-10)
    assert sparse_form(fam, f, c * g, q0=4, r=2) == pytest.approx(c * base, rel=1e-10)


def test_chain_family_is_sparse():
    system = build_anisotropic_system(make_interval_space(7))
    fam = chain_family(system, 0)
    assert len(fam.entries) == system.n_levels
    ok, eta, _ = verify_sparsity(fam)
    assert ok and eta == pytest.approx(0.5)


def _brute_weighted_norm(fam, w, r):
    # direct Rayleigh quotient maximum of the quadratic form of the sparse operator
    space = fam.space
    mu = space.measure
    N = space.n
    A = np.zeros((len(fam.entries), N))
    I = np.zeros((N, len(fam.entries)))
    for i, e in enumerate(fam.entries):
        A[i, e.average_set] = mu[e.average_set] / mu[e.average_set].sum()
        I[e.cube.members, i] = 1
    W = np.diag(np.sqrt(w * mu))
    Winv = np.diag(1 / np.sqrt(w * mu))
    if r == 1:
        return np.linalg.norm(W @ I @ A @ Winv, 2)
    wP = np.array([np.dot(w[e.cube.members], mu[e.cube.members]) for e in fam.entries])
    return np.linalg.norm(np.diag(np.sqrt(wP)) @ A @ Winv, 2)


@pytest.mark.parametrize("r", [1, 2])
@pytest.mark.parametrize("gamma", [-0.6, 0.3, 0.9])
def test_sparse_weighted_norm_matches_dense_computation(r, gamma):
    space = make_interval_space(6)
    fam = chain_family(build_anisotropic_system(space), 0)
    w = power_weight(space, gamma)
    assert sparse_weighted_norm(fam, w, r) == pytest.approx(_brute_weighted_norm(fam, w.values, r), rel=1e-10)
