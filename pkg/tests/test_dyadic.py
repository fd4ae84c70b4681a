import numpy as np
import pytest
from hypothesis import given, strategies as st

from sparsedom.dyadic import (build_anisotropic_system, build_shifted_systems, containing_cube,
                              covering_partition, is_partition, verify_axioms)
from sparsedom.space import make_grid_space, make_interval_space


@given(st.integers(1, 8))
def test_interval_systems_satisfy_axioms(depth):
    rep = verify_axioms(build_anisotropic_system(make_interval_space(depth)))
    assert rep["ok"], rep["witness"]


def test_anisotropic_grid_satisfies_axioms():
    space = make_grid_space(2, [1, 2], n=16)
    system = build_anisotropic_system(space)
    assert verify_axioms(system)["ok"]
    assert system.delta == pytest.approx(0.5)


def test_edited_cube_is_caught_with_witness():
    system = build_anisotropic_system(make_interval_space(4))
    q = system.level(2)[1]
    q.members = q.members[:-1]
    rep = verify_axioms(system)
    assert not rep["ok"]
    assert rep["witness"]["property"] == "partition"


def test_ancestors_are_nested_and_contain_point():
    system = build_anisotropic_system(make_interval_space(6))
    for s in (0, 17, 63):
        anc = system.ancestors(s)
        assert [q.generation for q in anc] == list(range(system.k_min, system.k_max + 1))
        for big, small in zip(anc, anc[1:]):
            assert set(small.members) <= set(big.members)
        assert all(s in q.members for q in anc)


def test_descendants_of_root_are_all_cubes():
    system = build_anisotropic_system(make_interval_space(5))
    assert len(system.descendants(system.root)) == len(system.cubes)


@given(st.lists(st.integers(0, 255), min_size=2, max_size=10, unique=True))
def test_covering_is_partition_and_dilates_contain_E(E):
    system = build_anisotropic_system(make_interval_space(8))
    alpha = 3 * system.space.c_d**2 / system.delta
    cov = covering_partition(system, E, alpha)
    assert is_partition(system.space, cov.cubes)
    if not cov.degenerate:
        assert cov.contains_E


def test_clustered_set_gives_fine_covering():
    system = build_anisotropic_system(make_interval_space(8))
    cov = covering_partition(system, [100, 101], 6.0)
    assert not cov.degenerate
    assert len(cov.cubes) > 1


def test_covering_rejects_small_alpha():
    system = build_anisotropic_system(make_interval_space(5))
    with pytest.raises(ValueError):
        covering_partition(system, [1, 2], 1.0)


def test_shifted_systems_contain_every_ball():
    space = make_interval_space(5)
    adj = build_shifted_systems(space)
    assert len(adj.systems) == 3
    assert np.isfinite(adj.gamma)
    for s in adj.systems:
        assert verify_axioms(s)["ok"]
    members = np.arange(10, 20)
    _, q = containing_cube(adj, members)
    assert set(members) <= set(q.members)
