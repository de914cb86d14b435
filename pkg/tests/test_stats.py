import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from losstomo import fixtures as F
from losstomo.path import estimate_all_paths
from losstomo.simulate import LossModel, ObservationSet, simulate
from losstomo.stats import StatTable, build_stats, merge_children, union_count
from losstomo.topology import Topology


def obs_from_columns(t, s, cols):
    recv = t.receivers[s]
    bits = np.column_stack([np.array(cols[r], dtype=bool) for r in recv])
    return ObservationSet(t.digest(), None, {s: recv}, {s: bits})


def test_all_pass():
    t = F.f3()
    stats = build_stats(t, simulate(t, LossModel.uniform(t, 0.0), 50, seed=0))
    for s in (0, 1):
        for v in t.tree_nodes[s][1:]:
            assert stats.n1(v, s) == 50 and stats.n0(v, s) == 0


def test_hand_enumerated_f1_counts():
    t = F.f1()
    stats = build_stats(t, obs_from_columns(t, 0, {2: [1, 0, 1], 3: [1, 1, 0]}))
    assert stats.n1(1, 0) == 3
    assert stats.n1(2, 0) == 2 and stats.n0(2, 0) == 1
    assert stats.joint({2, 3}, 0) == 1
    assert stats.n0(1, 0) == 0      # root link parent count is n^s


def test_per_source_reachability():
    t = F.f2()
    obs = simulate(t, LossModel.uniform(t, 0.0, {2: 0.999999999}), 200, seed=1)
    stats = build_stats(t, obs)
    assert stats.n1(4, 1) == 0 and stats.n1(4, 2) == 200
    assert stats.pooled(4) == 200


def test_counts_are_monotone_and_nonnegative():
    t = F.f3()
    stats = build_stats(t, simulate(t, F.f3_loss(), 3000, seed=2))
    for s in (0, 1):
        for v in t.tree_nodes[s][1:]:
            assert stats.n0(v, s) >= 0
            assert stats.parent_count(v, s) >= stats.n1(v, s)


def test_dimension_mismatch_rejected():
    t = F.f1()
    bad = ObservationSet(t.digest(), None, {0: (2,)}, {0: np.ones((5, 1), bool)})
    with pytest.raises(ValueError):
        build_stats(t, bad)


def table_with_joint(n1, n2, n12, n=1000):
    t = F.f1()
    return StatTable(t, {0: n}, {(1, 0): n1 + n2 - n12, (2, 0): n1, (3, 0): n2},
                     joint={(frozenset({2, 3}), 0): n12})


def test_merge_examples():
    stats = table_with_joint(720, 640, 576)
    assert merge_children(stats, 1, [2, 3]) == (784, {0: 784})
    assert merge_children(table_with_joint(300, 200, 0), 1, [2, 3])[0] == 500
    assert merge_children(stats, 1, [2])[0] == 720
    with pytest.raises(ValueError):
        merge_children(stats, 1, [])


@settings(max_examples=40, deadline=None)
@given(k=st.integers(2, 6), n=st.integers(1, 60), seed=st.integers(0, 2**31 - 1))
def test_inclusion_exclusion_equals_union(k, n, seed):
    t = Topology.from_trees({0: {1: 0, **{j: 1 for j in range(2, 2 + k)}}})
    rng = np.random.default_rng(seed)
    cols = {r: rng.random(n) < rng.uniform(0.2, 0.9) for r in t.receivers[0]}
    stats = build_stats(t, obs_from_columns(t, 0, cols))
    kids = t.children(1)
    for r in range(1, k + 1):
        for D in itertools.combinations(kids, r):
            assert merge_children(stats, 1, D)[0] == union_count(stats, D, 0)


def test_joint_counts_shrink_with_larger_subsets():
    t = Topology.from_trees({0: {1: 0, 2: 1, 3: 1, 4: 1, 5: 1}})
    stats = build_stats(t, simulate(t, LossModel.uniform(t, 0.3), 500, seed=3))
    kids = t.children(1)
    for D in itertools.combinations(kids, 2):
        for extra in kids:
            if extra not in D:
                assert stats.joint(set(D) | {extra}, 0) <= stats.joint(D, 0)


def test_virtual_split_preserves_parent_statistics():
    t = Topology.from_trees({0: {1: 0, 2: 1, 3: 1, 4: 1, 5: 1}})
    obs = simulate(t, LossModel.uniform(t, 0.2), 800, seed=4)
    stats = build_stats(t, obs)
    v = t.with_virtual_split(1, [2, 3], 99, 99)
    vstats = build_stats(v, ObservationSet(v.digest(), None, dict(obs.receivers), dict(obs.bits)))
    assert vstats.n1(1, 0) == stats.n1(1, 0)
    assert vstats.n1(99, 0) == merge_children(stats, 1, [2, 3])[0]


def test_identical_tables_give_identical_estimates():
    t = F.f2()
    a = simulate(t, LossModel.uniform(t, 0.1), 1500, seed=5)
    # reverse the probe order: same counts, different bitmaps
    b = ObservationSet(a.topology_hash, None, dict(a.receivers),
                       {s: x[::-1].copy() for s, x in a.bits.items()})
    sa, sb = build_stats(t, a), build_stats(t, b)
    assert sa.same_counts(sb)
    assert estimate_all_paths(sa, t)[1].thetas() == estimate_all_paths(sb, t)[1].thetas()


def test_csv_round_trip():
    t = F.f3()
    stats = build_stats(t, simulate(t, F.f3_loss(), 400, seed=6))
    back = StatTable.from_csv(stats.to_csv(), t)
    assert back.same_counts(stats)
    assert back.joint({5, 6}, 1) == stats.joint({5, 6}, 1)
    assert estimate_all_paths(back, t)[1].thetas() == estimate_all_paths(stats, t)[1].thetas()
