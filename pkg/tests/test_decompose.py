import numpy as np
import pytest

from losstomo import fixtures as F
from losstomo.decompose import (estimate_ancestor_tree, estimate_descendant_tree,
                                run_pipeline, solve_ancestor_node)
from losstomo.oracle import maximize
from losstomo.path import estimate_all_paths
from losstomo.simulate import LossModel, simulate
from losstomo.stats import StatTable, build_stats
from losstomo.topology import Topology, decompose


def agree(a, b, tol):
    ta, tb = a.thetas(), b.thetas()
    assert ta.keys() == tb.keys()
    for k in ta:
        assert (ta[k] is None) == (tb[k] is None), k
        if ta[k] is not None:
            assert ta[k] == pytest.approx(tb[k], abs=tol), k


def side_branch():
    # source 0: 0 -> 1, node 1 feeds receiver 2 and joint node 3; source 1: 10 -> 3
    return Topology.from_trees({0: {1: 0, 2: 1, 3: 1, 5: 3, 6: 3}, 1: {3: 10, 5: 3, 6: 3}})


def test_lossless_subtree():
    t = F.f3()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.0), 300, seed=0))
    de = run_pipeline(t, st)
    assert all(v == 0.0 for v in de.thetas().values())


def test_two_leaf_descendant_tree():
    t = F.f1()
    st = StatTable(t, {0: 1000}, {(1, 0): 784, (2, 0): 720, (3, 0): 640},
                   joint={(frozenset({2, 3}), 0): 576})
    (piece,) = decompose(t)
    tr = estimate_descendant_tree(piece, 1000, st, t)
    assert tr.relative_rate[1] == pytest.approx(0.8, abs=1e-15)
    assert tr.pass_rate[1] == pytest.approx(0.8, abs=1e-15)


def test_descendant_tree_ignores_everything_above_its_root():
    t = F.f3()
    st = build_stats(t, simulate(t, F.f3_loss(), 4000, seed=1))
    piece = next(p for p in decompose(t) if p.root == 4)
    a = estimate_descendant_tree(piece, 7000.0, st, t)
    # scramble the counts of every node outside the tree
    inside = {t.link_by_id[k].child for k in piece.links}
    n1 = {(v, s): (c if v in inside else c // 2) for (v, s), c in st._n1.items()}
    b = estimate_descendant_tree(piece, 7000.0, StatTable(t, st.probes, n1), t)
    assert a.pass_rate == b.pass_rate


def test_side_branch_is_a_degree_one_equation():
    g_x, g_r, g_v = 0.6, 0.7, 0.8
    A = solve_ancestor_node(g_v, [(0.75, 0.8)], [g_r])
    assert A == pytest.approx(g_x * g_r / (g_x + g_r - g_v), rel=1e-13)


def test_ancestor_tree_with_side_branch():
    t = side_branch()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.08), 20_000, seed=2))
    de = run_pipeline(t, st)
    table, le = estimate_all_paths(st, t)
    agree(de.links, le, 1e-9)
    n = st.probes[0]
    node1 = next(l.child for l in t.out_links[t.source_by_id[0].root])
    recv = next(c for c in t.children(node1) if t.is_leaf(c))
    joint = next(c for c in t.children(node1) if not t.is_leaf(c))
    g_x = table.A[(joint, 0)] * table.beta[joint]
    g_r, g_v = st.n1(recv, 0) / n, st.n1(node1, 0) / n
    tree = next(tr for tr in de.trees if tr.piece.root == t.source_by_id[0].root)
    assert tree.relative_rate[node1] == pytest.approx(g_x * g_r / (g_x + g_r - g_v), rel=1e-12)


def test_ancestor_tree_needs_root_count_when_not_a_source():
    t = F.f2()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.1), 500, seed=3))
    piece = next(p for p in decompose(t) if p.root == 4)
    with pytest.raises(ValueError):
        estimate_ancestor_tree(piece, {}, {}, st, t)


@pytest.mark.parametrize("name", ["F2", "F3"])
def test_pipeline_equals_path_estimator(name):
    t = F.builtin(name)
    loss = F.f3_loss() if name == "F3" else LossModel.uniform(t, 0.07)
    for seed in range(5):
        st = build_stats(t, simulate(t, loss, 3000, seed=seed))
        agree(run_pipeline(t, st).links, estimate_all_paths(st, t)[1], 1e-9)


def test_pipeline_on_random_two_source_topologies():
    rng = np.random.default_rng(4)
    for _ in range(20):
        t = F.random_two_source(rng)
        st = build_stats(t, simulate(t, F.random_loss(rng, t), 3000, seed=int(rng.integers(1e6))))
        agree(run_pipeline(t, st).links, estimate_all_paths(st, t)[1], 1e-9)


def test_single_source_pipeline_is_the_tree_estimator():
    t = F.random_tree(np.random.default_rng(6))
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.05), 4000, seed=6))
    de = run_pipeline(t, st)
    assert len(de.trees) == 1 and de.trees[0].diagnostics["solver"] == "tree"
    agree(de.links, estimate_all_paths(st, t)[1], 1e-9)


def test_two_intersections_under_one_ancestor_match_oracle():
    pm0 = {1: 0, 2: 1, 3: 1, 4: 2, 9: 2, 5: 3, 6: 3, 7: 4, 8: 4}
    pm1 = {10: 20, 3: 10, 5: 3, 6: 3, 11: 10}
    pm2 = {12: 30, 4: 12, 7: 4, 8: 4, 13: 12}
    t = Topology.from_trees({0: pm0, 1: pm1, 2: pm2})
    rng = np.random.default_rng(7)
    st = build_stats(t, simulate(t, F.random_loss(rng, t), 10_000, seed=7))
    de = run_pipeline(t, st)
    src0 = next(tr for tr in de.trees if tr.piece.root == 0)
    assert len(src0.diagnostics["known_leaves"]) == 2
    orc = maximize(st, t)
    for k, v in de.thetas().items():
        assert v == pytest.approx(orc.theta[k], abs=1e-4)


def test_every_link_reported_once():
    t = F.f2()
    st = build_stats(t, simulate(t, LossModel.uniform(t, 0.05), 1000, seed=8))
    de = run_pipeline(t, st)
    seen = sorted(de.tree_of)
    assert seen == sorted(l.id for l in t.links)
    composite_links = sorted(k for c in de.links.composites for k in c.links)
    assert composite_links == [1, 2, 3, 4]
    assert all(de.links.pass_rate[k] is None for k in composite_links)
