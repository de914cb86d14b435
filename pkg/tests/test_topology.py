import itertools

import numpy as np
import pytest

from losstomo import fixtures as F
from losstomo.topology import (Link, Source, Topology, TopologyError, ancestors, cut_pieces,
                               decompose, joint_nodes, subtree_receivers, validate)


def rules(t):
    return {v.rule for v in validate(t)}


def test_fixtures_are_valid():
    for t in (F.f1(), F.f2(), F.f3()):
        assert validate(t) == []


def test_root_with_two_children_breaks_root_link_rule():
    t = F.f1()
    bad = Topology(t.nodes + (4,), list(t.links) + [Link(4, 0, 4)], t.sources,
                   {**t.tree_membership, 4: (0,)})
    assert "root link rule" in rules(bad)
    with pytest.raises(TopologyError):
        bad.check()


def test_two_parents_in_one_tree_rejected():
    t = Topology([0, 1, 2, 3], [Link(1, 0, 1), Link(2, 1, 2), Link(3, 1, 3), Link(4, 2, 3)],
                 [Source(0, 0)], {1: [0], 2: [0], 3: [0], 4: [0]})
    assert "single parent per tree" in rules(t)


def test_cycle_and_dangling_and_duplicates():
    cyc = Topology([0, 1, 2], [Link(1, 0, 1), Link(2, 1, 2), Link(3, 2, 1)],
                   [Source(0, 0)], {1: [0], 2: [0], 3: [0]})
    assert "acyclic" in rules(cyc)
    dang = Topology([0, 1], [Link(1, 0, 1), Link(2, 1, 9)], [Source(0, 0)], {1: [0], 2: [0]})
    assert "dangling link" in rules(dang)
    dup = Topology([0, 1, 1], [Link(1, 0, 1)], [Source(0, 0)], {1: [0]})
    assert "unique ids" in rules(dup)


def test_subtree_receivers_and_ancestors():
    f1, f2 = F.f1(), F.f2()
    assert subtree_receivers(f1, 0, 1) == {2, 3}
    assert subtree_receivers(f1, 0, 2) == {2}
    assert subtree_receivers(f2, 1, 4) == {5, 6}
    assert ancestors(f1, 0, 2) == [1, 0]
    assert ancestors(f2, 1, 4) == [1, 0]
    assert ancestors(f2, 2, 5) == [4, 3, 2]
    with pytest.raises(TopologyError):
        subtree_receivers(f1, 0, 99)
    with pytest.raises(TopologyError):
        ancestors(f1, 7, 2)


def test_ancestor_length_is_hop_count():
    rng = np.random.default_rng(5)
    for _ in range(20):
        t = F.random_two_source(rng)
        for s in t.receivers:
            pl = t.parent_link[s]
            for v in t.tree_nodes[s][1:]:
                a = ancestors(t, s, v)
                hops, x = 0, v
                while x in pl:
                    x = pl[x].parent
                    hops += 1
                assert len(a) == hops
                assert a[-1] == t.source_by_id[s].root


def test_joint_nodes():
    assert len(joint_nodes(F.f1())) == 0
    J = joint_nodes(F.f2())
    assert set(J) == {4}
    assert J.node_sources[4] == (1, 2)
    assert set(joint_nodes(F.f3())) == {4}


def test_identical_trees_meet_below_their_roots():
    shared = {3: 2, 4: 2}
    t = Topology.from_trees({0: {2: 0, **shared}, 1: {2: 1, **shared}})
    assert set(joint_nodes(t)) == {2}


def test_joint_nodes_stable_under_renumbering():
    t = F.f3()
    shift = {v: 100 + 3 * v for v in t.nodes}
    r = Topology([shift[v] for v in t.nodes],
                 [Link(l.id + 50, shift[l.parent], shift[l.child]) for l in t.links],
                 [Source(s.id, shift[s.root]) for s in t.sources],
                 {k + 50: v for k, v in t.tree_membership.items()})
    assert {shift[v] for v in joint_nodes(t)} == set(joint_nodes(r))
    assert joint_nodes(t) == joint_nodes(t)


def test_decompose_f1_is_the_input():
    (p,) = decompose(F.f1())
    assert p.group == "descendant" and p.root_is_source
    assert p.links == (1, 2, 3)


def test_decompose_f2():
    pieces = decompose(F.f2())
    by_root = {p.root: p for p in pieces}
    assert len(pieces) == 3
    assert by_root[4].group == "descendant" and by_root[4].links == (5, 6)
    assert by_root[0].group == "ancestor" and by_root[0].links == (1, 2)
    assert by_root[2].joint_leaves == (4,) and by_root[2].links == (3, 4)


def two_intersections():
    # source 0 reaches joint nodes 3 and 4 through node 1; sources 1 and 2 join each
    pm0 = {1: 0, 2: 1, 3: 1, 4: 2, 9: 2, 5: 3, 6: 3, 7: 4, 8: 4}
    pm1 = {10: 20, 3: 10, 5: 3, 6: 3, 11: 10}
    pm2 = {12: 30, 4: 12, 7: 4, 8: 4, 13: 12}
    return Topology.from_trees({0: pm0, 1: pm1, 2: pm2})


def test_decompose_two_disjoint_intersections():
    t = two_intersections()
    assert validate(t) == []
    assert set(joint_nodes(t)) == {3, 4}
    pieces = decompose(t)
    desc = [p for p in pieces if p.group == "descendant"]
    assert sorted(p.root for p in desc) == [3, 4]
    src0 = next(p for p in pieces if p.root == 0)
    assert src0.joint_leaves == (3, 4)


@pytest.mark.parametrize("t", [F.f2(), F.f3(), two_intersections()], ids=["F2", "F3", "two"])
def test_decomposition_partitions_links(t):
    pieces = decompose(t)
    got = sorted(k for p in pieces for k in p.links)
    assert got == sorted(l.id for l in t.links)


def test_joint_cuts_are_minimal():
    # every other set of cut points yielding trees produces at least one more tree
    for t in (F.f2(), two_intersections()):
        J = set(joint_nodes(t))
        m = len(cut_pieces(t, J))
        # cutting at a leaf or a root changes nothing, so only internal nodes are candidates
        others = [v for v in t.nodes if v not in J and v not in t.root_nodes and not t.is_leaf(v)]
        for r in range(1, len(others) + 1):
            for extra in itertools.combinations(others, r):
                pieces = cut_pieces(t, J | set(extra))
                if pieces is not None:
                    assert len(pieces) >= m + 1
        for drop in J:
            assert cut_pieces(t, J - {drop}) is None


def test_json_round_trip(tmp_path):
    t = F.f3()
    assert Topology.from_json(t.to_json()) == t
    p = tmp_path / "f3.json"
    t.save(p)
    assert Topology.load(p).digest() == t.digest()


def test_virtual_split_keeps_trees_valid():
    t = Topology.from_trees({0: {1: 0, 2: 1, 3: 1, 4: 1}})
    i, kids = 1, t.children(1)
    v = t.with_virtual_split(i, kids[:2], 1000, 1000)
    assert validate(v) == []
    assert set(v.children(1000)) == set(kids[:2])
