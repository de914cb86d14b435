"""
Built-in topologies and random generators used by tests, demos and the CLI.

``F1``  single source, root link 1 to node 1, leaves 2 and 3.
``F2``  two sources meeting at joint node 4 (serial chains above it).
``F3``  two sources, binary branching, 24 links; the 6-link intersection
        below joint node 4 is links 4, 5, 8, 9, 10, 11.
"""
from __future__ import annotations

import numpy as np

from .topology import Link, Source, Topology


def f1() -> Topology:
    return Topology(
        nodes=[0, 1, 2, 3],
        links=[Link(1, 0, 1), Link(2, 1, 2), Link(3, 1, 3)],
        sources=[Source(0, 0)],
        tree_membership={1: [0], 2: [0], 3: [0]},
    )


def f2() -> Topology:
    # s1: 0 -> 1 -> 4 ; s2: 2 -> 3 -> 4 ; shared 4 -> {5, 6}
    return Topology(
        nodes=[0, 1, 2, 3, 4, 5, 6],
        links=[Link(1, 0, 1), Link(2, 1, 4), Link(3, 2, 3), Link(4, 3, 4),
               Link(5, 4, 5), Link(6, 4, 6)],
        sources=[Source(1, 0), Source(2, 2)],
        tree_membership={1: [1], 2: [1], 3: [2], 4: [2], 5: [1, 2], 6: [1, 2]},
    )


F3_SHARED_LINKS = (4, 5, 8, 9, 10, 11)
F3_HIGH_LOSS_LINK = 8
F3_LOW_LOSS_SIBLING = 9


def f3() -> Topology:
    s0 = [(1, 0, 1), (2, 1, 2), (3, 1, 3), (12, 2, 4), (14, 2, 7),
          (15, 3, 8), (16, 3, 9), (17, 9, 10), (18, 9, 11)]
    shared = [(4, 4, 5), (5, 4, 6), (8, 5, 12), (9, 5, 13), (10, 6, 14), (11, 6, 15)]
    s1 = [(6, 16, 17), (7, 17, 18), (19, 17, 19), (20, 18, 4), (21, 18, 20),
          (22, 19, 21), (23, 19, 22), (24, 22, 23), (13, 22, 24)]
    membership = {k: [0] for k, _, _ in s0}
    membership.update({k: [1] for k, _, _ in s1})
    membership.update({k: [0, 1] for k, _, _ in shared})
    return Topology(
        nodes=range(25),
        links=[Link(*x) for x in s0 + shared + s1],
        sources=[Source(0, 0), Source(1, 16)],
        tree_membership=membership,
    )


def f3_loss() -> dict[int, float]:
    loss = {l.id: 0.01 for l in f3().links}
    loss[F3_HIGH_LOSS_LINK] = 0.10
    return loss


BUILTIN = {"F1": f1, "F2": f2, "F3": f3}


def builtin(name: str) -> Topology:
    try:
        return BUILTIN[name.upper()]()
    except KeyError:
        raise KeyError(f"unknown builtin topology {name!r}; choose from {sorted(BUILTIN)}")


# ---------------------------------------------------------------------- random
def _grow(rng, parent_map, node, next_id, budget, max_children):
    """Give ``node`` 2..max_children children, recursing while budget allows.

    Returns (next free node id, remaining link budget).
    """
    k = int(rng.integers(2, max_children + 1))
    k = max(2, min(k, budget))
    kids = []
    for _ in range(k):
        parent_map[next_id] = node
        kids.append(next_id)
        next_id += 1
    budget -= k
    for c in kids:
        if budget >= 2 and rng.random() < 0.5:
            next_id, budget = _grow(rng, parent_map, c, next_id, budget, max_children)
    return next_id, budget


def random_tree(rng: np.random.Generator, max_links: int = 12, max_children: int = 4,
                source: int = 0) -> Topology:
    """Random single-source tree; every non-root internal node branches."""
    pm = {1: 0}
    _grow(rng, pm, 1, 2, max_links - 1, max_children)
    return Topology.from_trees({source: pm}, roots={source: 0})


def random_two_source(rng: np.random.Generator, max_links: int = 12,
                      max_children: int = 3) -> Topology:
    """Two sources whose trees meet at one joint node.

    Each source side is a root link followed, with probability 1/2, by a
    branching node that also feeds a private receiver.  The intersection
    below the joint node is a random branching tree.
    """
    pm1, pm2 = {}, {}
    joint, nxt = 100, 101
    side_budget = 0
    for pm, root in ((pm1, 0), (pm2, 50)):
        if rng.random() < 0.5 and max_links >= 9:
            pm[root + 1] = root
            pm[joint] = root + 1
            pm[root + 2] = root + 1
            side_budget += 3
        else:
            pm[joint] = root
            side_budget += 1
    shared = {}
    _grow(rng, shared, joint, nxt, max(2, max_links - side_budget), max_children)
    pm1.update(shared)
    pm2.update(shared)
    return Topology.from_trees({0: pm1, 1: pm2}, roots={0: 0, 1: 50})


def random_loss(rng: np.random.Generator, topology: Topology, low: float = 0.03,
                high: float = 0.15) -> dict[int, float]:
    return {l.id: float(rng.uniform(low, high)) for l in sorted(topology.links)}
