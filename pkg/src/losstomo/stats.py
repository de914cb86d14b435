"""
Sufficient statistics of end-to-end observations.

For node ``i`` and source ``s`` the confirmed-pass count ``n_i(s,1)`` is the
number of probes of ``s`` seen by at least one receiver below ``i``; the
uncertainty count ``n_i(s,0)`` is the parent's count minus ``n_i(s,1)``.  The
parent count of a root link is the number of probes the source emitted.
"""
from __future__ import annotations

import csv
import io
import itertools
from typing import Iterable, Mapping

import numpy as np

from .simulate import ObservationSet
from .topology import Topology

JOINT_EXPORT_MAX_CHILDREN = 6


class StatTable:
    """Per (node, source) counts with memoized joint counts over child subsets.

    Parameters
    ----------
    topology : Topology
    probes : mapping source -> n^s
    n1 : mapping (node, source) -> n_i(s,1) for every non-root node of each tree
    joint : optional mapping (frozenset of nodes, source) -> n_D(s,1)
    reach : optional mapping (node, source) -> boolean array Y_i^s
    """

    def __init__(self, topology: Topology, probes: Mapping[int, float],
                 n1: Mapping[tuple[int, int], float], joint=None, reach=None):
        self.topology = topology
        self.probes = {int(s): probes[s] for s in probes}
        self._n1 = dict(n1)
        for src in topology.sources:
            self._n1[(src.root, src.id)] = self.probes.get(src.id, 0)
        self._joint = dict(joint or {})
        self._reach = reach

    # ---------------------------------------------------------------- counts
    def n1(self, i: int, s: int):
        try:
            return self._n1[(i, s)]
        except KeyError:
            raise KeyError(f"node {i} is not in the tree of source {s}") from None

    def parent_count(self, i: int, s: int):
        pl = self.topology.parent_link[s]
        if i not in pl:
            raise KeyError(f"node {i} has no parent in the tree of source {s}")
        return self.n1(pl[i].parent, s)

    def n0(self, i: int, s: int):
        return self.parent_count(i, s) - self.n1(i, s)

    def pooled(self, i: int, sources: Iterable[int] | None = None):
        """Sum of n_i(s,1) over ``sources`` (default S(i))."""
        S = self.topology.node_sources[i] if sources is None else sources
        return sum(self.n1(i, s) for s in S)

    def link_n1(self, link_id: int):
        l = self.topology.link_by_id[link_id]
        return sum(self.n1(l.child, s) for s in self.topology.members(link_id))

    def link_n0(self, link_id: int):
        l = self.topology.link_by_id[link_id]
        return sum(self.n0(l.child, s) for s in self.topology.members(link_id))

    def has_bitmaps(self) -> bool:
        return self._reach is not None

    def reach(self, i: int, s: int) -> np.ndarray:
        if self._reach is None:
            raise ValueError("statistics were built without bitmaps")
        return self._reach[(i, s)]

    def joint(self, D: Iterable[int], s: int):
        """n_D(s,1): probes of ``s`` observed below every node of ``D``."""
        D = frozenset(D)
        if not D:
            raise ValueError("empty child subset")
        if len(D) == 1:
            (j,) = D
            return self.n1(j, s)
        key = (D, s)
        if key not in self._joint:
            if self._reach is None:
                raise KeyError(f"joint count for {sorted(D)} / source {s} not available")
            acc = np.logical_and.reduce([self._reach[(j, s)] for j in sorted(D)])
            self._joint[key] = int(acc.sum())
        return self._joint[key]

    def sources(self):
        return sorted(self.probes)

    def same_counts(self, other: "StatTable") -> bool:
        return self.probes == other.probes and self._n1 == other._n1

    # ---------------------------------------------------------------- CSV
    def to_csv(self) -> str:
        t = self.topology
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "node", "source", "n1", "n0", "children"])
        for s in sorted(self.probes):
            w.writerow(["probes", "", s, self.probes[s], "", ""])
        for s in sorted(self.probes):
            for v in t.tree_nodes[s][1:]:
                w.writerow(["node", v, s, self.n1(v, s), self.n0(v, s), ""])
        for i in sorted(t.nodes):
            kids = t.children(i)
            if len(kids) < 2 or len(kids) > JOINT_EXPORT_MAX_CHILDREN:
                continue
            for s in t.node_sources[i]:
                for r in range(2, len(kids) + 1):
                    for D in itertools.combinations(sorted(kids), r):
                        try:
                            val = self.joint(D, s)
                        except KeyError:
                            continue
                        w.writerow(["joint", i, s, val, "", ";".join(map(str, D))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, topology: Topology) -> "StatTable":
        probes, n1, joint = {}, {}, {}
        for row in csv.DictReader(io.StringIO(text)):
            sec, s = row["section"], int(row["source"])
            val = _num(row["n1"])
            if sec == "probes":
                probes[s] = val
            elif sec == "node":
                n1[(int(row["node"]), s)] = val
            elif sec == "joint":
                D = frozenset(int(x) for x in row["children"].split(";"))
                joint[(D, s)] = val
            else:
                raise ValueError(f"unknown section {sec!r}")
        return cls(topology, probes, n1, joint)


def _num(x: str):
    f = float(x)
    return int(f) if f.is_integer() else f


def build_stats(topology: Topology, obs: ObservationSet, keep_bitmaps: bool = True) -> StatTable:
    """Reduce receiver bitmaps to confirmed-pass counts for every (node, source)."""
    t = topology
    for s, recv in t.receivers.items():
        if s not in obs.bits:
            raise ValueError(f"observations lack source {s}")
        if tuple(obs.receivers[s]) != tuple(recv):
            raise ValueError(f"receiver set of source {s} does not match the topology")
        if obs.bits[s].shape[1] != len(recv):
            raise ValueError(f"bitmap width of source {s} does not match |R(s)|")
    n1, reach = {}, {}
    for s, order in t.tree_nodes.items():
        b = obs.bits[s]
        Y = {r: b[:, j] for j, r in enumerate(t.receivers[s])}
        for v in reversed(order[1:]):
            if v not in Y:
                Y[v] = np.logical_or.reduce([Y[c] for c in t.children(v)])
            n1[(v, s)] = int(Y[v].sum())
        if keep_bitmaps:
            reach.update({(v, s): y for v, y in Y.items()})
    return StatTable(t, obs.counts, n1, reach=reach if keep_bitmaps else None)


def merge_children(stats: StatTable, i: int, D: Iterable[int]):
    """Confirmed-pass count of a virtual link whose subtree is the union of ``D``.

    Uses inclusion-exclusion over the joint counts n_T(s,1), T subset of D.

    Returns
    -------
    total : number
        Sum over S(i) of the per-source counts.
    per_source : dict
        n_z(s,1) for each s in S(i).
    """
    D = sorted(set(D))
    if not D:
        raise ValueError("cannot merge an empty set of children")
    kids = set(stats.topology.children(i))
    if not set(D) <= kids:
        raise ValueError(f"{sorted(set(D) - kids)} are not children of node {i}")
    per = {}
    for s in stats.topology.node_sources[i]:
        acc = 0
        for r in range(1, len(D) + 1):
            sign = 1 if r % 2 else -1
            for T in itertools.combinations(D, r):
                acc += sign * stats.joint(T, s)
        per[s] = acc
    return sum(per.values()), per


def union_count(stats: StatTable, D: Iterable[int], s: int) -> int:
    """Direct count of probes of ``s`` seen below at least one node of ``D``."""
    return int(np.logical_or.reduce([stats.reach(j, s) for j in sorted(set(D))]).sum())
