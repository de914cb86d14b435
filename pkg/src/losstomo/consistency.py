"""
Detection and handling of degenerate observation sets.

Three circumstances make a path or link rate inestimable: a subtree that
never observed a probe, a rate estimate outside [0, 1], and a node whose
children's observations exactly partition its own (the node's polynomial
then has no interior root).  With several sources the pooled statistics
decide; a single source's degeneracy is only informational when the other
sources break it.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .topology import Topology

ZERO_GAMMA_SBRL = "ZERO_GAMMA_SBRL"
ZERO_GAMMA_SSNL = "ZERO_GAMMA_SSNL"
INFEASIBLE_RATE = "INFEASIBLE_RATE"
PARTITION = "PARTITION"
MULTI_SOURCE_ZERO_SUM = "MULTI_SOURCE_ZERO_SUM"
MULTI_SOURCE_PARTITION = "MULTI_SOURCE_PARTITION"
COMPOSITE = "COMPOSITE"
UNESTIMABLE = "UNESTIMABLE"

ALL_FLAGS = (ZERO_GAMMA_SBRL, ZERO_GAMMA_SSNL, INFEASIBLE_RATE, PARTITION,
             MULTI_SOURCE_ZERO_SUM, MULTI_SOURCE_PARTITION)


@dataclass
class Action:
    kind: str       # "node" or "link"
    id: int
    flag: str
    action: str


@dataclass
class ConsistencyReport:
    node_flags: dict[int, set[str]] = field(default_factory=dict)
    link_flags: dict[int, set[str]] = field(default_factory=dict)
    actions: list[Action] = field(default_factory=list)

    def flag_node(self, i, flag, action):
        self.node_flags.setdefault(i, set()).add(flag)
        self.actions.append(Action("node", i, flag, action))

    def flag_link(self, k, flag, action):
        self.link_flags.setdefault(k, set()).add(flag)
        self.actions.append(Action("link", k, flag, action))

    def flags_of_link(self, k) -> list[str]:
        return sorted(self.link_flags.get(k, ()))

    def flags_of_node(self, i) -> list[str]:
        return sorted(self.node_flags.get(i, ()))

    def summary(self) -> dict[str, int]:
        return dict(sorted(Counter(a.flag for a in self.actions).items()))

    def __bool__(self):
        return bool(self.actions)


@dataclass
class EstimationPlan:
    """Which node polynomials to solve and which links to report as null."""
    solve_nodes: set[int]
    skipped_nodes: dict[int, str] = field(default_factory=dict)
    unestimable_links: dict[int, str] = field(default_factory=dict)

    @classmethod
    def default(cls, topology: Topology) -> "EstimationPlan":
        t = topology
        return cls({v for v in t.nodes if len(t.out_links[v]) >= 2 and v not in t.root_nodes})


def precheck(stats, topology: Topology) -> ConsistencyReport:
    """Flag zero-observation subtrees and partition nodes."""
    t = topology
    rep = ConsistencyReport()
    for i in t.topo_order:
        if i in t.root_nodes:
            continue
        S = t.node_sources[i]
        counts = {s: stats.n1(i, s) for s in S}
        parent_alive = any(stats.parent_count(i, s) > 0 for s in S)
        if len(S) == 1:
            if counts[S[0]] == 0 and parent_alive:
                rep.flag_node(i, ZERO_GAMMA_SBRL,
                              "subtree pruned except parts intersecting other trees")
        elif all(v == 0 for v in counts.values()):
            rep.flag_node(i, MULTI_SOURCE_ZERO_SUM, "no source observed the subtree")
        elif any(v == 0 for v in counts.values()):
            zero = sorted(s for s, v in counts.items() if v == 0)
            rep.flag_node(i, ZERO_GAMMA_SSNL,
                          f"no pruning; sources {zero} unobserved, estimated from the others")

        kids = t.children(i)
        total = sum(counts.values())
        if len(kids) < 2 or total == 0:
            continue
        child_total = sum(stats.n1(c, s) for c in kids for s in S)
        if child_total == total:
            rep.flag_node(i, PARTITION, "polynomial skipped; incident links unestimable")
        else:
            split = [s for s in S if counts[s] > 0
                     and counts[s] == sum(stats.n1(c, s) for c in kids)]
            if split:
                rep.flag_node(i, MULTI_SOURCE_PARTITION,
                              f"sources {split} partition alone; estimated from pooled statistics")
    return rep


def apply(report: ConsistencyReport, plan: EstimationPlan, stats,
          topology: Topology) -> EstimationPlan:
    """Remove degenerate nodes from ``plan`` and mark the links that cannot be estimated."""
    t = topology
    out = EstimationPlan(set(plan.solve_nodes), dict(plan.skipped_nodes),
                         dict(plan.unestimable_links))
    for i in sorted(out.solve_nodes):
        if stats.pooled(i) == 0:
            out.skipped_nodes[i] = "zero"
        elif PARTITION in report.node_flags.get(i, ()):
            out.skipped_nodes[i] = PARTITION
    out.solve_nodes -= set(out.skipped_nodes)

    for l in sorted(t.links):
        mem = t.members(l.id)
        below = sum(stats.n1(l.child, s) for s in mem)
        above = sum(stats.n1(l.parent, s) for s in mem)
        if above == 0 or below == 0:
            out.unestimable_links[l.id] = "pruned"
        elif out.skipped_nodes.get(l.parent) == PARTITION or \
                out.skipped_nodes.get(l.child) == PARTITION:
            out.unestimable_links[l.id] = PARTITION
    for k, why in out.unestimable_links.items():
        if k not in report.link_flags:
            l = t.link_by_id[k]
            flag = _link_flag(report, t, l, why)
            report.flag_link(k, flag, "reported as null")
    return out


def _link_flag(report, t, l, why):
    if why == PARTITION:
        return PARTITION
    for v in (l.child, l.parent):
        for f in (MULTI_SOURCE_ZERO_SUM, ZERO_GAMMA_SBRL, ZERO_GAMMA_SSNL):
            if f in report.node_flags.get(v, ()):
                return f
    return ZERO_GAMMA_SSNL if len(t.members(l.id)) < len(t.node_sources[l.child]) \
        else ZERO_GAMMA_SBRL
