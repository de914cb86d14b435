"""
Path-based maximum likelihood estimation for multi-source topologies.

At a node ``i`` reached by the sources ``S(i)`` every path rate satisfies
``A(s,i) * beta_i = gamma_i(s)`` with one common subtree pass rate
``beta_i``.  Pooling the children's confirmed passes over ``S(i)`` gives a
single polynomial for ``A(k,i)`` (any reference source ``k``); the other
sources follow by the ratio of their empirical rates.  Link rates are ratios
of probe-weighted path rates.

The polynomial is solved in the subtree pass rate ``beta = gamma/A``.  With
``c_j`` the pooled child ratios, ``(1 - beta) - prod_j (1 - c_j beta)`` has
the trivial root 0 and, when ``sum(c_j) > 1``, exactly one root in (0, 1];
bisection on that bracket is therefore safe.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

from . import consistency as cons
from .consistency import ConsistencyReport, EstimationPlan
from .topology import Topology

EXACT = "exact"
MERGE = "merge"


class NoInteriorRootError(ValueError):
    """The child ratios sum to at most one: no root in the open interval."""


class ConsistencyError(ValueError):
    """Degenerate statistics (zero observations, zero denominators)."""


# ---------------------------------------------------------------------- scalar pieces
def gamma_hat(stats, i: int, s: int) -> float:
    n = stats.probes.get(s, 0)
    if n <= 0:
        raise ConsistencyError(f"source {s} sent no probes")
    return stats.n1(i, s) / n


def miss_residual(x: float, c: Sequence[float]) -> float:
    """``x - prod((1 - c_j) + c_j x)``; its interior root is ``1 - beta``."""
    return x - math.prod((1.0 - cj) + cj * x for cj in c)


def path_rate_residual(A: float, gamma_k: float, c: Sequence[float]) -> float:
    """The joint-node polynomial in the path rate ``A`` of the reference source."""
    return 1.0 - gamma_k / A - math.prod(1.0 - gamma_k * cj / A for cj in c)


def _h_beta(beta, c):
    return (1.0 - beta) - math.prod(1.0 - cj * beta for cj in c)


def subtree_pass_rate(c: Sequence[float], max_iter: int = 200) -> float:
    """Unique root ``beta`` in (0, 1] of ``1 - beta = prod_j (1 - c_j beta)``.

    Raises
    ------
    NoInteriorRootError
        if ``sum(c) <= 1`` (no overlap between the children's observations).
    """
    c = [float(x) for x in c if x > 0]
    total = sum(c)
    if total <= 1.0:
        kind = "partition" if math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-15) else "sum < 1"
        raise NoInteriorRootError(f"no interior root: sum of child ratios is {total!r} ({kind})")
    if len(c) == 2:
        return (c[0] + c[1] - 1.0) / (c[0] * c[1])
    if max(c) >= 1.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _h_beta(mid, c) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def child_ratios(stats, topology: Topology, i: int) -> list[float]:
    """Pooled ``sum_s n_j(s,1) / sum_s n_i(s,1)`` over s in S(i), one per child."""
    S = topology.node_sources[i]
    total = stats.pooled(i, S)
    if total == 0:
        raise ConsistencyError(f"node {i}: no source observed its subtree")
    return [stats.pooled(j, S) / total for j in topology.children(i)]


def best_bipartition(stats, topology: Topology, i: int):
    """Split the children of ``i`` in two groups whose observations overlap most.

    Returns ``(group1, group2, n_z1, n_z2)`` with the pooled merged counts.
    Ties are broken by the lexicographically smallest first group.
    """
    from .stats import merge_children

    kids = sorted(topology.children(i))
    first, rest = kids[0], kids[1:]
    total = stats.pooled(i)
    best = None
    for r in range(0, len(rest)):
        for extra in itertools.combinations(rest, r):
            g1 = (first,) + extra
            g2 = tuple(k for k in kids if k not in g1)
            n1, _ = merge_children(stats, i, g1)
            n2, _ = merge_children(stats, i, g2)
            overlap = n1 + n2 - total
            key = (overlap, tuple(-k for k in g1))
            if best is None or key > best[0]:
                best = (key, g1, g2, n1, n2)
    _, g1, g2, n1, n2 = best
    return g1, g2, n1, n2


def solve_beta(stats, topology: Topology, i: int, method: str = EXACT) -> float:
    """Subtree pass rate of node ``i`` from pooled statistics."""
    if method == MERGE and len(topology.children(i)) > 2:
        _, _, n1, n2 = best_bipartition(stats, topology, i)
        total = stats.pooled(i)
        return subtree_pass_rate([n1 / total, n2 / total])
    if method not in (EXACT, MERGE):
        raise ValueError(f"unknown method {method!r}")
    return subtree_pass_rate(child_ratios(stats, topology, i))


def reference_source(stats, topology: Topology, i: int) -> int:
    """Source with the most confirmed passes at ``i`` (smallest id on ties)."""
    S = topology.node_sources[i]
    return max(S, key=lambda s: (stats.n1(i, s), -s))


def solve_joint_polynomial(stats, topology: Topology, i: int, k: int | None = None,
                           method: str = EXACT) -> float:
    """Path rate ``A(k, i)`` from the reference source ``k`` to node ``i``.

    The returned root is not clamped; values above one signal infeasible
    statistics and are flagged by :func:`estimate_all_paths`.
    """
    if k is None:
        k = reference_source(stats, topology, i)
    if k not in topology.node_sources[i]:
        raise ValueError(f"source {k} does not reach node {i}")
    if len(topology.children(i)) < 2:
        raise ValueError(f"node {i} does not branch; its path rate is not identifiable")
    g = gamma_hat(stats, i, k)
    if g == 0:
        raise ConsistencyError(f"node {i}: gamma of reference source {k} is zero")
    return g / solve_beta(stats, topology, i, method)


def propagate_sources(A_k: float, stats, topology: Topology, i: int, k: int):
    """Rates of every source in S(i) from the reference rate (ratio of gammas).

    Returns ``(rates, clamped)`` where ``clamped`` lists the sources whose
    rate exceeded one and was set to one.
    """
    gk = gamma_hat(stats, i, k)
    if gk == 0:
        raise ConsistencyError(f"node {i}: gamma of reference source {k} is zero")
    rates, clamped = {}, []
    for s in topology.node_sources[i]:
        a = A_k * gamma_hat(stats, i, s) / gk
        if a > 1.0:
            a = 1.0
            clamped.append(s)
        rates[s] = a
    return rates, clamped


def n_star(A_k: float, stats, topology: Topology, i: int, k: int) -> float:
    """Estimated number of probes (all sources) reaching node ``i``."""
    gk = gamma_hat(stats, i, k)
    return A_k / gk * sum(stats.probes[s] * gamma_hat(stats, i, s)
                          for s in topology.node_sources[i])


def beta_hat(A: float, gamma: float) -> float:
    if A <= 0:
        raise ValueError("path rate must be positive")
    return gamma / A


# ---------------------------------------------------------------------- tables
@dataclass
class PathRateTable:
    """Per (node, source) empirical and solved path rates plus per-node summaries."""
    probes: dict[int, float]
    gamma: dict[tuple[int, int], float] = field(default_factory=dict)
    A: dict[tuple[int, int], float] = field(default_factory=dict)
    beta: dict[int, float] = field(default_factory=dict)
    n_star: dict[int, float] = field(default_factory=dict)
    reference: dict[int, int] = field(default_factory=dict)

    def rate(self, s, i):
        return self.A.get((i, s))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "source", "gamma", "A", "beta", "n_star"])
        for (i, s) in sorted(self.gamma):
            w.writerow([i, s, _fmt(self.gamma[(i, s)]), _fmt(self.A.get((i, s))),
                        _fmt(self.beta.get(i)), _fmt(self.n_star.get(i))])
        return buf.getvalue()


@dataclass
class Composite:
    """Serial links whose individual rates are not identifiable."""
    links: tuple[int, ...]
    pass_rate: float | None
    sources: tuple[int, ...]


@dataclass
class LinkEstimate:
    """Per-link pass rate ``1 - theta`` (None when not estimable) plus flags."""
    pass_rate: dict[int, float | None]
    flags: dict[int, list[str]]
    composites: list[Composite]
    report: ConsistencyReport

    def theta(self, k) -> float | None:
        p = self.pass_rate.get(k)
        return None if p is None else 1.0 - p

    def thetas(self) -> dict[int, float | None]:
        return {k: self.theta(k) for k in sorted(self.pass_rate)}

    def to_csv(self, true_theta=None, tree_of=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["link", "true_theta", "theta_hat", "flags"]
        if tree_of is not None:
            head.append("tree")
        w.writerow(head)
        for k in sorted(self.pass_rate):
            row = [k, _fmt(None if true_theta is None else true_theta.get(k)),
                   _fmt(self.theta(k)), ";".join(self.flags.get(k, []))]
            if tree_of is not None:
                row.append(tree_of.get(k, ""))
            w.writerow(row)
        for c in self.composites:
            row = ["+".join(map(str, c.links)), "",
                   _fmt(None if c.pass_rate is None else 1.0 - c.pass_rate), cons.COMPOSITE]
            if tree_of is not None:
                row.append(tree_of.get(c.links[0], ""))
            w.writerow(row)
        return buf.getvalue()


def _fmt(x):
    return "" if x is None else repr(float(x))


# ---------------------------------------------------------------------- link rates
def anchors(topology: Topology) -> set[int]:
    """Nodes whose path rates are identifiable: roots, branching nodes, leaves."""
    t = topology
    return {v for v in t.nodes if v in t.root_nodes or len(t.out_links[v]) != 1}


def link_units(topology: Topology):
    """Chains of links between consecutive anchors.

    Yields ``(links, start_node, end_node, sources)``; a chain of one link is
    an individually identifiable link.
    """
    t = topology
    anc = anchors(t)
    for l in sorted(t.links):
        if l.parent not in anc:
            continue
        chain, v = [l.id], l.child
        while v not in anc:
            nxt = t.out_links[v][0]
            chain.append(nxt.id)
            v = nxt.child
        yield tuple(chain), l.parent, v, t.members(l.id)


def path_to_link(table: PathRateTable, topology: Topology,
                 report: ConsistencyReport | None = None,
                 plan: EstimationPlan | None = None) -> LinkEstimate:
    """Link pass rates as probe-weighted ratios of child and parent path rates.

    For a link ``p -> c`` traversed by sources ``M``::

        1 - theta = sum_{s in M} n^s A(s, c) / sum_{s in M} n^s A(s, p)
    """
    t = topology
    report = report if report is not None else ConsistencyReport()
    bad = plan.unestimable_links if plan is not None else {}
    pass_rate: dict[int, float | None] = {l.id: None for l in t.links}
    composites = []

    def A(s, v):
        if v in t.root_nodes:
            return 1.0
        return table.A.get((v, s))

    for chain, p, c, M in link_units(t):
        num = [A(s, c) for s in M]
        den = [A(s, p) for s in M]
        rate = None
        if not any(k in bad for k in chain) and None not in num and None not in den:
            d = sum(table.probes[s] * a for s, a in zip(M, den))
            if d > 0:
                rate = sum(table.probes[s] * a for s, a in zip(M, num)) / d
                if rate > 1.0 or rate < 0.0:
                    for k in chain:
                        report.flag_link(k, cons.INFEASIBLE_RATE,
                                         f"pass rate {rate!r} clamped to [0, 1]")
                    rate = min(1.0, max(0.0, rate))
        if rate is None:
            for k in chain:
                if k not in report.link_flags:
                    report.flag_link(k, cons.UNESTIMABLE, "reported as null")
        if len(chain) == 1:
            pass_rate[chain[0]] = rate
        else:
            composites.append(Composite(chain, rate, tuple(M)))
    for comp in composites:
        for k in comp.links:
            report.link_flags.setdefault(k, set()).add(cons.COMPOSITE)
    flags = {l.id: report.flags_of_link(l.id) for l in t.links}
    return LinkEstimate(pass_rate, flags, composites, report)


# ---------------------------------------------------------------------- driver
def estimate_node(stats, topology: Topology, i: int, table: PathRateTable,
                  report: ConsistencyReport, method: str = EXACT) -> None:
    """Solve node ``i`` and store gamma, A(s,i), beta and n* in ``table``."""
    k = reference_source(stats, topology, i)
    A_k = solve_joint_polynomial(stats, topology, i, k, method)
    rates, clamped = propagate_sources(A_k, stats, topology, i, k)
    table.reference[i] = k
    table.A.update({(i, s): a for s, a in rates.items()})
    table.beta[i] = beta_hat(A_k, gamma_hat(stats, i, k))
    table.n_star[i] = n_star(A_k, stats, topology, i, k)
    for s in clamped:
        report.flag_node(i, cons.INFEASIBLE_RATE, f"A({s},{i}) clamped to 1")


def estimate_all_paths(stats, topology: Topology | None = None, method: str = EXACT,
                       report: ConsistencyReport | None = None):
    """Solve every branching node, then map path rates to link rates.

    Returns
    -------
    table : PathRateTable
    links : LinkEstimate
    """
    t = (topology or stats.topology).check()
    if report is None:
        report = cons.precheck(stats, t)
    plan = cons.apply(report, EstimationPlan.default(t), stats, t)
    table = PathRateTable(dict(stats.probes))
    for i in t.nodes:
        if i in t.root_nodes:
            continue
        for s in t.node_sources[i]:
            table.gamma[(i, s)] = gamma_hat(stats, i, s)
    for i in sorted(plan.solve_nodes):
        estimate_node(stats, t, i, table, report, method)
    for v in t.nodes:
        if t.is_leaf(v) and v not in t.root_nodes:
            table.beta[v] = 1.0
            table.n_star[v] = stats.pooled(v)
            for s in t.node_sources[v]:
                table.A[(v, s)] = table.gamma[(v, s)]
    return table, path_to_link(table, t, report, plan)
