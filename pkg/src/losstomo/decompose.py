"""
Divide-and-conquer estimation at the joint nodes.

Cutting the network at every joint node leaves ordinary trees.  A tree rooted
at a joint node ("descendant" tree) is estimated like a single-source tree
whose virtual source sent ``n*`` probes, the estimated number of probes that
reached the joint node.  A tree that ends in joint nodes ("ancestor" tree) is
solved bottom-up: a joint-node leaf enters its parent's equation as a known
factor built from the already solved path rates.

Every rate inside a tree is expressed relative to the tree root: with ``R``
the probe count at the root, ``A_P(v)`` is the pass rate from the root to
``v``, and the probe-weighted link rate is ``A_P(child) / A_P(parent)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from scipy.optimize import brentq

from . import consistency as cons
from .consistency import ConsistencyReport, EstimationPlan
from .minc import solve_minc
from .path import (EXACT, Composite, LinkEstimate, PathRateTable, estimate_node,
                   gamma_hat)
from .topology import Piece, Topology, decompose, joint_nodes

DESCENDANT = "descendant"
ANCESTOR = "ancestor"


@dataclass
class TreeEstimate:
    """Result for one independent tree of the decomposition."""
    piece: Piece
    root_count: float | None
    relative_rate: dict[int, float | None]
    pass_rate: dict[int, float | None]
    composites: list[Composite]
    diagnostics: dict = field(default_factory=dict)

    @property
    def group(self) -> str:
        return self.piece.group


@dataclass
class DecomposedEstimate:
    """Per-tree results merged into one link report."""
    trees: list[TreeEstimate]
    joint_table: PathRateTable
    links: LinkEstimate

    @property
    def tree_of(self) -> dict[int, int]:
        return {k: tr.piece.id for tr in self.trees for k in tr.piece.links}

    def thetas(self):
        return self.links.thetas()


# ---------------------------------------------------------------------- equations
def ancestor_polynomial(A: float, gamma_v: float, known: Sequence[tuple[float, float]],
                        gamma_children: Sequence[float]) -> float:
    """Node equation with some children replaced by solved joint-node leaves.

    ``known`` holds ``(A_x, beta_x)`` for each joint-node leaf ``x``, both
    relative to the tree root; the leaf contributes the factor
    ``1 - A_x * beta_x / A``.
    """
    prod = math.prod(1.0 - a * b / A for a, b in known)
    prod *= math.prod(1.0 - g / A for g in gamma_children)
    return 1.0 - gamma_v / A - prod


def solve_ancestor_node(gamma_v: float, known: Sequence[tuple[float, float]],
                        gamma_children: Sequence[float]) -> float:
    """Root ``A >= gamma_v`` of :func:`ancestor_polynomial`."""
    terms = [a * b for a, b in known if a * b > 0] + [g for g in gamma_children if g > 0]
    if gamma_v <= 0:
        raise ValueError("gamma_v must be positive")
    if sum(terms) <= gamma_v:
        raise ValueError("children observations do not overlap; no finite root")
    if max(terms) >= gamma_v:
        return gamma_v
    f = lambda A: ancestor_polynomial(A, gamma_v, known, gamma_children)  # noqa: E731
    lo, hi = gamma_v, max(1.0, 2.0 * gamma_v)
    while f(hi) <= 0:
        lo, hi = hi, 2.0 * hi
    return brentq(f, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=500)


# ---------------------------------------------------------------------- per tree
def _piece_nodes(topology: Topology, piece: Piece) -> list[int]:
    """Nodes of ``piece`` below its root, parents before children."""
    links = set(piece.links)
    child = {topology.link_by_id[k].child for k in links}
    return [v for v in topology.topo_order if v in child]


def _piece_children(topology: Topology, piece: Piece, v: int) -> list[int]:
    links = set(piece.links)
    return [l.child for l in topology.out_links[v] if l.id in links]


def _pooled(stats, v, sources):
    return sum(stats.n1(v, s) for s in sources)


def _rates_to_links(topology, piece, rel, report, bad):
    """Chains between consecutive anchors of the tree and their pass rates."""
    t = topology
    links = set(piece.links)
    pass_rate, composites = {}, []
    for k in sorted(links):
        l = t.link_by_id[k]
        if l.parent != piece.root and l.parent not in rel:
            continue
        chain, v = [k], l.child
        while v not in rel:
            (nxt,) = [m for m in t.out_links[v] if m.id in links]
            chain.append(nxt.id)
            v = nxt.child
        top = 1.0 if l.parent == piece.root else rel[l.parent]
        bottom = rel[v]
        rate = None
        if top is not None and bottom is not None and top > 0 and \
                not any(c in bad for c in chain):
            rate = bottom / top
            if rate > 1.0 or rate < 0.0:
                for c in chain:
                    report.flag_link(c, cons.INFEASIBLE_RATE, f"pass rate {rate!r} clamped")
                rate = min(1.0, max(0.0, rate))
        if len(chain) == 1:
            pass_rate[k] = rate
        else:
            composites.append(Composite(tuple(chain), rate, piece.sources))
            for c in chain:
                pass_rate[c] = None
    return pass_rate, composites


def _anchor_rates(stats, topology, piece, R, skipped, joint_leaf_rate, solve_branch):
    """Root-relative rates at the anchors of a tree (None when not estimable)."""
    t = topology
    S = piece.sources
    rel: dict[int, float | None] = {}
    for v in _piece_nodes(t, piece):
        kids = _piece_children(t, piece, v)
        if v in piece.joint_leaves:
            rel[v] = joint_leaf_rate(v)
        elif not kids:
            rel[v] = None if R is None else _pooled(stats, v, S) / R
        elif len(kids) >= 2:
            N = _pooled(stats, v, S)
            if R is None or v in skipped or N == 0:
                rel[v] = None
            else:
                rel[v] = solve_branch(v, kids, N / R)
    return rel


def estimate_descendant_tree(piece: Piece, n_star_root: float | None, stats,
                             topology: Topology | None = None,
                             report: ConsistencyReport | None = None,
                             plan: EstimationPlan | None = None) -> TreeEstimate:
    """Tree estimator below a joint node fed with ``n*`` virtual probes.

    Only counts inside the tree and the root count are used, so the result
    does not depend on anything above the root once ``n_star_root`` is fixed.
    """
    t = topology or stats.topology
    report = report if report is not None else ConsistencyReport()
    plan = plan or cons.apply(report, EstimationPlan.default(t), stats, t)
    S = piece.sources

    def branch(v, kids, g):
        return solve_minc(g, [_pooled(stats, c, S) / n_star_root for c in kids])

    rel = _anchor_rates(stats, t, piece, n_star_root, plan.skipped_nodes,
                        lambda v: None, branch)
    pr, comps = _rates_to_links(t, piece, rel, report, plan.unestimable_links)
    return TreeEstimate(piece, n_star_root, rel, pr, comps, {"solver": "tree"})


def estimate_ancestor_tree(piece: Piece, leaf_rates: Mapping[int, Mapping[int, float]],
                           leaf_beta: Mapping[int, float], stats,
                           topology: Topology | None = None, root_count: float | None = None,
                           report: ConsistencyReport | None = None,
                           plan: EstimationPlan | None = None) -> TreeEstimate:
    """Bottom-up estimation of a tree that ends in joint nodes.

    Parameters
    ----------
    piece : Piece
    leaf_rates : mapping joint leaf -> {source: A(s, leaf)}
    leaf_beta : mapping joint leaf -> subtree pass rate of the leaf
    root_count : probes at the tree root; defaults to the source's probe
        count when the tree hangs from a source.
    """
    t = topology or stats.topology
    report = report if report is not None else ConsistencyReport()
    plan = plan or cons.apply(report, EstimationPlan.default(t), stats, t)
    S = piece.sources
    if root_count is None:
        if not piece.root_is_source:
            raise ValueError("root_count is required for trees rooted at a joint node")
        (s,) = S
        root_count = stats.probes[s]
    R = root_count

    def leaf_rate(x):
        rates = leaf_rates.get(x)
        if R is None or not rates or any(rates.get(s) is None for s in S):
            return None
        return sum(stats.probes[s] * rates[s] for s in S) / R

    rel: dict[int, float | None] = {}

    def branch(v, kids, g):
        known, other = [], []
        for c in kids:
            if c in piece.joint_leaves:
                if rel.get(c) is None or leaf_beta.get(c) is None:
                    # fall back to the observed confirmed count of the leaf
                    other.append(_pooled(stats, c, S) / R)
                else:
                    known.append((rel[c], leaf_beta[c]))
            else:
                other.append(_pooled(stats, c, S) / R)
        return solve_ancestor_node(g, known, other)

    # joint leaves first, so that their rates are known when their parents are solved
    for x in piece.joint_leaves:
        rel[x] = leaf_rate(x)
    rel.update(_anchor_rates(stats, t, piece, R, plan.skipped_nodes, rel.get, branch))
    pr, comps = _rates_to_links(t, piece, rel, report, plan.unestimable_links)
    return TreeEstimate(piece, R, rel, pr, comps,
                        {"solver": "ancestor", "known_leaves": list(piece.joint_leaves)})


# ---------------------------------------------------------------------- pipeline
def run_pipeline(topology: Topology, stats, method: str = EXACT) -> DecomposedEstimate:
    """Joint nodes first, then descendant trees, then ancestor trees."""
    t = topology.check()
    report = cons.precheck(stats, t)
    plan = cons.apply(report, EstimationPlan.default(t), stats, t)
    J = joint_nodes(t)

    table = PathRateTable(dict(stats.probes))
    for j in sorted(J.joint):
        for s in t.node_sources[j]:
            table.gamma[(j, s)] = gamma_hat(stats, j, s)
        if j in plan.solve_nodes:
            estimate_node(stats, t, j, table, report, method)

    def root_count(piece):
        if piece.root_is_source:
            (s,) = piece.sources
            return stats.probes[s]
        return table.n_star.get(piece.root)

    trees = []
    for piece in decompose(t, J):
        R = root_count(piece)
        if piece.group == DESCENDANT:
            tr = estimate_descendant_tree(piece, R, stats, t, report, plan)
        else:
            rates = {x: {s: table.A.get((x, s)) for s in piece.sources}
                     for x in piece.joint_leaves}
            beta = {x: table.beta.get(x) for x in piece.joint_leaves}
            tr = estimate_ancestor_tree(piece, rates, beta, stats, t, R, report, plan)
        trees.append(tr)

    pass_rate = {l.id: None for l in t.links}
    composites = []
    for tr in trees:
        pass_rate.update(tr.pass_rate)
        composites.extend(tr.composites)
    for k, p in pass_rate.items():
        if p is None and k not in report.link_flags and \
                not any(k in c.links for c in composites):
            report.flag_link(k, cons.UNESTIMABLE, "reported as null")
    for c in composites:
        for k in c.links:
            report.link_flags.setdefault(k, set()).add(cons.COMPOSITE)
    flags = {l.id: report.flags_of_link(l.id) for l in t.links}
    return DecomposedEstimate(trees, table, LinkEstimate(pass_rate, flags, composites, report))
