"""
Tree-topology pass-rate polynomial.

For a node ``i`` of a single-source tree with empirical rates ``gamma_i`` and
children rates ``gamma_j`` the path pass rate ``A_i`` solves

    1 - gamma_i / A - prod_j (1 - gamma_j / A) = 0,     A >= gamma_i.

This module solves it in the ``A`` variable with Brent's method and serves
both the descendant-tree estimator and as the reference the general-topology
solver is checked against.
"""
from __future__ import annotations

import math
from typing import Sequence

from scipy.optimize import brentq


def minc_polynomial(A: float, gamma_i: float, gamma_children: Sequence[float]) -> float:
    return 1.0 - gamma_i / A - math.prod(1.0 - g / A for g in gamma_children)


def solve_minc(gamma_i: float, gamma_children: Sequence[float]) -> float:
    """Root ``A >= gamma_i`` of the tree polynomial.

    Raises ValueError when the children do not overlap (sum of
    ``gamma_children`` at most ``gamma_i``), in which case no finite root
    exists.
    """
    if gamma_i <= 0:
        raise ValueError("gamma_i must be positive")
    kids = [g for g in gamma_children if g > 0]
    if sum(kids) <= gamma_i:
        raise ValueError("children observations do not overlap; no finite root")
    if max(kids) >= gamma_i:
        return gamma_i
    lo = gamma_i
    hi = 1.0 if gamma_i < 1.0 else 2.0 * gamma_i
    while minc_polynomial(hi, gamma_i, kids) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise ValueError("failed to bracket the root")
    return brentq(minc_polynomial, lo, hi, args=(gamma_i, kids), xtol=1e-300, rtol=1e-15,
                  maxiter=500)


def minc_tree(stats, topology) -> dict[int, float]:
    """Pass rate from the source to every branching node of a single-source tree."""
    (src,) = topology.sources
    n = stats.probes[src.id]
    out = {}
    for v in topology.tree_nodes[src.id][1:]:
        kids = topology.children(v)
        if len(kids) < 2:
            continue
        g = stats.n1(v, src.id) / n
        out[v] = solve_minc(g, [stats.n1(c, src.id) / n for c in kids])
    return out
