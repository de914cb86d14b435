"""
Link-level log-likelihood and its direct numerical maximization.

For loss rates ``theta`` the probability that a probe reaching a link's
parent leaves no trace below the link is

    xi_l = theta_l + (1 - theta_l) * u_c,     u_c = prod_{m out of c} xi_m

with ``c`` the link's child and ``u_c = 0`` at a leaf.  The log-likelihood is

    L(theta) = sum_l n_l(1) log(1 - theta_l) + n_l(0) log(xi_l)

with counts pooled over the sources traversing ``l``.  The maximizer is
unique on identifiable topologies, so a bounded quasi-Newton search with a
Newton polish serves as an independent check of the closed-form estimators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .topology import Topology

ORACLE_LINK_LIMIT = 16
EPS = 1e-12

RL, SBRL, SSNL, AOL = "RL", "SBRL", "SSNL", "AOL"


class OracleError(RuntimeError):
    """Maximization did not converge; ``best`` holds the best point found."""

    def __init__(self, msg, best=None, value=None):
        super().__init__(msg)
        self.best = best
        self.value = value


@dataclass
class LikelihoodState:
    """Loss rates with the derived ``xi`` per link and ``beta`` per node."""
    theta: dict[int, float]
    xi: dict[int, float]
    beta: dict[int, float]


class LinkLikelihood:
    """Evaluator of ``L`` and its gradient for fixed statistics.

    The parameter vector is ordered by ``self.link_ids`` (ascending link id).
    """

    def __init__(self, stats, topology: Topology | None = None):
        t = topology or stats.topology
        self.topology = t
        self.link_ids = sorted(l.id for l in t.links)
        self.index = {k: j for j, k in enumerate(self.link_ids)}
        self.n1 = np.array([stats.link_n1(k) for k in self.link_ids], dtype=float)
        self.n0 = np.array([stats.link_n0(k) for k in self.link_ids], dtype=float)
        # nodes bottom-up, with the positions of their out-links and in-links
        self._order = list(t.topo_order)
        self._out = {v: [self.index[l.id] for l in t.out_links[v]] for v in t.nodes}
        self._in = {v: [self.index[l.id] for l in t.in_links[v]] for v in t.nodes}
        self._child = [t.link_by_id[k].child for k in self.link_ids]

    def vector(self, theta) -> np.ndarray:
        if isinstance(theta, dict):
            return np.array([theta[k] for k in self.link_ids], dtype=float)
        return np.asarray(theta, dtype=float)

    def _forward(self, th):
        xi = np.empty_like(th)
        u = {}
        for v in reversed(self._order):
            out = self._out[v]
            u[v] = math.prod(xi[j] for j in out) if out else 0.0
            for j in self._in[v]:
                xi[j] = th[j] + (1.0 - th[j]) * u[v]
        return xi, u

    def state(self, theta) -> LikelihoodState:
        th = self.vector(theta)
        xi, u = self._forward(th)
        return LikelihoodState({k: th[j] for k, j in self.index.items()},
                               {k: xi[j] for k, j in self.index.items()},
                               {v: 1.0 - u[v] for v in self.topology.nodes})

    def __call__(self, theta) -> float:
        th = self.vector(theta)
        if np.any(th < 0) or np.any(th >= 1):
            raise ValueError("loss rates must lie in [0, 1)")
        xi, _ = self._forward(th)
        with np.errstate(divide="ignore"):
            t1 = np.where(self.n1 > 0, self.n1 * np.log1p(-th), 0.0)
            t0 = np.where(self.n0 > 0, self.n0 * np.log(xi), 0.0)
        return float(t1.sum() + t0.sum())

    def gradient(self, theta) -> np.ndarray:
        """Analytic dL/dtheta by reverse accumulation through the ``u`` products."""
        th = self.vector(theta)
        xi, u = self._forward(th)
        G = np.zeros_like(th)           # dL/dxi, total
        for v in self._order:
            # sensitivity of L to u_v, through every in-link of v
            dU = sum(G[j] * (1.0 - th[j]) for j in self._in[v])
            out = self._out[v]
            for j in out:
                others = math.prod(xi[m] for m in out if m != j)
                direct = self.n0[j] / xi[j] if self.n0[j] > 0 else 0.0
                G[j] = direct + dU * others
        uc = np.array([u[c] for c in self._child])
        g = -np.where(self.n1 > 0, self.n1 / (1.0 - th), 0.0) + G * (1.0 - uc)
        return g


def loglik(theta, stats, topology: Topology | None = None) -> float:
    return LinkLikelihood(stats, topology)(theta)


def gradient(theta, stats, topology: Topology | None = None) -> np.ndarray:
    return LinkLikelihood(stats, topology).gradient(theta)


def gradient_check(theta, stats, topology: Topology | None = None, step: float = 1e-6) -> float:
    """Largest relative gap between the analytic gradient and central differences."""
    f = LinkLikelihood(stats, topology)
    th = f.vector(theta)
    g = f.gradient(th)
    fd = np.empty_like(th)
    for j in range(len(th)):
        e = np.zeros_like(th)
        e[j] = step
        fd[j] = (f(th + e) - f(th - e)) / (2 * step)
    scale = np.maximum(np.abs(fd), 1.0)
    return float(np.max(np.abs(g - fd) / scale))


# ---------------------------------------------------------------------- maximization
@dataclass
class OracleResult:
    theta: dict[int, float]
    value: float
    gradient_norm: float
    starts: list[float]


def _polish(f, x, lo, hi, rounds=5):
    """Newton steps with a finite-difference Hessian of the analytic gradient."""
    for _ in range(rounds):
        g = f.gradient(x)
        h = 1e-7
        H = np.empty((len(x), len(x)))
        for j in range(len(x)):
            e = np.zeros_like(x)
            e[j] = h
            H[:, j] = (f.gradient(np.clip(x + e, lo, hi)) - f.gradient(np.clip(x - e, lo, hi))) / (2 * h)
        H = 0.5 * (H + H.T)
        step = np.linalg.lstsq(H, -g, rcond=None)[0]
        cand = np.clip(x + step, lo, hi)
        if f(cand) >= f(x):
            x = cand
        else:
            break
        if np.max(np.abs(step)) < 1e-14:
            break
    return x


def _coordinate_gain(f, x, lo, hi, steps=(1e-5, 1e-7, 1e-9)):
    base = f(x)
    best, arg = 0.0, None
    for j in range(len(x)):
        for d in steps:
            for sgn in (1, -1):
                y = x.copy()
                y[j] = min(hi, max(lo, y[j] + sgn * d))
                gain = f(y) - base
                if gain > best:
                    best, arg = gain, y
    return best, arg


def maximize(stats, topology: Topology | None = None, theta0=None, tol: float = 1e-10,
             starts: int = 3, seed: int = 0, limit: int = ORACLE_LINK_LIMIT,
             max_rounds: int = 20) -> OracleResult:
    """Multi-start bounded maximization of the log-likelihood.

    Converged means no single coordinate step of size 1e-5 .. 1e-9 improves
    ``L`` by ``tol`` or more.
    """
    f = LinkLikelihood(stats, topology)
    m = len(f.link_ids)
    if m > limit:
        raise ValueError(f"{m} links exceed the oracle limit of {limit}")
    lo, hi = EPS, 1.0 - 1e-9
    rng = np.random.default_rng(seed)
    inits = []
    if theta0 is not None:
        inits.append(np.clip(f.vector(theta0), lo, hi))
    while len(inits) < starts:
        inits.append(rng.uniform(0.01, 0.5, m))

    neg = lambda x: -f(x)  # noqa: E731
    neg_grad = lambda x: -f.gradient(x)  # noqa: E731
    best_x, best_v, values = None, -np.inf, []
    for x0 in inits:
        x = x0
        for _ in range(max_rounds):
            res = minimize(neg, x, jac=neg_grad, method="L-BFGS-B", bounds=[(lo, hi)] * m,
                           options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 5000})
            x = _polish(f, res.x, lo, hi)
            gain, y = _coordinate_gain(f, x, lo, hi)
            if gain < tol:
                break
            x = y
        values.append(f(x))
        if f(x) > best_v:
            best_x, best_v = x, f(x)
    gain, _ = _coordinate_gain(f, best_x, lo, hi)
    if gain >= tol:
        raise OracleError(f"no convergence: a coordinate step still gains {gain:.3g}",
                          dict(zip(f.link_ids, best_x)), best_v)
    g = f.gradient(best_x)
    free = (best_x > lo * 10) & (best_x < hi - 1e-9)
    gnorm = float(np.max(np.abs(g[free]))) if free.any() else 0.0
    return OracleResult(dict(zip(f.link_ids, map(float, best_x))), float(best_v), gnorm, values)


# ---------------------------------------------------------------------- link equations
def link_class(topology: Topology, link_id: int) -> str:
    """Case of the per-link stationarity equations a link falls under."""
    t = topology
    l = t.link_by_id[link_id]
    if t.is_root_link(link_id):
        return RL
    if t.is_leaf(l.child):
        return AOL
    return SBRL if len(t.members(link_id)) == 1 else SSNL


def imp(theta, stats, s: int, node: int, topology: Topology | None = None) -> float:
    """Expected number of probes of ``s`` that reached ``node`` without being confirmed there.

    Sums, over every link ``k`` on the path from the source to ``node``, the
    probes that reached the parent of ``k`` but were unconfirmed below ``k``,
    weighted by the posterior probability that such a probe made it down to
    ``node``.
    """
    f = LinkLikelihood(stats, topology)
    t = f.topology
    st = f.state(theta)
    pl = t.parent_link[s]
    path = []
    v = node
    while v in pl:
        path.append(pl[v])
        v = pl[v].parent
    path.reverse()
    total = 0.0
    for a, k in enumerate(path):
        # reach node, then nothing observed below node or below the branches left on the way
        p = 1.0 - st.beta[node]
        for m in path[a:]:
            p *= 1.0 - st.theta[m.id]
        for m in path[a + 1:]:
            p *= math.prod(st.xi[q.id] for q in t.out_links[m.parent] if q.id != m.id)
        total += stats.n0(k.child, s) * p / st.xi[k.id]
    return total


def link_equation_residuals(theta, stats, topology: Topology | None = None) -> dict[int, float]:
    """``theta_l`` minus the right-hand side of its stationarity equation.

    Only meaningful for single-source trees, where every parent has one
    source and the unconfirmed-arrival correction is :func:`imp`.
    """
    f = LinkLikelihood(stats, topology)
    t = f.topology
    if len(t.sources) != 1:
        raise ValueError("link equations are evaluated on single-source trees only")
    (src,) = t.sources
    s = src.id
    st = f.state(theta)
    out = {}
    for k in f.link_ids:
        l = t.link_by_id[k]
        cls = link_class(t, k)
        beta = st.beta[l.child]
        n1 = stats.n1(l.child, s)
        if cls == RL:
            rhs = 1.0 - (n1 / stats.probes[s]) / beta
        else:
            extra = imp(theta, stats, s, l.parent, t)
            reach = stats.n1(l.parent, s) + extra
            if cls == AOL:
                rhs = (stats.n0(l.child, s) + extra) / reach
            else:
                rhs = 1.0 - (n1 / reach) / beta
        out[k] = st.theta[k] - rhs
    return out
