"""
Checking estimates against a direct likelihood maximizer
========================================================

For small networks the log-likelihood over all link loss rates can be
maximized numerically.  It serves as an independent reference.
"""
import math

import numpy as np

from losstomo import fixtures as F
from losstomo.oracle import LinkLikelihood, gradient_check, maximize
from losstomo.path import estimate_all_paths
from losstomo.simulate import LossModel, simulate
from losstomo.stats import build_stats

rng = np.random.default_rng(0)
t = F.random_two_source(rng, max_links=10)
st = build_stats(t, simulate(t, LossModel(F.random_loss(rng, t), t), 10_000, seed=0))

res = maximize(st, t)
_, links = estimate_all_paths(st, t)
print(f"log-likelihood at the maximizer: {res.value:.6f}")

f = LinkLikelihood(st, t)
print(f"log-likelihood at the path estimate: {f(links.thetas()):.6f}")

gaps = [abs(links.theta(k) - res.theta[k]) for k in links.pass_rate if links.theta(k) is not None]
for c in links.composites:
    gaps.append(abs(c.pass_rate - math.prod(1 - res.theta[k] for k in c.links)))
print("largest per-link gap:", max(gaps))

# The analytic gradient agrees with finite differences.
print("gradient check:", gradient_check(res.theta, st, t))
