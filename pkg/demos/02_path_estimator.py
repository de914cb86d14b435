"""
Estimating link loss from receiver counts
=========================================

Start with the smallest case: one source, one internal link and two leaves.
With exact counts the pass rate to the branch point has a closed form.
"""
from losstomo import fixtures as F
from losstomo.path import estimate_all_paths, solve_joint_polynomial
from losstomo.simulate import LossModel, simulate
from losstomo.stats import StatTable, build_stats

t = F.f1()
st = StatTable(t, {0: 1000}, {(1, 0): 784, (2, 0): 720, (3, 0): 640},
               joint={(frozenset({2, 3}), 0): 576})
print("pass rate to the branch point:", solve_joint_polynomial(st, t, 1, 0))
print("closed form n1*n2/(n*n12):    ", 720 * 640 / (1000 * 576))

# On a larger two-source fixture the same machinery runs at every node.
t = F.f3()
obs = simulate(t, LossModel(F.f3_loss(), t), 4000, seed=5)
table, links = estimate_all_paths(build_stats(t, obs), t)
truth = obs.actual_loss_rates()

print("\nlink  true    estimated")
for k in sorted(links.pass_rate):
    est = links.theta(k)
    shown = "  n/a" if est is None else f"{est:.4f}"
    print(f"{k:>4}  {truth[k]:.4f}  {shown}")

# Links below a non-branching node cannot be separated; they come back as chains.
for c in links.composites:
    print("chain", "+".join(map(str, c.links)), "passes", round(c.pass_rate, 4))
