"""
Simulating probes and reducing them to counts
=============================================

Two sources share a three-link region (fixture F2).  Each probe either
survives a link or dies there; receivers only report which probes arrived.
"""
from losstomo import fixtures as F
from losstomo.simulate import LossModel, simulate
from losstomo.stats import build_stats

t = F.f2()
print("sources:", sorted(s.id for s in t.sources))
print("receivers per source:", dict(t.receivers))

# A uniform 5% loss everywhere, except a lossy private link of source 1.
loss = LossModel.uniform(t, 0.05, {1: 0.2})
obs = simulate(t, loss, 5000, seed=1)

# The simulator also keeps the ground truth: how many probes each link dropped.
print("true loss fractions:", {k: round(v, 4) for k, v in obs.actual_loss_rates().items()})

# Everything the estimators need is a handful of counts per (node, source).
st = build_stats(t, obs)
for v in (4, 5, 6):
    print(f"node {v}: seen from source 1 = {st.n1(v, 1)}, from source 2 = {st.n1(v, 2)}")

# Joint counts (probes seen below two children at once) drive the estimator.
print("probes from source 2 seen at both 5 and 6:", st.joint({5, 6}, 2))
