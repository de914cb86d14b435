"""
Replicated error study on F3
============================

Each replication simulates a fresh probe stream, cuts it into windows of
a given size and compares every window's estimates with what actually
happened on each link during that window.
"""
from losstomo import fixtures as F
from losstomo.harness import ExperimentConfig, run_experiment, shared_links

cfg = ExperimentConfig(topology="F3", probes=2000, group_sizes=[250, 500, 1000, 2000],
                       replications=10, seed=0)
rep = run_experiment(cfg)
shared = set(shared_links(F.f3()))

print("median relative error by window size")
print("link  shared " + " ".join(f"{g:>7}" for g in cfg.group_sizes))
for l in sorted(F.f3().links):
    curve = rep.median_curve(l.id)
    print(f"{l.id:>4}  {'yes' if l.id in shared else ' no':>6} "
          + " ".join(f"{curve[g]:7.4f}" for g in cfg.group_sizes))

# A lossy link is easier to pin down than its nearly lossless sibling:
# the sibling's losses are rare, so each one weighs heavily in relative terms.
hi, lo = F.F3_HIGH_LOSS_LINK, F.F3_LOW_LOSS_SIBLING
print(f"\nlink {hi} (lossy) vs link {lo} (clean) at 1000 probes:",
      round(rep.median_curve(hi)[1000], 4), "vs", round(rep.median_curve(lo)[1000], 4))
