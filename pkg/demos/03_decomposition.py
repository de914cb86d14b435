"""
Splitting a multi-source network into trees
===========================================

Cutting at the nodes where source trees meet leaves ordinary trees.  The
trees below a meeting point see a virtual source whose probe count is
estimated first; the trees above it treat the meeting point as a leaf.
"""
from losstomo import fixtures as F
from losstomo.decompose import run_pipeline
from losstomo.path import estimate_all_paths
from losstomo.simulate import LossModel, simulate
from losstomo.stats import build_stats
from losstomo.topology import decompose, joint_nodes

t = F.f3()
print("meeting points:", sorted(joint_nodes(t)))
for piece in decompose(t):
    print(f"tree rooted at {piece.root}: links {sorted(piece.links)}")

st = build_stats(t, simulate(t, LossModel(F.f3_loss(), t), 3000, seed=2))
pieces = run_pipeline(t, st)
whole = estimate_all_paths(st, t)[1]

# Both routes reach the same numbers up to rounding.
gap = max(abs(a - b) for k, a in pieces.thetas().items()
          if a is not None and (b := whole.theta(k)) is not None)
print("largest difference between tree-by-tree and whole-network estimates:", gap)
for tr in pieces.trees:
    print(f"tree at {tr.piece.root}: probes entering = {tr.root_count:.1f}")
