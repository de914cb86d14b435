"""Loss tomography for networks covered by several source-rooted multicast trees."""
from .topology import Topology, Link, Source, validate, joint_nodes, decompose
from .simulate import LossModel, ObservationSet, simulate
from .stats import StatTable, build_stats, merge_children
from .path import estimate_all_paths, solve_joint_polynomial
from .decompose import run_pipeline

__version__ = "0.1.0"
