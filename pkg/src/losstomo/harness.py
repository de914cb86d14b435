"""
Replicated simulate -> reduce -> estimate experiments with relative-error reports.

Each replication uses seed ``seed + r``.  For a group size ``g`` the probe
stream of every source is cut into disjoint windows of ``g`` probes; each
window is reduced and estimated on its own, and its relative error
``|actual - estimated| / actual`` uses the simulator's ground-truth loss
fraction within that same window.
"""
from __future__ import annotations

import csv
import io
import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import fixtures
from .consistency import ConsistencyReport
from .decompose import run_pipeline
from .path import EXACT, MERGE, estimate_all_paths
from .simulate import LossModel, simulate
from .stats import build_stats
from .topology import Topology

ESTIMATORS = ("path", "decompose", "oracle")


@dataclass
class ExperimentConfig:
    """Parameters of a replicated experiment.

    ``topology`` is a builtin fixture name (``F1``, ``F2``, ``F3``) or a path
    to a topology JSON file.  ``loss`` is a number, ``{"default": x, "links":
    {id: x}}``, or a plain ``{id: x}`` map; ``None`` selects the fixture's own
    loss model for F3 and 0.01 elsewhere.
    """
    topology: str = "F3"
    loss: object = None
    probes: int = 2000
    group_sizes: list[int] = field(default_factory=lambda: [200, 400, 600, 800, 1000])
    replications: int = 30
    seed: int = 0
    estimator: str = "path"
    method: str = EXACT
    workers: int = 1

    def __post_init__(self):
        self.group_sizes = sorted(int(g) for g in self.group_sizes)
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.method not in (EXACT, MERGE):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.group_sizes or self.group_sizes[0] < 1:
            raise ValueError("group sizes must be positive")
        if self.group_sizes[-1] > self.probes:
            raise ValueError("group sizes cannot exceed the number of probes per source")

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self):
        return asdict(self)

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.replications)]


def load_topology(name_or_path: str) -> Topology:
    if name_or_path.upper() in fixtures.BUILTIN:
        return fixtures.builtin(name_or_path)
    return Topology.load(name_or_path)


def load_loss(topology: Topology, spec, name: str = "") -> LossModel:
    if spec is None:
        if name.upper() == "F3":
            return LossModel(fixtures.f3_loss(), topology)
        return LossModel.uniform(topology, 0.01)
    if isinstance(spec, dict):
        spec = {k: ({int(a): b for a, b in v.items()} if k == "links" else v)
                for k, v in spec.items()} if ("default" in spec or "links" in spec) \
            else {int(k): v for k, v in spec.items()}
    return LossModel.from_spec(topology, spec)


def estimate(stats, topology: Topology, estimator: str = "path", method: str = EXACT,
             seed: int = 0) -> tuple[dict[int, float | None], dict[int, list[str]], ConsistencyReport | None]:
    """Per-link loss estimates, flags and consistency report of one estimator."""
    if estimator == "path":
        _, le = estimate_all_paths(stats, topology, method)
        return le.thetas(), le.flags, le.report
    if estimator == "decompose":
        de = run_pipeline(topology, stats, method)
        return de.thetas(), de.links.flags, de.links.report
    if estimator == "oracle":
        from .oracle import maximize
        res = maximize(stats, topology, seed=seed)
        return dict(res.theta), {}, None
    raise ValueError(f"unknown estimator {estimator!r}")


def _replicate(cfg: ExperimentConfig, seed: int):
    t = load_topology(cfg.topology)
    loss = load_loss(t, cfg.loss, cfg.topology)
    obs = simulate(t, loss, cfg.probes, seed)
    rows, flag_counts = [], {}
    for g in cfg.group_sizes:
        for w in range(cfg.probes // g):
            win = obs.window(w * g, (w + 1) * g)
            actual = win.actual_loss_rates()
            try:
                st = build_stats(t, win, keep_bitmaps=cfg.method == MERGE)
                theta, flags, rep = estimate(st, t, cfg.estimator, cfg.method, seed)
                err = ""
            except Exception as exc:  # a failed replication is recorded, the run goes on
                theta, flags, rep, err = {}, {}, None, f"{type(exc).__name__}: {exc}"
            if rep is not None:
                for k, v in rep.summary().items():
                    flag_counts[k] = flag_counts.get(k, 0) + v
            for l in sorted(t.links):
                est = theta.get(l.id)
                a = actual[l.id]
                rel = abs(a - est) / a if est is not None and a > 0 else float("nan")
                rows.append((seed, g, w, l.id, a, est, rel, ";".join(flags.get(l.id, [])), err))
    return rows, flag_counts


@dataclass
class RelativeErrorReport:
    """Per-window rows and per (link, group size) medians."""
    config: ExperimentConfig
    rows: list[tuple]
    flag_counts: dict[str, int]
    shared_links: tuple[int, ...]

    def medians(self) -> dict[tuple[int, int], float]:
        acc: dict[tuple[int, int], list[float]] = {}
        for seed, g, w, k, a, est, rel, flags, err in self.rows:
            acc.setdefault((k, g), []).append(rel)
        out = {}
        for key, vals in sorted(acc.items()):
            v = np.asarray(vals, dtype=float)
            out[key] = float(np.nanmedian(v)) if np.isfinite(v).any() else float("nan")
        return out

    def median_curve(self, link: int) -> dict[int, float]:
        return {g: m for (k, g), m in self.medians().items() if k == link}

    def failures(self) -> list[tuple]:
        return [r for r in self.rows if r[-1]]

    # ------------------------------------------------------------ outputs
    def errors_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "group_size", "window", "link", "actual_loss", "theta_hat",
                    "relative_error", "flags", "error"])
        for seed, g, win, k, a, est, rel, flags, err in self.rows:
            w.writerow([seed, g, win, k, _f(a), _f(est), _f(rel), flags, err])
        return buf.getvalue()

    def medians_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link", "group_size", "shared", "median_relative_error", "windows"])
        counts = {}
        for r in self.rows:
            counts[(r[3], r[1])] = counts.get((r[3], r[1]), 0) + 1
        for (k, g), m in self.medians().items():
            w.writerow([k, g, int(k in self.shared_links), _f(m), counts[(k, g)]])
        return buf.getvalue()

    def run_log(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "seeds": self.config.seeds(),
            "windows": "disjoint",
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__},
            "flag_summary": dict(sorted(self.flag_counts.items())),
            "failed_windows": len({(r[0], r[1], r[2]) for r in self.failures()}),
        }

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {"errors.csv": self.errors_csv(), "medians.csv": self.medians_csv(),
                 "run_log.json": json.dumps(self.run_log(), indent=2, sort_keys=True) + "\n"}
        paths = []
        for name, text in files.items():
            p = out / name
            p.write_text(text)
            paths.append(p)
        return paths


def _f(x):
    if x is None:
        return ""
    return repr(float(x))


def shared_links(topology: Topology) -> tuple[int, ...]:
    """Links traversed by more than one source."""
    return tuple(sorted(l.id for l in topology.links if len(topology.members(l.id)) > 1))


def run_experiment(config: ExperimentConfig, out_dir=None) -> RelativeErrorReport:
    """Run every replication; results are keyed by seed, so worker order is irrelevant."""
    seeds = config.seeds()
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as ex:
            results = list(ex.map(_replicate, [config] * len(seeds), seeds))
    else:
        results = [_replicate(config, s) for s in seeds]
    rows, flags = [], {}
    for r, fc in results:
        rows.extend(r)
        for k, v in fc.items():
            flags[k] = flags.get(k, 0) + v
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    t = load_topology(config.topology)
    rep = RelativeErrorReport(config, rows, flags, shared_links(t))
    if out_dir is not None:
        rep.write(out_dir)
    return rep


def sibling_information_probe(config: ExperimentConfig, high: int | None = None,
                              low: int | None = None) -> dict[int, dict[int, float]]:
    """Median relative-error curves of a high-loss link and its low-loss sibling.

    Defaults to the F3 pair.  Returns ``{link: {group_size: median}}``.
    """
    high = fixtures.F3_HIGH_LOSS_LINK if high is None else high
    low = fixtures.F3_LOW_LOSS_SIBLING if low is None else low
    rep = run_experiment(config)
    return {high: rep.median_curve(high), low: rep.median_curve(low)}
