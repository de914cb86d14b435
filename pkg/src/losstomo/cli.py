"""
Command-line entry point.

Every subcommand accepts ``--seed``, ``--config`` (a JSON file whose keys
provide defaults for the subcommand's options) and ``--out`` (an output
directory).  Exit status is 0 on success, 1 on invalid topologies and 2 on
other hard errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import ExperimentConfig, load_loss, load_topology, run_experiment
from .path import EXACT, MERGE, estimate_all_paths
from .simulate import ObservationSet, simulate, tally_csv
from .stats import StatTable, build_stats
from .topology import validate


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _loss_arg(text):
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return json.loads(Path(text).read_text())


def _load_stats(args, t):
    if args.stats:
        return StatTable.from_csv(Path(args.stats).read_text(), t)
    if args.trace:
        return build_stats(t, _load_trace(args.trace, t))
    raise SystemExit("one of --stats or --trace is required")


def _load_trace(path, t):
    if str(path).endswith(".csv"):
        return ObservationSet.from_csv(Path(path).read_text(), t)
    return ObservationSet.load(path)


# ---------------------------------------------------------------------- subcommands
def cmd_validate(args):
    t = load_topology(args.topology)
    report = validate(t)
    lines = [f"{v.rule}\t{v.subject}\t{v.message}" for v in report]
    if args.out:
        (_out(args) / "validation.tsv").write_text("rule\tsubject\tmessage\n" +
                                                   "".join(x + "\n" for x in lines))
    for x in lines:
        print(x)
    print("valid" if not report else f"{len(report)} violation(s)")
    return 0 if not report else 1


def cmd_simulate(args):
    t = load_topology(args.topology)
    loss = load_loss(t, _loss_arg(args.loss), args.topology)
    obs = simulate(t, loss, args.probes, args.seed)
    out = _out(args)
    obs.save(out / "trace.npz")
    if args.csv:
        (out / "trace.csv").write_text(obs.to_csv())
    (out / "tally.csv").write_text(tally_csv(obs))
    (out / "topology.json").write_text(t.to_json())
    print(f"wrote {sum(obs.counts.values())} probes to {out}")
    return 0


def cmd_stats(args):
    t = load_topology(args.topology)
    st = build_stats(t, _load_trace(args.trace, t))
    (_out(args) / "stats.csv").write_text(st.to_csv())
    return 0


def cmd_estimate(args):
    t = load_topology(args.topology)
    st = _load_stats(args, t)
    truth = None
    if args.tally:
        import csv
        import io
        truth = {}
        for row in csv.DictReader(io.StringIO(Path(args.tally).read_text())):
            lost, passed = int(row["losses"]), int(row["passes"])
            truth[int(row["link"])] = lost / (lost + passed) if lost + passed else None
    out = _out(args)
    if args.estimator == "decompose":
        from .decompose import run_pipeline
        de = run_pipeline(t, st, args.method)
        links, table, tree_of = de.links, de.joint_table, de.tree_of
    else:
        table, links = estimate_all_paths(st, t, args.method)
        tree_of = None
    (out / "estimates.csv").write_text(links.to_csv(truth, tree_of))
    (out / "path_rates.csv").write_text(table.to_csv())
    summary = links.report.summary()
    print(json.dumps({"flags": summary}, sort_keys=True))
    return 0


def cmd_oracle(args):
    from .oracle import maximize
    t = load_topology(args.topology)
    st = _load_stats(args, t)
    res = maximize(st, t, seed=args.seed, starts=args.starts)
    lines = ["link,theta"] + [f"{k},{v!r}" for k, v in sorted(res.theta.items())]
    (_out(args) / "oracle.csv").write_text("\n".join(lines) + "\n")
    print(f"loglik {res.value!r}")
    return 0


def cmd_experiment(args):
    fields = {k: getattr(args, k) for k in ("topology", "probes", "replications", "seed",
                                            "estimator", "method", "workers")}
    fields["loss"] = _loss_arg(args.loss)
    fields["group_sizes"] = [int(x) for x in str(args.group_sizes).split(",")] \
        if isinstance(args.group_sizes, str) else args.group_sizes
    cfg = ExperimentConfig.from_dict(fields)
    rep = run_experiment(cfg, _out(args))
    print(json.dumps(rep.run_log()["flag_summary"], sort_keys=True))
    return 0


# ---------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="losstomo", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="JSON file with default option values")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--topology", default="F1",
                        help="builtin name (F1, F2, F3) or topology JSON path")
        return sp

    sp = common(sub.add_parser("validate", help="check topology invariants"), None)
    sp.set_defaults(func=cmd_validate)

    sp = common(sub.add_parser("simulate", help="simulate probes and write a trace"), "out")
    sp.add_argument("--loss", help="JSON number/object or path to one")
    sp.add_argument("--probes", type=int, default=1000, help="probes per source")
    sp.add_argument("--csv", action="store_true", help="also write the textual trace")
    sp.set_defaults(func=cmd_simulate)

    sp = common(sub.add_parser("stats", help="reduce a trace to sufficient statistics"), "out")
    sp.add_argument("--trace", required=True)
    sp.set_defaults(func=cmd_stats)

    sp = common(sub.add_parser("estimate", help="estimate link loss rates"), "out")
    sp.add_argument("--stats")
    sp.add_argument("--trace")
    sp.add_argument("--tally", help="ground-truth tally CSV for the true-theta column")
    sp.add_argument("--estimator", choices=("path", "decompose"), default="path")
    sp.add_argument("--method", choices=(EXACT, MERGE), default=EXACT)
    sp.set_defaults(func=cmd_estimate)

    sp = common(sub.add_parser("oracle", help="maximize the link likelihood directly"), "out")
    sp.add_argument("--stats")
    sp.add_argument("--trace")
    sp.add_argument("--starts", type=int, default=3)
    sp.set_defaults(func=cmd_oracle)

    sp = common(sub.add_parser("experiment", help="replicated relative-error study"), "out")
    sp.set_defaults(topology="F3")
    sp.add_argument("--loss")
    sp.add_argument("--probes", type=int, default=2000)
    sp.add_argument("--group-sizes", dest="group_sizes", default="200,400,600,800,1000")
    sp.add_argument("--replications", type=int, default=30)
    sp.add_argument("--estimator", choices=("path", "decompose", "oracle"), default="path")
    sp.add_argument("--method", choices=(EXACT, MERGE), default=EXACT)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_experiment)
    return p


def parse_args(argv=None):
    p = build_parser()
    args = p.parse_args(argv)
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
        if isinstance(cfg.get("loss"), (dict, int, float)):
            cfg["loss"] = json.dumps(cfg["loss"])
        if isinstance(cfg.get("group_sizes"), list):
            cfg["group_sizes"] = ",".join(map(str, cfg["group_sizes"]))
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        # config supplies defaults, explicit command-line flags win
        sub = p._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            p.error(f"unknown config keys for {args.command}: {unknown}")
        sub.set_defaults(**cfg)
        args = p.parse_args(argv)
    return args


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
