"""Command line interface: ``mkvcub solve|converge|verify``.

The worker thread count is read from ``MKVCUB_THREADS`` unless ``--threads``
is given.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

from pydantic import ValidationError

from . import harness
from .cubature import builtin_formula
from .ode import OdeConfig
from .partition import make_partition
from .tree import Limits, solve


def _dump(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, default=str)
    sys.stdout.write("\n")


def _load(path, threads):
    cfg = harness.ExperimentConfig.load(path)
    if threads is not None:
        cfg = cfg.model_copy(update={"workers": threads})
    return cfg


def cmd_solve(args) -> int:
    cfg = _load(args.config, args.threads)
    problem = cfg.build_problem()
    n = args.n if args.n is not None else cfg.sweep[-1]
    part = make_partition(cfg.partition.kind, problem.horizon, n, cfg.partition.gamma, cfg.partition.r)

    def progress(level, nodes, moments):
        print(f"level {level}: {nodes} nodes, moments {list(moments)}", file=sys.stderr)

    res = solve(
        problem,
        builtin_formula(cfg.formula.degree, cfg.formula.d),
        part,
        cfg.method.build(),
        OdeConfig(cfg.ode.abs_tol, cfg.ode.rel_tol, cfg.ode.max_substeps),
        Limits(max_nodes=cfg.max_nodes, workers=cfg.workers),
        progress if args.verbose else None,
    )
    _dump(
        {
            "estimate": res.estimate,
            "nodes": res.nodes,
            "seconds": res.seconds,
            "moment_trace": res.moment_trace,
            "config": res.config,
            "ode_stats": res.ode_stats,
        }
    )
    return 0


def cmd_converge(args) -> int:
    cfg = _load(args.config, args.threads)

    def progress(row):
        print(f"n={row.n} estimate={row.estimate:.12g} error={row.abs_error:.3e} ({row.seconds:.1f}s)", file=sys.stderr)

    table = harness.run_convergence(cfg, progress)
    csv_path = args.csv or cfg.output.csv
    svg_path = args.svg or cfg.output.svg
    if csv_path:
        harness.write_csv(table.rows, csv_path)
    if svg_path:
        good = [r for r in table.rows if not r.failed]
        svg = harness.render_svg([r.n for r in good], [r.abs_error for r in good], table.slope, cfg.problem)
        with open(svg_path, "w") as fh:
            fh.write(svg)
    _dump(
        {
            "reference": table.reference,
            "ref_stderr": table.ref_stderr,
            "slope": table.slope,
            "fit_window": cfg.fit_window,
            "rows": [
                {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in vars(r).items()} for r in table.rows
            ],
            "notes": table.notes,
            "failed": table.failed,
        }
    )
    return 1 if table.failed else 0


def cmd_verify(args) -> int:
    if args.subject == "cubature":
        report = harness.verify_cubature(args.degree, args.d, args.tol)
    elif args.subject == "partition":
        report = harness.verify_partition(args.kind, args.gamma, args.a, args.b, args.r)
    elif args.subject == "lagrange":
        report = harness.verify_lagrange(args.seed)
    else:
        report = harness.verify_taylor(args.seed)
    _dump(report)
    return 0 if report["passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mkvcub", description="Cubature methods for McKean-Vlasov SDEs")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one tree solve")
    s.add_argument("config")
    s.add_argument("--n", type=int, help="number of steps (default: last sweep entry)")
    s.add_argument("--threads", type=int)
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("converge", help="run a convergence sweep")
    c.add_argument("config")
    c.add_argument("--csv")
    c.add_argument("--svg")
    c.add_argument("--threads", type=int)
    c.set_defaults(func=cmd_converge)

    v = sub.add_parser("verify", help="run a self-check")
    v.add_argument("subject", choices=["cubature", "partition", "lagrange", "taylor"])
    v.add_argument("--degree", type=int, default=5)
    v.add_argument("--d", type=int, default=1)
    v.add_argument("--tol", type=float, default=1e-12)
    v.add_argument("--kind", default="kusuoka")
    v.add_argument("--gamma", type=float, default=4.5)
    v.add_argument("--a", type=float, default=3.0)
    v.add_argument("--b", type=float, default=1.0)
    v.add_argument("--r", type=int)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
