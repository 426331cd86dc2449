"""Command-line entry point: cutting-plane runs, engine solves, oracle checks, benchmarks.

Exit codes: 0 success, 1 input/config error, 2 budget or iteration cap,
3 internal solver failure. Every output JSON carries a ``provenance`` key with
the verbatim argv so runs are reproducible from their flags plus seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .bench import BenchmarkParams, run_comparison
from .engine import CSV_HEADER as RUN_CSV_HEADER
from .engine import SolverConfig, run
from .errors import (
    InputError,
    IterationCapError,
    NodeBudgetExceededError,
    QpInfeasibleError,
    QpNonconvergenceError,
    SqdpError,
)
from .model import Box
from .oracle import extensive_form_value, subtree_value
from .qcsc import ALGORITHMS, BUILTIN_OBJECTIVES, PiecewiseQuadratic
from .serialize import dump_json, ensure_dir, load_instance, write_csv

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CAP = 2
EXIT_SOLVER = 3


def _provenance(argv) -> dict:
    return {"argv": list(argv), "version": __version__}


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise InputError(f"cannot parse vector {text!r}: {exc}") from exc


def _load_objective(spec: str):
    """Resolve a named built-in objective or a piecewise-quadratic JSON file."""
    if spec in BUILTIN_OBJECTIVES:
        obj = BUILTIN_OBJECTIVES[spec]()
        return obj.to_oracle()
    try:
        with open(spec) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read objective {spec!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed objective JSON: {exc}") from exc
    if "branches" not in doc:
        raise InputError("objective JSON must contain a 'branches' list")
    branches = doc["branches"]
    try:
        coeffs = [float(b[0]) for b in branches]
        linears = [list(map(float, np.atleast_1d(b[1]))) for b in branches]
        consts = [float(b[2]) for b in branches]
    except (TypeError, ValueError, IndexError) as exc:
        raise InputError(f"each branch must be [coeff, linear, const]: {exc}") from exc
    obj = PiecewiseQuadratic(coeffs=coeffs, linears=linears, consts=consts)
    mu = float(doc["mu"]) if "mu" in doc else None
    domain = None
    if "domain" in doc:
        domain = Box(lower=np.array(doc["domain"]["lower"], dtype=float),
                     upper=np.array(doc["domain"]["upper"], dtype=float))
    return obj.to_oracle(mu=mu, domain=domain)


def cmd_qcsc(args, argv) -> int:
    oracle = _load_objective(args.objective)
    x0 = _parse_vector(args.x0)
    algorithm = ALGORITHMS[args.alg]
    run_trace = algorithm(oracle, x0, eps=args.eps, max_iter=args.max_iter)

    doc = {
        "provenance": _provenance(argv),
        "algorithm": run_trace.algorithm,
        "eps": run_trace.eps,
        "status": run_trace.status,
        "iterations": run_trace.n_iterations,
        "final_value": run_trace.final_value,
        "final_x": run_trace.final_x.tolist(),
        "final_gap": run_trace.final_gap,
        "gaps": list(run_trace.gaps),
        "incumbent_values": list(run_trace.incumbent_values),
        "iterates": [x.tolist() for x in run_trace.iterates],
    }
    dump_json(doc, args.out)
    if args.csv:
        header = ["iter", "gap", "incumbent", "model_size"] + \
            [f"x_{i + 1}" for i in range(oracle.dim)]
        rows = [[k + 1, run_trace.gaps[k], run_trace.incumbent_values[k],
                 run_trace.model_sizes[k], *run_trace.iterates[k + 1].tolist()]
                for k in range(run_trace.n_iterations)]
        write_csv(args.csv, header, rows)
    if not args.no_figure:
        from . import plots
        plots.qcsc_figure(run_trace, os.path.splitext(args.out)[0] + ".png")
    print(f"{run_trace.algorithm}: {run_trace.status} after {run_trace.n_iterations} "
          f"iterations, value {run_trace.final_value:.10g}, gap {run_trace.final_gap:.3e}")
    return EXIT_OK if run_trace.status == "gap_met" else EXIT_CAP


def cmd_solve(args, argv) -> int:
    instance = load_instance(args.instance)
    config = SolverConfig(eps=args.eps, ub_window=args.ub_window,
                          max_iter=args.max_iter, seed=args.seed,
                          cut_mode=args.cut_mode, floor=args.floor,
                          qp_tol=args.qp_tol, ub_z=args.ub_z)
    report = run(instance, config)
    out_dir = ensure_dir(args.out_dir)
    doc = {
        "provenance": _provenance(argv),
        "status": report.status,
        "iterations": report.iterations,
        "lb": report.final_lb,
        "ub": report.final_ub,
        "config": {k: getattr(config, k) for k in SolverConfig.__dataclass_fields__},
        "records": [{"iter": r.k, "lb": r.lb, "ub": r.ub, "fwd_cost": r.fwd_cost,
                     "cuts_total": r.cuts_total, "wall_ms": r.wall_ms}
                    for r in report.records],
        "models": {
            str(t): [{"theta": c.theta, "beta": c.beta.tolist(),
                      "center": c.center.tolist(), "alpha": c.alpha}
                     for c in report.models[t].cuts]
            for t in range(2, instance.T + 1)
        },
    }
    dump_json(doc, os.path.join(out_dir, "report.json"))
    write_csv(os.path.join(out_dir, "iterations.csv"), RUN_CSV_HEADER,
              report.csv_rows())
    if not args.no_figure:
        from . import plots
        plots.convergence_figure(report, os.path.join(out_dir, "convergence.png"),
                                 title=f"{config.cut_mode} cuts")
    ub_text = f"{report.final_ub:.10g}" if report.final_ub is not None else "n/a"
    print(f"solve: {report.status} after {report.iterations} iterations, "
          f"LB {report.final_lb:.10g}, UB {ub_text}")
    return EXIT_OK if report.status == "gap_met" else EXIT_CAP


def cmd_oracle(args, argv) -> int:
    instance = load_instance(args.instance)
    if args.mode == "extensive":
        value, root_decision = extensive_form_value(instance, node_budget=args.max_nodes)
        doc = {"provenance": _provenance(argv), "value": value,
               "root_decision": root_decision.tolist()}
    else:
        if args.t is None:
            raise InputError("subtree mode requires --t")
        x = _parse_vector(args.x) if args.x else instance.x0
        value = subtree_value(instance, args.t, x, node_budget=args.max_nodes)
        doc = {"provenance": _provenance(argv), "value": value,
               "t": args.t, "x": np.asarray(x).tolist()}
    if args.out:
        dump_json(doc, args.out)
    print(f"value {value:.17g}")
    return EXIT_OK


def cmd_bench(args, argv) -> int:
    try:
        with open(args.grid) as fh:
            grid_doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read grid {args.grid!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed grid JSON: {exc}") from exc
    if not isinstance(grid_doc, list):
        raise InputError("grid JSON must be a list of parameter objects")
    grid = []
    for i, entry in enumerate(grid_doc):
        try:
            grid.append(BenchmarkParams(
                T=int(entry["T"]), n=int(entry["n"]), M=int(entry["M"]),
                lambda0=float(entry["lambda0"]), seed=int(entry.get("seed", 0)),
                config_overrides=dict(entry.get("config_overrides", {}))))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"grid[{i}]: {exc}") from exc
    out_dir = args.out_dir
    if os.path.exists(out_dir) and not os.access(out_dir, os.W_OK):
        raise InputError(f"output directory {out_dir!r} is not writable")
    try:
        ensure_dir(out_dir)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out_dir!r}: {exc}") from exc
    rows, _, errors = run_comparison(
        grid, with_oracle=args.with_oracle, jobs=args.jobs, out_dir=out_dir)
    dump_json({"provenance": _provenance(argv), "rows": rows,
               "errors": {f"{k[0]}:{k[1]}": v for k, v in errors.items()}},
              os.path.join(out_dir, "summary.json"))
    for row in rows:
        print(f"{row['method']:>9}  T={row['T']} n={row['n']} M={row['M']} "
              f"lambda0={row['lambda0']:g}  status={row['status']}  "
              f"iters={row['iters']}  lb={row['lb']}  ub={row['ub']}")
    if errors:
        for key, msg in errors.items():
            print(f"row {key} failed: {msg}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqdp",
        description="Cutting-plane solvers for strongly convex multistage "
                    "stochastic programs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("qcsc", help="run a single-stage cutting-plane method")
    p.add_argument("--objective", required=True,
                   help="built-in name (paper-1d) or piecewise-quadratic JSON path")
    p.add_argument("--x0", required=True, help="starting point, comma separated")
    p.add_argument("--eps", type=float, default=1e-3, help="target optimality gap")
    p.add_argument("--alg", choices=sorted(ALGORITHMS), default="qcsc")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--out", default="qcsc_run.json", help="run JSON path")
    p.add_argument("--csv", default=None, help="optional iterate CSV path")
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("solve", help="solve an instance with the multistage engine")
    p.add_argument("instance", help="instance JSON path")
    p.add_argument("--cut-mode", choices=("quadratic", "affine"), default="quadratic")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--ub-window", type=int, default=200)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--qp-tol", type=float, default=1e-8)
    p.add_argument("--floor", type=float, default=0.0)
    p.add_argument("--ub-z", type=float, default=0.0)
    p.add_argument("--out-dir", default="solve_out")
    p.add_argument("--no-figure", action="store_true")

    p = sub.add_parser("oracle", help="brute-force extensive-form cross checks")
    p.add_argument("instance", help="instance JSON path")
    p.add_argument("--mode", choices=("extensive", "subtree"), default="extensive")
    p.add_argument("--t", type=int, default=None, help="stage for subtree mode")
    p.add_argument("--x", default=None, help="incoming state, comma separated")
    p.add_argument("--max-nodes", type=int, default=50_000)
    p.add_argument("--out", default=None, help="optional JSON output path")

    p = sub.add_parser("bench", help="run a benchmark comparison grid")
    p.add_argument("grid", help="JSON list of benchmark parameter objects")
    p.add_argument("--out-dir", default="bench_out")
    p.add_argument("--with-oracle", action="store_true",
                   help="append the extensive-form optimum per row")
    p.add_argument("--jobs", type=int, default=1)
    return parser


_COMMANDS = {"qcsc": cmd_qcsc, "solve": cmd_solve, "oracle": cmd_oracle,
             "bench": cmd_bench}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return _COMMANDS[args.command](args, argv)
    except (NodeBudgetExceededError, IterationCapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (QpInfeasibleError, QpNonconvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InputError, SqdpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
