"""Benchmark family generation and method comparison runs.

Instances follow the rank-one-plus-ridge family: each stage cost is
0.5 z'(xi xi' + lambda0 I) z + xi'z on the stacked pair with xi drawn
uniformly from [0,1]^(2n), decisions live on the unit simplex and stages are
coupled only through the cost. Every cost is lambda0-strongly convex (the
rank-one update leaves the smallest eigenvalue at lambda0) and nonnegative on
the feasible region, so the default zero floor is valid.
"""

from __future__ import annotations

import concurrent.futures
import os
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine import SolverConfig, run
from .errors import InputError
from .model import (
    ConstraintSetS1,
    MspInstance,
    QuadraticStageCost,
    Simplex,
    StageData,
)

CSV_HEADER = ("method", "T", "n", "M", "lambda0", "iters", "wall_ms", "lb", "ub", "ext_opt")


@dataclass(frozen=True)
class BenchmarkParams:
    """One benchmark row: horizon, state size, support size, ridge weight, seed."""

    T: int
    n: int
    M: int
    lambda0: float
    seed: int = 0
    config_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.T < 1 or self.n < 1 or self.M < 1:
            raise InputError("T, n and M must be at least 1")
        if self.lambda0 <= 0.0:
            raise InputError("lambda0 must be positive")


def generate_instance(params: BenchmarkParams) -> MspInstance:
    """Materialize one benchmark instance; identical params yield identical bytes.

    Draw order: the deterministic stage-1 vector first, then M vectors for
    each stage t = 2..T in stage order. The initial state is the simplex
    barycenter.
    """
    rng = np.random.default_rng(params.seed)
    n, two_n = params.n, 2 * params.n
    simplex_cons = ConstraintSetS1(A=np.zeros((0, n)), B=np.zeros((0, n)),
                                   b=np.zeros(0), base_set=Simplex())

    def stage_from(xis: np.ndarray) -> StageData:
        m = xis.shape[0]
        costs = tuple(
            QuadraticStageCost(n=n, H=np.outer(xi, xi) + params.lambda0 * np.eye(two_n),
                               c=xi, d=0.0, alpha=params.lambda0)
            for xi in xis)
        return StageData(costs=costs, constraints=simplex_cons, xis=xis,
                         probs=np.full(m, 1.0 / m))

    stages = [stage_from(rng.uniform(0.0, 1.0, size=(1, two_n)))]
    for _ in range(2, params.T + 1):
        stages.append(stage_from(rng.uniform(0.0, 1.0, size=(params.M, two_n))))
    return MspInstance(T=params.T, n=n, x0=np.full(n, 1.0 / n), stages=tuple(stages))


def _solver_config(params: BenchmarkParams, cut_mode: str,
                   base_config: Optional[SolverConfig]) -> SolverConfig:
    base = base_config if base_config is not None else SolverConfig()
    fields = {name: getattr(base, name) for name in SolverConfig.__dataclass_fields__}
    fields.update(params.config_overrides)
    fields["cut_mode"] = cut_mode
    fields.setdefault("seed", params.seed)
    return SolverConfig(**fields)


def run_single(params: BenchmarkParams, cut_mode: str,
               base_config: Optional[SolverConfig] = None,
               with_oracle: bool = False,
               oracle_budget: int = 50_000):
    """Run one method on one benchmark row; returns (row dict, report)."""
    instance = generate_instance(params)
    config = _solver_config(params, cut_mode, base_config)
    t0 = time.perf_counter()
    report = run(instance, config)
    wall_ms = (time.perf_counter() - t0) * 1e3
    ext_opt = None
    if with_oracle:
        from .oracle import extensive_form_value
        ext_opt, _ = extensive_form_value(instance, node_budget=oracle_budget)
    row = {
        "method": cut_mode,
        "T": params.T,
        "n": params.n,
        "M": params.M,
        "lambda0": params.lambda0,
        "iters": report.iterations,
        "wall_ms": wall_ms,
        "lb": report.final_lb,
        "ub": report.final_ub,
        "ext_opt": ext_opt,
        "status": report.status,
    }
    return row, report


def _row_task(args):
    params, cut_mode, base_config, with_oracle, oracle_budget = args
    try:
        row, report = run_single(params, cut_mode, base_config, with_oracle,
                                 oracle_budget)
        return row, report, None
    except Exception as exc:  # per-row failures recorded, run continues
        row = {"method": cut_mode, "T": params.T, "n": params.n, "M": params.M,
               "lambda0": params.lambda0, "iters": None, "wall_ms": None,
               "lb": None, "ub": None, "ext_opt": None, "status": "failed"}
        return row, None, f"{type(exc).__name__}: {exc}"


def run_comparison(param_grid: Sequence[BenchmarkParams],
                   cut_modes: Sequence[str] = ("quadratic", "affine"),
                   base_config: Optional[SolverConfig] = None,
                   with_oracle: bool = False,
                   oracle_budget: int = 50_000,
                   jobs: int = 1,
                   out_dir: Optional[str] = None):
    """Run every (params, method) pair and collect comparison rows.

    Rows keep grid order regardless of the parallelism degree. With an output
    directory the generated instances, the CSV report, per-run iteration CSVs
    and the comparison figure are written there.

    Returns (rows, reports, errors); failed rows carry None fields and their
    error message lands in ``errors`` keyed by (grid index, method).
    """
    indexed = [(i, params, mode) for i, params in enumerate(param_grid)
               for mode in cut_modes]
    tasks = [(params, mode, base_config, with_oracle, oracle_budget)
             for _, params, mode in indexed]
    if jobs > 1 and tasks:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_row_task, tasks))
    else:
        results = [_row_task(task) for task in tasks]

    rows, reports, errors = [], [], {}
    for (i, params, mode), (row, report, err) in zip(indexed, results):
        rows.append(row)
        reports.append(report)
        if err is not None:
            errors[(i, mode)] = err

    if out_dir is not None:
        from . import plots
        from .serialize import ensure_dir, save_instance, write_csv
        ensure_dir(out_dir)
        for i, params in enumerate(param_grid):
            save_instance(generate_instance(params),
                          os.path.join(out_dir, f"instance_{i:03d}.json"))
        write_csv(os.path.join(out_dir, "comparison.csv"), CSV_HEADER,
                  [[row[k] for k in CSV_HEADER] for row in rows])
        from .engine import CSV_HEADER as RUN_HEADER
        for (i, params, mode), report in zip(indexed, reports):
            if report is None:
                continue
            write_csv(os.path.join(out_dir, f"run_{i:03d}_{mode}.csv"), RUN_HEADER,
                      report.csv_rows())
        plots.bench_figure(rows, os.path.join(out_dir, "comparison.png"))
        paired = [(indexed[i][1], indexed[i][2], reports[i])
                  for i in range(len(indexed)) if reports[i] is not None]
        if paired:
            plots.bench_convergence_figure(paired, os.path.join(out_dir, "convergence.png"))
    return rows, reports, errors
