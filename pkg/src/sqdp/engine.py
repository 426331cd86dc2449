"""Multistage engine: forward/backward passes, bounds, stopping test, simulation.

One iteration samples a scenario, runs the forward pass to collect trial
states, then sweeps backward from the last stage adding one cut per stage
(quadratic cuts exploit the strong convexity of the cost-to-go functions;
affine mode recovers the classical method). The lower bound is the value of
the approximate first-stage problem; the upper bound is the statistical
estimate over the trailing window of forward-pass costs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, UnsupportedConfigurationError
from .model import (
    ConstraintSetS2,
    CutModel,
    MspInstance,
    NoiseModel,
    QuadraticCut,
    add_cut,
    eval_stage_cost,
    grad_stage_cost,
    inequality_grad_prev,
    model_eval,
)
from .qp import build_stage_subproblem, solve_qp

CUT_MODES = ("quadratic", "affine")


@dataclass(frozen=True)
class SolverConfig:
    """Engine settings; defaults follow the benchmark protocol."""

    eps: float = 0.1
    ub_window: int = 200
    forward_scenarios_per_iter: int = 1
    max_iter: int = 2000
    seed: int = 0
    cut_mode: str = "quadratic"
    floor: float = 0.0
    qp_tol: float = 1e-8
    ub_z: float = 0.0

    def __post_init__(self):
        if self.eps <= 0.0:
            raise InputError("eps must be positive")
        if self.ub_window < 1:
            raise InputError("ub_window must be at least 1")
        if self.cut_mode not in CUT_MODES:
            raise InputError(f"cut_mode must be one of {CUT_MODES}")
        if self.forward_scenarios_per_iter < 1:
            raise InputError("forward_scenarios_per_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One forward pass: realization indices, visited states, immediate costs."""

    scenario: tuple          # j_t for t = 2..T
    states: tuple            # x_1 .. x_T
    stage_costs: tuple       # immediate f_t along the path
    total_cost: float


@dataclass(frozen=True)
class IterationRecord:
    k: int
    lb: float
    ub: Optional[float]
    fwd_cost: float
    cuts_total: int
    wall_ms: float


@dataclass(eq=False)
class RunReport:
    """Per-iteration bounds and costs plus the final models."""

    records: list = field(default_factory=list)
    status: str = "running"
    models: dict = field(default_factory=dict)
    config: Optional[SolverConfig] = None

    @property
    def final_lb(self) -> float:
        return self.records[-1].lb if self.records else -math.inf

    @property
    def final_ub(self) -> Optional[float]:
        for rec in reversed(self.records):
            if rec.ub is not None:
                return rec.ub
        return None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def csv_rows(self):
        for rec in self.records:
            yield (rec.k, rec.lb, rec.ub, rec.fwd_cost, rec.cuts_total, rec.wall_ms)


CSV_HEADER = ("iter", "lb", "ub", "fwd_cost", "cuts_total", "wall_ms")


def initial_models(instance: MspInstance, floor: float = 0.0) -> dict:
    """Empty cost-to-go models for stages 2..T plus the zero stage-(T+1) model."""
    models = {t: CutModel(dimension=instance.n, cuts=(), floor=floor)
              for t in range(2, instance.T + 1)}
    # the terminal cost-to-go is identically zero
    models[instance.T + 1] = CutModel(dimension=instance.n, cuts=(), floor=0.0)
    return models


def sample_scenario(noise: NoiseModel, rng: np.random.Generator) -> tuple:
    """Draw one realization index per random stage, independently."""
    draws = []
    for xis, probs in zip(noise.realizations, noise.probabilities):
        draws.append(int(rng.choice(xis.shape[0], p=probs)))
    return tuple(draws)


def forward_pass(instance: MspInstance, models: dict, scenario: Sequence[int],
                 qp_tol: float = 1e-8) -> Trajectory:
    """Compute trial states along one scenario using the current models."""
    scenario = tuple(int(j) for j in scenario)
    if len(scenario) != instance.T - 1:
        raise InputError(f"scenario has {len(scenario)} indices, expected {instance.T - 1}")
    states = []
    stage_costs = []
    x_prev = instance.x0
    for t in range(1, instance.T + 1):
        stage = instance.stage(t)
        j = 0 if t == 1 else scenario[t - 2]
        if not 0 <= j < stage.n_realizations:
            raise InputError(f"stage {t}: realization index {j} out of range")
        cost = stage.costs[j]
        sub = build_stage_subproblem(cost, stage.constraints, x_prev, models[t + 1])
        sol = solve_qp(sub.qp, tol=qp_tol)
        x_t = sol.x_star[:instance.n].copy()
        states.append(x_t)
        stage_costs.append(eval_stage_cost(cost, x_prev, x_t))
        x_prev = x_t
    return Trajectory(scenario=scenario, states=tuple(states),
                      stage_costs=tuple(stage_costs),
                      total_cost=float(sum(stage_costs)))


@dataclass(frozen=True, eq=False)
class S2Solution:
    """Externally computed subproblem solution for one S2 realization."""

    x_opt: np.ndarray
    value: float
    lambda_coupling: np.ndarray
    mu: np.ndarray


def compute_stage_cut(instance: MspInstance, models: dict, t: int,
                      x_trial: np.ndarray, cut_mode: str = "quadratic",
                      qp_tol: float = 1e-8,
                      s2_solutions: Optional[Sequence[S2Solution]] = None) -> QuadraticCut:
    """Aggregate one cut for the stage-t cost-to-go at the trial state.

    Per realization the subproblem value gives the intercept and the previous-
    state gradient block plus B'lambda the slope; realizations are aggregated
    with their probabilities in ascending order. Quadratic mode stores the
    probability-weighted strong-convexity constant as the cut curvature.

    S2 stages cannot be solved by the embedded solver; for them the caller
    must supply per-realization solutions and inequality multipliers, which
    contribute mu_i * grad_prev(g_i) to the slope.
    """
    if not 2 <= t <= instance.T:
        raise InputError(f"cuts exist for stages 2..{instance.T}, got {t}")
    if cut_mode not in CUT_MODES:
        raise InputError(f"cut_mode must be one of {CUT_MODES}")
    x_trial = np.asarray(x_trial, dtype=float)
    stage = instance.stage(t)
    is_s2 = isinstance(stage.constraints, ConstraintSetS2)
    if is_s2 and s2_solutions is None:
        raise UnsupportedConfigurationError(
            f"stage {t} has quadratic inequality constraints; supply externally "
            "computed solutions and multipliers")
    if s2_solutions is not None and len(s2_solutions) != stage.n_realizations:
        raise InputError("one external solution per realization is required")

    theta = 0.0
    beta = np.zeros(instance.n)
    alpha = 0.0
    B = stage.constraints.B
    for j in range(stage.n_realizations):
        p = float(stage.probs[j])
        cost = stage.costs[j]
        if s2_solutions is None:
            sub = build_stage_subproblem(cost, stage.constraints, x_trial, models[t + 1])
            sol = solve_qp(sub.qp, tol=qp_tol)
            x_j = sol.x_star[:instance.n]
            theta_j = sol.value
            lam = sol.lambda_eq[sub.coupling_rows]
            g_prev, _ = grad_stage_cost(cost, x_trial, x_j)
            beta_j = g_prev + B.T @ lam
        else:
            ext = s2_solutions[j]
            x_j = np.asarray(ext.x_opt, dtype=float)
            theta_j = float(ext.value)
            g_prev, _ = grad_stage_cost(cost, x_trial, x_j)
            beta_j = g_prev + B.T @ np.asarray(ext.lambda_coupling, dtype=float)
            if is_s2:
                mu = np.asarray(ext.mu, dtype=float)
                comps = stage.constraints.g
                if mu.shape[0] != len(comps):
                    raise InputError(f"stage {t} realization {j}: expected "
                                     f"{len(comps)} multipliers, got {mu.shape[0]}")
                if np.any(mu < 0.0):
                    raise InputError("inequality multipliers must be nonnegative")
                for mu_i, comp in zip(mu, comps):
                    beta_j = beta_j + mu_i * inequality_grad_prev(comp, x_trial, x_j)
        theta += p * theta_j
        beta += p * beta_j
        alpha += p * cost.alpha
    if cut_mode == "affine":
        alpha = 0.0
    return QuadraticCut(theta=theta, beta=beta, center=x_trial, alpha=alpha)


def backward_pass(instance: MspInstance, models: dict, trajectory: Trajectory,
                  cut_mode: str = "quadratic", qp_tol: float = 1e-8) -> dict:
    """Add one cut per stage t = T..2 at the forward trial states.

    Stage t uses the stage-(t+1) model already updated within this pass.
    Returns a new model dict; the input is not mutated.
    """
    models = dict(models)
    for t in range(instance.T, 1, -1):
        x_trial = trajectory.states[t - 2]
        cut = compute_stage_cut(instance, models, t, x_trial,
                                cut_mode=cut_mode, qp_tol=qp_tol)
        models[t] = add_cut(models[t], cut)
    return models


def lower_bound(instance: MspInstance, models: dict, qp_tol: float = 1e-8) -> float:
    """Optimal value of the approximate first-stage problem.

    Solved tighter than the pass subproblems: the recorded bound sequence is
    exactly nondecreasing in theory (models only grow), so its jitter must
    stay below the monotonicity slack.
    """
    stage = instance.stage(1)
    sub = build_stage_subproblem(stage.costs[0], stage.constraints,
                                 instance.x0, models[2])
    return solve_qp(sub.qp, tol=min(qp_tol, 1e-10)).value


def statistical_upper_bound(recent_costs: Sequence[float], z: float = 0.0) -> float:
    """Sample mean of the supplied costs, optionally plus z * stderr."""
    costs = np.asarray(recent_costs, dtype=float)
    if costs.size == 0:
        raise InputError("at least one cost is required")
    ub = float(costs.mean())
    if z != 0.0 and costs.size > 1:
        ub += z * float(costs.std(ddof=1)) / math.sqrt(costs.size)
    return ub


def _gap_met(lb: float, ub: float, eps: float) -> bool:
    if ub > 0.0:
        return (ub - lb) / ub <= eps
    # relative test undefined for nonpositive UB: absolute fallback
    return ub - lb <= eps * max(1.0, abs(lb))


def run(instance: MspInstance, config: SolverConfig) -> RunReport:
    """Iterate forward/backward passes until the relative gap test or the cap.

    Parameters
    ----------
    instance : MspInstance
        Problem data; every stage must be of the linearly constrained kind.
    config : SolverConfig
        Tolerances, window length, cut mode, seed and floor.

    The report carries per-iteration records (lower bound after the backward
    pass, trailing-window upper bound once available, forward cost, cut count,
    wall time) and the final cut models.
    """
    rng = np.random.default_rng(config.seed)
    noise = instance.noise_model()
    models = initial_models(instance, floor=config.floor)
    report = RunReport(config=config)
    costs: list = []

    for k in range(1, config.max_iter + 1):
        t0 = time.perf_counter()
        iter_costs = []
        for _ in range(config.forward_scenarios_per_iter):
            scenario = sample_scenario(noise, rng)
            trajectory = forward_pass(instance, models, scenario, qp_tol=config.qp_tol)
            iter_costs.append(trajectory.total_cost)
            costs.append(trajectory.total_cost)
            models = backward_pass(instance, models, trajectory,
                                   cut_mode=config.cut_mode, qp_tol=config.qp_tol)
        lb = lower_bound(instance, models, qp_tol=config.qp_tol)
        ub = None
        if len(costs) >= config.ub_window:
            ub = statistical_upper_bound(costs[-config.ub_window:], z=config.ub_z)
        cuts_total = sum(len(models[t]) for t in range(2, instance.T + 1))
        wall_ms = (time.perf_counter() - t0) * 1e3
        report.records.append(IterationRecord(
            k=k, lb=lb, ub=ub, fwd_cost=float(np.mean(iter_costs)),
            cuts_total=cuts_total, wall_ms=wall_ms))
        if ub is not None and _gap_met(lb, ub, config.eps):
            report.status = "gap_met"
            break
    else:
        report.status = "iteration_cap"

    report.models = models
    return report


@dataclass(eq=False)
class PolicySimulation:
    """Decisions for every scenario-tree node, optionally with model gaps."""

    tree: object
    decisions: dict            # node index -> state
    gaps: Optional[dict]       # node index -> Q_{t+1}(x) - model_{t+1}(x)


def simulate_policy_full_tree(instance: MspInstance, models: dict,
                              node_budget: int = 50_000,
                              qp_tol: float = 1e-8,
                              with_gaps: bool = False,
                              oracle_budget: Optional[int] = None) -> PolicySimulation:
    """Roll the current policy over the whole scenario tree, stage by stage.

    With ``with_gaps`` the exact cost-to-go of every visited state is evaluated
    through the brute-force oracle and compared against the cut model,
    yielding the per-node approximation gap used as a convergence diagnostic.
    """
    from .oracle import ScenarioTree, subtree_value

    tree = ScenarioTree.from_instance(instance, root_stage=1, node_budget=node_budget)
    decisions = {0: instance.x0.copy()}
    for node in tree.nodes:
        if node.parent is None:
            continue
        stage = instance.stage(node.stage)
        x_prev = decisions[node.parent]
        sub = build_stage_subproblem(stage.costs[node.realization], stage.constraints,
                                     x_prev, models[node.stage + 1])
        sol = solve_qp(sub.qp, tol=qp_tol)
        decisions[node.index] = sol.x_star[:instance.n].copy()

    gaps = None
    if with_gaps:
        gaps = {}
        for node in tree.nodes:
            if node.parent is None or node.stage >= instance.T:
                continue
            x = decisions[node.index]
            exact = subtree_value(instance, node.stage + 1, x,
                                  node_budget=oracle_budget or node_budget,
                                  qp_tol=qp_tol)
            gaps[node.index] = exact - model_eval(models[node.stage + 1], x)
    return PolicySimulation(tree=tree, decisions=decisions, gaps=gaps)
