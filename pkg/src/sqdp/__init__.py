"""Solvers for multistage stochastic programs with strongly convex stage costs.

The package bundles a multistage engine with quadratic or affine cuts, the
single-stage cutting-plane methods it generalizes, brute-force oracles for
desk-scale verification, a benchmark harness and a CLI.
"""

from .bench import BenchmarkParams, generate_instance, run_comparison
from .engine import (
    PolicySimulation,
    RunReport,
    S2Solution,
    SolverConfig,
    Trajectory,
    backward_pass,
    compute_stage_cut,
    forward_pass,
    lower_bound,
    run,
    sample_scenario,
    simulate_policy_full_tree,
    statistical_upper_bound,
)
from .model import (
    Box,
    ConstraintSetS1,
    ConstraintSetS2,
    CutModel,
    MspInstance,
    NoiseModel,
    QuadraticCut,
    QuadraticInequality,
    QuadraticStageCost,
    ShiftedAffineForm,
    Simplex,
    StageData,
    add_cut,
    cut_eval,
    eval_stage_cost,
    grad_stage_cost,
    make_penalized_stage_cost,
    model_eval,
    to_shifted_affine,
)
from .oracle import ScenarioTree, extensive_form_value, grid_min, subtree_value
from .qcsc import (
    PiecewiseQuadratic,
    QcscRun,
    SubgradientOracle,
    complexity_bound,
    gap_recursion_residuals,
    paper_1d_objective,
    run_kelley,
    run_qcsc,
    run_qcsc_reformulated,
)
from .qp import (
    QpProblem,
    SubproblemSolution,
    build_stage_subproblem,
    check_kkt,
    solve_qp,
)
from .serialize import load_instance, save_instance

__version__ = "0.1.0"
