"""QP subsolver: KKT certification, duals, epigraph assembly, determinism."""

import os

import numpy as np
import pytest

from sqdp.errors import (
    ContractViolationError,
    QpInfeasibleError,
    UnsupportedConfigurationError,
)
from sqdp.model import (
    Box,
    ConstraintSetS1,
    ConstraintSetS2,
    CutModel,
    QuadraticCut,
    QuadraticInequality,
    QuadraticStageCost,
    Simplex,
    add_cut,
    cut_eval,
    eval_stage_cost,
    model_eval,
)
from sqdp.qp import (
    QpProblem,
    build_model_min_subproblem,
    build_stage_subproblem,
    check_kkt,
    solve_qp,
)

from helpers import projected_gradient_simplex

# frozen reference: projected gradient with 1e6 iterations on the seed-7
# simplex QP below (regenerate with helpers.projected_gradient_simplex)
PG_SIMPLEX_VALUE = -0.756607400743216


def random_qp(rng):
    d = int(rng.integers(2, 9))
    m = int(rng.integers(0, d))
    F = rng.normal(size=(d, d))
    P = F @ F.T + 0.5 * np.eye(d)
    q = rng.normal(size=d)
    lb = np.where(rng.random(d) < 0.7, rng.uniform(-2, 0, d), -np.inf)
    ub = np.where(rng.random(d) < 0.7, rng.uniform(0.5, 3, d), np.inf)
    A = rng.normal(size=(m, d))
    x_feas = np.where(np.isfinite(lb), np.maximum(lb + 0.1, 0.0), 0.0)
    x_feas = np.where(np.isfinite(ub), np.minimum(x_feas, ub - 0.1), x_feas)
    return QpProblem(P=P, q=q, r=0.0, Aeq=A, beq=A @ x_feas, lb=lb, ub=ub)


class TestSolve:
    def test_interior_minimum(self):
        p = QpProblem(P=np.eye(1), q=np.zeros(1), r=0.0, Aeq=np.zeros((0, 1)),
                      beq=np.zeros(0), lb=np.array([-1.0]), ub=np.array([1.0]))
        s = solve_qp(p)
        assert s.x_star == pytest.approx([0.0], abs=1e-7)
        assert s.value == pytest.approx(0.0, abs=1e-7)
        assert s.lambda_eq.shape == (0,)

    def test_symmetric_simplex_with_dual(self):
        # min 0.5||x||^2 on x1 + x2 = 1, x >= 0: x* = (.5, .5), lambda = -0.5
        p = QpProblem(P=np.eye(2), q=np.zeros(2), r=0.0,
                      Aeq=np.ones((1, 2)), beq=np.array([1.0]),
                      lb=np.zeros(2), ub=np.full(2, np.inf))
        s = solve_qp(p, tol=1e-10)
        assert s.x_star == pytest.approx([0.5, 0.5], abs=1e-8)
        assert s.value == pytest.approx(0.25, abs=1e-9)
        assert s.lambda_eq == pytest.approx([-0.5], abs=1e-8)
        # stationarity with the returned dual: x* + lambda * (1, 1) = 0
        assert np.abs(s.x_star + s.lambda_eq[0]).max() < 1e-8

    def test_matches_projected_gradient_oracle(self):
        rng = np.random.default_rng(7)
        F = rng.normal(size=(5, 5))
        P = F @ F.T + np.eye(5)
        q = rng.normal(size=5)
        p = QpProblem(P=P, q=q, r=0.0, Aeq=np.ones((1, 5)), beq=np.array([1.0]),
                      lb=np.zeros(5), ub=np.full(5, np.inf))
        s = solve_qp(p, tol=1e-10)
        assert s.value == pytest.approx(PG_SIMPLEX_VALUE, abs=1e-6)
        # shorter live run of the same oracle stays consistent with the freeze
        _, live = projected_gradient_simplex(P, q, iterations=200_000)
        assert live == pytest.approx(PG_SIMPLEX_VALUE, abs=1e-6)

    def test_random_qps_certified(self):
        rng = np.random.default_rng(42)
        for _ in range(40):
            p = random_qp(rng)
            s = solve_qp(p, tol=1e-9)
            assert s.kkt_residual <= 1e-9
            assert check_kkt(p, s).max_violation <= 1e-8

    def test_dual_sensitivity(self):
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 15:
            p = random_qp(rng)
            if p.n_eq == 0:
                continue
            s = solve_qp(p, tol=1e-10)
            delta = rng.normal(size=p.n_eq)
            delta *= 1e-5 / np.linalg.norm(delta)
            plus = solve_qp(QpProblem(P=p.P, q=p.q, r=0.0, Aeq=p.Aeq,
                                      beq=p.beq + delta, lb=p.lb, ub=p.ub), tol=1e-11)
            minus = solve_qp(QpProblem(P=p.P, q=p.q, r=0.0, Aeq=p.Aeq,
                                       beq=p.beq - delta, lb=p.lb, ub=p.ub), tol=1e-11)
            predicted = -float(s.lambda_eq @ delta)
            actual = 0.5 * (plus.value - minus.value)
            if abs(predicted) > 1e-9:
                assert abs(actual - predicted) / abs(predicted) <= 1e-4
                checked += 1

    def test_lp_case(self):
        p = QpProblem(P=np.zeros((2, 2)), q=np.array([1.0, 2.0]), r=0.0,
                      Aeq=np.ones((1, 2)), beq=np.array([1.0]),
                      lb=np.zeros(2), ub=np.full(2, np.inf))
        s = solve_qp(p)
        assert s.value == pytest.approx(1.0, abs=1e-7)
        assert s.x_star == pytest.approx([1.0, 0.0], abs=1e-6)

    def test_fixed_variables_eliminated(self):
        lb = np.array([0.5, -1.0])
        ub = np.array([0.5, 1.0])
        p = QpProblem(P=np.eye(2), q=np.array([0.0, -2.0]), r=1.0,
                      Aeq=np.zeros((0, 2)), beq=np.zeros(0), lb=lb, ub=ub)
        s = solve_qp(p, tol=1e-10)
        assert s.x_star == pytest.approx([0.5, 1.0], abs=1e-7)
        assert s.value == pytest.approx(1.0 + 0.125 + 0.5 - 2.0, abs=1e-8)

    def test_infeasible_classified(self):
        p = QpProblem(P=np.eye(1), q=np.zeros(1), r=0.0, Aeq=np.ones((1, 1)),
                      beq=np.array([5.0]), lb=np.array([0.0]), ub=np.array([1.0]))
        with pytest.raises(QpInfeasibleError) as err:
            solve_qp(p)
        assert err.value.residual == pytest.approx(4.0, abs=1e-4)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        p = random_qp(rng)
        a = solve_qp(p, tol=1e-9)
        b = solve_qp(p, tol=1e-9)
        assert np.array_equal(a.x_star, b.x_star)
        assert np.array_equal(a.lambda_eq, b.lambda_eq)
        assert a.value == b.value

    def test_debug_dump(self, tmp_path):
        p = QpProblem(P=np.eye(1), q=np.zeros(1), r=0.0, Aeq=np.zeros((0, 1)),
                      beq=np.zeros(0), lb=np.array([-1.0]), ub=np.array([1.0]))
        path = os.path.join(tmp_path, "qp.json")
        solve_qp(p, debug_dump=path)
        assert os.path.exists(path)


def simple_cost(n=1, ridge=1.0):
    return QuadraticStageCost(n=n, H=ridge * np.eye(2 * n), c=np.zeros(2 * n),
                              d=0.0, alpha=ridge)


class TestStageSubproblem:
    def test_empty_future_uses_floor(self):
        cost = simple_cost()
        cons = ConstraintSetS1(A=np.zeros((0, 1)), B=np.zeros((0, 1)), b=np.zeros(0),
                               base_set=Box(lower=[-1.0], upper=[1.0]))
        future = CutModel(dimension=1, cuts=(), floor=2.5)
        sub = build_stage_subproblem(cost, cons, np.array([0.4]), future)
        s = solve_qp(sub.qp, tol=1e-10)
        # objective = 0.5 x_prev^2 + min 0.5 x^2 + floor
        assert s.value == pytest.approx(0.5 * 0.16 + 0.0 + 2.5, abs=1e-8)
        assert s.x_star[sub.epigraph_index] == pytest.approx(2.5)

    def test_single_affine_cut_active(self):
        cost = simple_cost()
        cons = ConstraintSetS1(A=np.zeros((0, 1)), B=np.zeros((0, 1)), b=np.zeros(0),
                               base_set=Box(lower=[-1.0], upper=[1.0]))
        cut = QuadraticCut(theta=1.0, beta=[0.5], center=[0.0], alpha=0.0)
        future = CutModel(dimension=1, cuts=(cut,), floor=0.0)
        sub = build_stage_subproblem(cost, cons, np.array([0.0]), future)
        s = solve_qp(sub.qp, tol=1e-10)
        x_t = s.x_star[:1]
        r = s.x_star[sub.epigraph_index]
        assert r == pytest.approx(cut_eval(cut, x_t), abs=1e-8)

    def test_epigraph_tightness_quadratic(self):
        # r plus the shared quadratic term reproduces the model value
        rng = np.random.default_rng(9)
        cost = simple_cost(n=2)
        cons = ConstraintSetS1(A=np.zeros((0, 2)), B=np.zeros((0, 2)), b=np.zeros(0),
                               base_set=Simplex())
        future = CutModel(dimension=2, cuts=(), floor=0.0)
        for k in range(3):
            future = add_cut(future, QuadraticCut(
                theta=float(rng.normal()), beta=rng.normal(size=2),
                center=rng.dirichlet(np.ones(2)), alpha=1.5))
        sub = build_stage_subproblem(cost, cons, np.array([0.3, 0.7]), future)
        s = solve_qp(sub.qp, tol=1e-10)
        x_t = s.x_star[:2]
        r = s.x_star[sub.epigraph_index]
        model_term = r + 0.5 * 1.5 * float(x_t @ x_t)
        assert model_term == pytest.approx(model_eval(future, x_t), abs=1e-7)

    def test_value_matches_grid_enumeration(self):
        # independent oracle: 1e-4 grid over the box for min f + model
        rng = np.random.default_rng(10)
        cost = QuadraticStageCost(n=1, H=np.array([[1.2, 0.3], [0.3, 2.0]]),
                                  c=np.array([0.1, -0.5]), d=0.2, alpha=1.0)
        cons = ConstraintSetS1(A=np.zeros((0, 1)), B=np.zeros((0, 1)), b=np.zeros(0),
                               base_set=Box(lower=[-1.0], upper=[1.0]))
        future = CutModel(dimension=1, cuts=(
            QuadraticCut(theta=0.3, beta=[-0.6], center=[0.2], alpha=0.7),
            QuadraticCut(theta=0.1, beta=[0.9], center=[-0.4], alpha=0.7)), floor=0.0)
        x_prev = np.array([0.25])
        sub = build_stage_subproblem(cost, cons, x_prev, future)
        s = solve_qp(sub.qp, tol=1e-10)
        grid = np.arange(-1.0, 1.0 + 5e-5, 1e-4)
        vals = [eval_stage_cost(cost, x_prev, np.array([g])) +
                model_eval(future, np.array([g])) for g in grid]
        assert s.value == pytest.approx(min(vals), abs=1e-5)

    def test_coupling_rows_take_x_prev(self):
        cost = simple_cost()
        cons = ConstraintSetS1(A=np.array([[1.0]]), B=np.array([[0.5]]),
                               b=np.array([1.0]),
                               base_set=Box(lower=[-5.0], upper=[5.0]))
        future = CutModel(dimension=1, cuts=(), floor=0.0)
        sub = build_stage_subproblem(cost, cons, np.array([0.6]), future)
        s = solve_qp(sub.qp, tol=1e-10)
        # x forced to b - B x_prev = 0.7
        assert s.x_star[0] == pytest.approx(0.7, abs=1e-8)
        assert sub.qp.beq[sub.coupling_rows] == pytest.approx([0.7])

    def test_mixed_alpha_rejected(self):
        cost = simple_cost()
        cons = ConstraintSetS1(A=np.zeros((0, 1)), B=np.zeros((0, 1)), b=np.zeros(0),
                               base_set=Box(lower=[-1.0], upper=[1.0]))
        future = CutModel(dimension=1, cuts=(
            QuadraticCut(theta=0.0, beta=[0.0], center=[0.0], alpha=1.0),
            QuadraticCut(theta=0.0, beta=[0.0], center=[0.0], alpha=2.0)), floor=0.0)
        with pytest.raises(ContractViolationError):
            build_stage_subproblem(cost, cons, np.array([0.0]), future)

    def test_s2_rejected(self):
        cost = simple_cost()
        comp = QuadraticInequality(Q=np.zeros((2, 2)), q=np.array([0.0, 1.0]), r=-1.0)
        cons = ConstraintSetS2(A=np.zeros((0, 1)), B=np.zeros((0, 1)), b=np.zeros(0),
                               base_set=Box(lower=[-1.0], upper=[1.0]), g=(comp,))
        future = CutModel(dimension=1, cuts=(), floor=0.0)
        with pytest.raises(UnsupportedConfigurationError):
            build_stage_subproblem(cost, cons, np.array([0.0]), future)

    def test_model_min_requires_cut(self):
        with pytest.raises(ContractViolationError):
            build_model_min_subproblem(CutModel(dimension=1, cuts=(), floor=0.0),
                                       Box(lower=[-1.0], upper=[1.0]))
