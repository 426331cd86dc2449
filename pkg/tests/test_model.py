"""Core domain types: cost evaluation, cuts, models, penalization, noise."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqdp.errors import ContractViolationError, DimensionMismatchError, InputError
from sqdp.model import (
    Box,
    ConstraintSetS1,
    CutModel,
    MspInstance,
    NoiseModel,
    QuadraticCut,
    QuadraticStageCost,
    Simplex,
    StageData,
    add_cut,
    cut_eval,
    eval_stage_cost,
    grad_stage_cost,
    make_penalized_stage_cost,
    model_eval,
    shifted_affine_eval,
    to_shifted_affine,
)

from helpers import spd_stage_cost


class TestStageCost:
    def test_zero_form(self):
        cost = QuadraticStageCost(n=1, H=np.zeros((2, 2)) + 1e-3 * np.eye(2),
                                  c=np.zeros(2), d=0.0, alpha=1e-3)
        assert eval_stage_cost(cost, [1.0], [2.0]) == pytest.approx(0.5e-3 * 5.0)

    def test_identity_form(self):
        # 0.5 z'z with z = (1, 2) -> 2.5
        cost = QuadraticStageCost(n=1, H=np.eye(2), c=np.zeros(2), d=0.0, alpha=1.0)
        assert eval_stage_cost(cost, [1.0], [2.0]) == pytest.approx(2.5)

    def test_rank_one_plus_identity(self):
        # xi = ones(4), H = xi xi' + I, c = xi, z = (0.5,...): 0.5*(4+1) + 2 = 4.5
        xi = np.ones(4)
        cost = QuadraticStageCost(n=2, H=np.outer(xi, xi) + np.eye(4), c=xi,
                                  d=0.0, alpha=1.0)
        val = eval_stage_cost(cost, [0.5, 0.5], [0.5, 0.5])
        assert val == pytest.approx(4.5)

    def test_gradient_blocks(self):
        cost = QuadraticStageCost(n=1, H=np.eye(2), c=np.ones(2), d=0.0, alpha=1.0)
        g_prev, g_next = grad_stage_cost(cost, [1.0], [2.0])
        assert g_prev == pytest.approx([2.0])
        assert g_next == pytest.approx([3.0])

    def test_gradient_matches_central_differences(self):
        # independent oracle: central finite differences of eval_stage_cost
        rng = np.random.default_rng(1)
        cost = spd_stage_cost(2, rng)
        x_prev = rng.normal(size=2)
        x_next = rng.normal(size=2)
        g_prev, g_next = grad_stage_cost(cost, x_prev, x_next)
        h = 1e-6
        fd = np.zeros(4)
        for i in range(4):
            zp = np.concatenate([x_prev, x_next]).astype(float)
            zm = zp.copy()
            zp[i] += h
            zm[i] -= h
            fd[i] = (eval_stage_cost(cost, zp[:2], zp[2:])
                     - eval_stage_cost(cost, zm[:2], zm[2:])) / (2 * h)
        assert np.allclose(np.concatenate([g_prev, g_next]), fd, atol=1e-6)

    def test_dimension_mismatch(self):
        cost = QuadraticStageCost(n=1, H=np.eye(2), c=np.zeros(2), d=0.0, alpha=1.0)
        with pytest.raises(DimensionMismatchError):
            eval_stage_cost(cost, [1.0, 2.0], [1.0])
        with pytest.raises(DimensionMismatchError):
            grad_stage_cost(cost, [1.0], [1.0, 2.0])

    def test_certificate_verified(self):
        with pytest.raises(InputError):
            QuadraticStageCost(n=1, H=np.eye(2), c=np.zeros(2), d=0.0, alpha=2.0)
        with pytest.raises(InputError):
            QuadraticStageCost(n=1, H=np.eye(2), c=np.zeros(2), d=0.0, alpha=0.0)

    def test_asymmetric_rejected(self):
        H = np.array([[1.0, 0.5], [0.2, 1.0]])
        with pytest.raises(InputError):
            QuadraticStageCost(n=1, H=H, c=np.zeros(2), d=0.0, alpha=0.1)

    def test_subgradient_strong_convexity(self):
        # f(y) >= f(x) + <grad f(x), y - x> + (alpha/2)||y - x||^2, exact for quadratics
        rng = np.random.default_rng(2)
        for _ in range(25):
            cost = spd_stage_cost(2, rng)
            zx = rng.normal(size=4)
            zy = rng.normal(size=4)
            fx = eval_stage_cost(cost, zx[:2], zx[2:])
            fy = eval_stage_cost(cost, zy[:2], zy[2:])
            gp, gn = grad_stage_cost(cost, zx[:2], zx[2:])
            g = np.concatenate([gp, gn])
            lower = fx + g @ (zy - zx) + 0.5 * cost.alpha * np.sum((zy - zx) ** 2)
            assert fy >= lower - 1e-9 * max(1.0, abs(fy))


class TestCuts:
    def test_value_at_center(self):
        cut = QuadraticCut(theta=3.5, beta=[1.0, -2.0], center=[0.5, 0.5], alpha=2.0)
        assert cut_eval(cut, [0.5, 0.5]) == pytest.approx(3.5)

    def test_worked_example(self):
        cut = QuadraticCut(theta=2.0, beta=[1.0, -1.0], center=[0.0, 0.0], alpha=4.0)
        assert cut_eval(cut, [1.0, 1.0]) == pytest.approx(6.0)

    def test_affine_degeneracy(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            beta = rng.normal(size=3)
            center = rng.normal(size=3)
            theta = float(rng.normal())
            cut = QuadraticCut(theta=theta, beta=beta, center=center, alpha=0.0)
            x = rng.normal(size=3)
            assert cut_eval(cut, x) == pytest.approx(theta + beta @ (x - center))

    def test_negative_alpha_rejected(self):
        with pytest.raises(InputError):
            QuadraticCut(theta=0.0, beta=[1.0], center=[0.0], alpha=-1.0)

    def test_shifted_affine_zero_center(self):
        cut = QuadraticCut(theta=1.5, beta=[2.0, 3.0], center=[0.0, 0.0], alpha=1.0)
        form = to_shifted_affine(cut)
        assert form.theta_tilde == pytest.approx(1.5)
        assert form.beta_tilde == pytest.approx([2.0, 3.0])

    def test_shifted_affine_worked_example(self):
        cut = QuadraticCut(theta=2.0, beta=[1.0, -1.0], center=[1.0, 1.0], alpha=2.0)
        form = to_shifted_affine(cut)
        assert form.theta_tilde == pytest.approx(4.0)
        assert form.beta_tilde == pytest.approx([-1.0, -3.0])
        assert shifted_affine_eval(form, np.array([1.0, 1.0])) == pytest.approx(2.0)
        assert cut_eval(cut, [1.0, 1.0]) == pytest.approx(2.0)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10_000))
    def test_shifted_affine_identity(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        cut = QuadraticCut(theta=float(rng.normal()), beta=rng.normal(size=n),
                           center=rng.normal(size=n), alpha=float(rng.uniform(0, 5)))
        form = to_shifted_affine(cut)
        for _ in range(5):
            x = rng.normal(size=n) * 3.0
            assert abs(cut_eval(cut, x) - shifted_affine_eval(form, x)) < 1e-10


class TestCutModel:
    def test_empty_floor(self):
        model = CutModel(dimension=2, cuts=(), floor=0.0)
        assert model_eval(model, [0.3, 0.7]) == 0.0

    def test_max_of_two(self):
        c1 = QuadraticCut(theta=3.0, beta=[0.0], center=[0.0], alpha=0.0)
        c2 = QuadraticCut(theta=5.0, beta=[0.0], center=[0.0], alpha=0.0)
        model = CutModel(dimension=1, cuts=(c1, c2), floor=-1.0)
        assert model_eval(model, [0.2]) == pytest.approx(5.0)

    def test_add_to_empty_equals_cut(self):
        # the floor is no longer active once one cut exists
        rng = np.random.default_rng(4)
        cut = QuadraticCut(theta=-7.0, beta=rng.normal(size=2),
                           center=rng.normal(size=2), alpha=1.0)
        model = add_cut(CutModel(dimension=2, cuts=(), floor=0.0), cut)
        assert len(model) == 1
        for _ in range(10):
            x = rng.normal(size=2)
            assert model_eval(model, x) == pytest.approx(cut_eval(cut, x))

    def test_dominated_cut_no_change(self):
        rng = np.random.default_rng(5)
        base = QuadraticCut(theta=10.0, beta=np.zeros(2), center=np.zeros(2), alpha=1.0)
        dominated = QuadraticCut(theta=-50.0, beta=np.zeros(2), center=np.zeros(2), alpha=1.0)
        model = CutModel(dimension=2, cuts=(base,), floor=0.0)
        bigger = add_cut(model, dominated)
        for _ in range(100):
            x = rng.normal(size=2)
            assert model_eval(bigger, x) == pytest.approx(model_eval(model, x))

    def test_monotone_growth(self):
        rng = np.random.default_rng(6)
        model = CutModel(dimension=2, cuts=(
            QuadraticCut(theta=0.0, beta=rng.normal(size=2),
                         center=rng.normal(size=2), alpha=0.5),), floor=0.0)
        for _ in range(5):
            cut = QuadraticCut(theta=float(rng.normal()), beta=rng.normal(size=2),
                               center=rng.normal(size=2), alpha=0.5)
            grown = add_cut(model, cut)
            for _ in range(100):
                x = rng.normal(size=2) * 2.0
                assert model_eval(grown, x) >= model_eval(model, x) - 1e-12
            model = grown

    def test_order_preserved(self):
        cuts = [QuadraticCut(theta=float(i), beta=[0.0], center=[0.0], alpha=0.0)
                for i in range(4)]
        model = CutModel(dimension=1, cuts=(), floor=0.0)
        for cut in cuts:
            model = add_cut(model, cut)
        assert len(model) == 4
        assert [c.theta for c in model.cuts] == [0.0, 1.0, 2.0, 3.0]

    def test_mixed_alpha_detected(self):
        c1 = QuadraticCut(theta=0.0, beta=[0.0], center=[0.0], alpha=1.0)
        c2 = QuadraticCut(theta=0.0, beta=[0.0], center=[0.0], alpha=2.0)
        model = CutModel(dimension=1, cuts=(c1, c2), floor=0.0)
        with pytest.raises(ContractViolationError):
            model.uniform_alpha()

    def test_dimension_check(self):
        model = CutModel(dimension=2, cuts=(), floor=0.0)
        with pytest.raises(DimensionMismatchError):
            add_cut(model, QuadraticCut(theta=0.0, beta=[0.0], center=[0.0], alpha=0.0))


class TestPenalizedCost:
    def test_diagonal_gain(self):
        # A = I, B = 0, b = 0 in 1-d is rank deficient in (A B); use B = I instead
        cost = QuadraticStageCost(n=1, H=np.eye(2), c=np.zeros(2), d=0.0, alpha=1.0)
        cons = ConstraintSetS1(A=np.array([[1.0], [0.0]]), B=np.array([[0.0], [1.0]]),
                               b=np.zeros(2),
                               base_set=Box(lower=[-2.0], upper=[2.0]))
        rho = 3.0
        pen = make_penalized_stage_cost(cost, cons, rho)
        # rows x_next = 0 and x_prev = 0 add 2*rho to each diagonal entry
        assert pen.H[1, 1] == pytest.approx(1.0 + 2 * rho)
        assert pen.H[0, 0] == pytest.approx(1.0 + 2 * rho)
        assert pen.alpha == cost.alpha

    def test_evaluation_identity(self):
        rng = np.random.default_rng(7)
        cost = spd_stage_cost(2, rng)
        cons = ConstraintSetS1(A=np.vstack([np.eye(2), np.zeros((2, 2))]),
                               B=np.vstack([np.zeros((2, 2)), np.eye(2)]),
                               b=rng.normal(size=4),
                               base_set=Box(lower=[-3.0, -3.0], upper=[3.0, 3.0]))
        rho = 1.7
        pen = make_penalized_stage_cost(cost, cons, rho)
        for _ in range(100):
            xp = rng.normal(size=2)
            xn = rng.normal(size=2)
            expected = eval_stage_cost(cost, xp, xn) \
                + rho * float(np.sum((cons.A @ xn + cons.B @ xp - cons.b) ** 2))
            assert eval_stage_cost(pen, xp, xn) == pytest.approx(expected, abs=1e-10)

    def test_feasible_minimum_unchanged(self):
        # on the feasible set the penalty vanishes, so both QPs agree
        from sqdp.model import CutModel
        from sqdp.qp import build_stage_subproblem, solve_qp

        cost = QuadraticStageCost(n=1, H=np.array([[1.0, 0.2], [0.2, 1.5]]),
                                  c=np.array([0.3, -0.4]), d=0.1, alpha=0.8)
        cons = ConstraintSetS1(A=np.array([[1.0], [0.0]]), B=np.array([[0.0], [1.0]]),
                               b=np.array([0.7, 0.4]),
                               base_set=Box(lower=[-2.0], upper=[2.0]))
        pen = make_penalized_stage_cost(cost, cons, rho=2.5)
        x_prev = np.array([0.4])  # consistent with the second row
        empty = CutModel(dimension=1, cuts=(), floor=0.0)
        v0 = solve_qp(build_stage_subproblem(cost, cons, x_prev, empty).qp, tol=1e-10).value
        v1 = solve_qp(build_stage_subproblem(pen, cons, x_prev, empty).qp, tol=1e-10).value
        assert v1 == pytest.approx(v0, abs=1e-8)

    def test_rank_deficient_rejected(self):
        cost = QuadraticStageCost(n=1, H=np.eye(2), c=np.zeros(2), d=0.0, alpha=1.0)
        cons = ConstraintSetS1(A=np.array([[1.0]]), B=np.array([[0.0]]),
                               b=np.zeros(1), base_set=Box(lower=[-1.0], upper=[1.0]))
        with pytest.raises(InputError):
            make_penalized_stage_cost(cost, cons, rho=1.0)
        with pytest.raises(InputError):
            make_penalized_stage_cost(cost, cons, rho=-1.0)


class TestNoiseAndInstance:
    def test_probabilities_validated(self):
        with pytest.raises(InputError):
            NoiseModel(realizations=(np.zeros((2, 1)),),
                       probabilities=(np.array([0.6, 0.5]),))
        with pytest.raises(InputError):
            NoiseModel(realizations=(np.zeros((2, 1)),),
                       probabilities=(np.array([1.0, 0.0]),))
        nm = NoiseModel(realizations=(np.zeros((2, 1)),),
                        probabilities=(np.array([0.25, 0.75]),))
        assert nm.stage_probabilities(2) == pytest.approx([0.25, 0.75])

    def test_stage_one_must_be_deterministic(self):
        cost = QuadraticStageCost(n=1, H=np.eye(2), c=np.zeros(2), d=0.0, alpha=1.0)
        cons = ConstraintSetS1(A=np.zeros((0, 1)), B=np.zeros((0, 1)),
                               b=np.zeros(0), base_set=Simplex())
        stage = StageData(costs=(cost, cost), constraints=cons,
                          xis=np.zeros((2, 2)), probs=np.array([0.5, 0.5]))
        with pytest.raises(InputError):
            MspInstance(T=1, n=1, x0=np.array([1.0]), stages=(stage,))

    def test_noise_model_roundtrip(self):
        from sqdp.bench import BenchmarkParams, generate_instance

        inst = generate_instance(BenchmarkParams(T=3, n=2, M=2, lambda0=1.0, seed=0))
        nm = inst.noise_model()
        assert nm.n_stages == 2
        assert nm.stage_realizations(2).shape == (2, 4)
        assert float(np.sum(nm.stage_probabilities(3))) == pytest.approx(1.0)
