"""Single-stage cutting-plane solvers for strongly convex minimization.

Three algorithms over a compact box or simplex domain:

* ``run_kelley``            -- classical cutting planes (affine cuts);
* ``run_qcsc``              -- quadratic cuts l(., x_k) + (mu/2)||. - x_k||^2;
* ``run_qcsc_reformulated`` -- the same method expressed as affine cuts of
  f = f_tilde - (mu/2)||.||^2 plus a trial-point-independent (mu/2)||.||^2
  term; it reproduces the quadratic-cut iterates exactly.

Each model minimization is one epigraph QP handed to the embedded subsolver,
so runs are deterministic. ``complexity_bound`` evaluates the worst-case
iteration count for known oracle constants and ``gap_recursion_residuals``
checks the geometric gap contraction along a recorded run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolationError, InputError, IterationCapError
from .model import (
    BaseSet,
    Box,
    CutModel,
    QuadraticCut,
    Simplex,
    model_eval,
)
from .qp import build_model_min_subproblem, solve_qp

_DEFAULT_MAX_ITER = 1000


@dataclass(frozen=True, eq=False)
class SubgradientOracle:
    """Value-and-subgradient oracle for a mu-convex function on a compact domain.

    ``func(x)`` returns ``(value, subgradient)``. The optional constants bound
    the smoothness of f = f_tilde - (mu/2)||.||^2 via
    ||f'(u) - f'(v)|| <= 2*big_m + lip*||u - v||, and ``diameter`` bounds the
    domain; when all are present they feed the iteration-complexity bound.
    """

    func: Callable[[np.ndarray], tuple]
    mu: float
    domain: BaseSet
    dim: int
    big_m: Optional[float] = None
    lip: Optional[float] = None
    diameter: Optional[float] = None

    def __call__(self, x: np.ndarray):
        value, sub = self.func(np.asarray(x, dtype=float))
        return float(value), np.asarray(sub, dtype=float)


@dataclass(frozen=True, eq=False)
class PiecewiseQuadratic:
    """max of branches a_i ||x||^2 + <l_i, x> + c_i; subgradients from the active branch."""

    coeffs: np.ndarray    # (B,) quadratic coefficients a_i
    linears: np.ndarray   # (B, n)
    consts: np.ndarray    # (B,)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.array(self.coeffs, dtype=float))
        object.__setattr__(self, "linears", np.atleast_2d(np.array(self.linears, dtype=float)))
        object.__setattr__(self, "consts", np.array(self.consts, dtype=float))
        if not (len(self.coeffs) == len(self.linears) == len(self.consts)):
            raise InputError("branch arrays must have equal length")
        if len(self.coeffs) == 0:
            raise InputError("at least one branch is required")

    @property
    def dim(self) -> int:
        return self.linears.shape[1]

    def default_mu(self) -> float:
        """Strong-convexity constant 2 * min quadratic coefficient."""
        return 2.0 * float(np.min(self.coeffs))

    def __call__(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        vals = self.coeffs * float(x @ x) + self.linears @ x + self.consts
        i = int(np.argmax(vals))  # ties: lowest branch index
        return float(vals[i]), 2.0 * self.coeffs[i] * x + self.linears[i]

    def eval_batch(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized values at rows of ``xs``."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        sq = np.einsum("ij,ij->i", xs, xs)
        vals = self.coeffs[None, :] * sq[:, None] + xs @ self.linears.T + self.consts[None, :]
        return vals.max(axis=1)

    def to_oracle(self, mu: Optional[float] = None, domain: Optional[BaseSet] = None,
                  big_m: Optional[float] = None, lip: Optional[float] = None) -> SubgradientOracle:
        dom = domain if domain is not None else Box(lower=np.full(self.dim, -10.0),
                                                    upper=np.full(self.dim, 10.0))
        diameter = dom.diameter() if hasattr(dom, "diameter") else None
        return SubgradientOracle(func=self, mu=self.default_mu() if mu is None else float(mu),
                                 domain=dom, dim=self.dim, big_m=big_m, lip=lip,
                                 diameter=diameter)


def paper_1d_objective() -> PiecewiseQuadratic:
    """Built-in 1-d demo objective: max of three steep parabolas on [-10, 10]."""
    # branches: 1000(x-4)^2+2, 1000(x+5)^2+8, 500(x-3)^2+6
    return PiecewiseQuadratic(
        coeffs=[1000.0, 1000.0, 500.0],
        linears=[[-8000.0], [10000.0], [-3000.0]],
        consts=[16002.0, 25008.0, 4506.0],
    )


BUILTIN_OBJECTIVES = {"paper-1d": paper_1d_objective}


@dataclass(eq=False)
class QcscRun:
    """Trace of one cutting-plane run."""

    algorithm: str
    eps: float
    iterates: list = field(default_factory=list)          # x_0 .. x_K
    incumbents: list = field(default_factory=list)        # y_k per iteration
    incumbent_values: list = field(default_factory=list)  # f(y_k)
    gaps: list = field(default_factory=list)              # t_k, k = 1..K
    model_sizes: list = field(default_factory=list)
    status: str = "running"

    @property
    def n_iterations(self) -> int:
        return len(self.gaps)

    @property
    def final_gap(self) -> float:
        return self.gaps[-1] if self.gaps else math.inf

    @property
    def final_value(self) -> float:
        return self.incumbent_values[-1]

    @property
    def final_x(self) -> np.ndarray:
        return self.incumbents[-1]


def _validate_start(oracle: SubgradientOracle, x0: np.ndarray, eps: float) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != oracle.dim:
        raise InputError(f"x0 has dimension {x0.shape[0]}, oracle expects {oracle.dim}")
    if not oracle.domain.contains(x0):
        raise InputError("x0 lies outside the feasible domain")
    if eps <= 0.0:
        raise InputError("eps must be positive")
    return x0


def _default_max_iter(oracle: SubgradientOracle, eps: float) -> int:
    if None not in (oracle.big_m, oracle.lip, oracle.diameter) and oracle.mu > 0:
        return 10 * complexity_bound(oracle.big_m, oracle.lip, oracle.mu,
                                     oracle.diameter, eps)
    return _DEFAULT_MAX_ITER


def _cutting_plane_loop(oracle: SubgradientOracle, x0: np.ndarray, eps: float,
                        max_iter: Optional[int], make_cut,
                        algorithm: str, qp_tol: float) -> QcscRun:
    x0 = _validate_start(oracle, x0, eps)
    if max_iter is None:
        max_iter = _default_max_iter(oracle, eps)
    run = QcscRun(algorithm=algorithm, eps=eps)

    f0, g0 = oracle(x0)
    model = CutModel(dimension=oracle.dim, cuts=(make_cut(x0, f0, g0),),
                     floor=-math.inf)
    run.iterates.append(x0)
    best_val, best_x = f0, x0

    t = math.inf  # t_0 sentinel: always perform at least one model minimization
    for k in range(1, max_iter + 1):
        sub = build_model_min_subproblem(model, oracle.domain)
        sol = solve_qp(sub.qp, tol=qp_tol)
        xk = sol.x_star[:oracle.dim].copy()
        fk, gk = oracle(xk)
        if fk < best_val:  # ties broken by earliest iterate
            best_val, best_x = fk, xk
        t = best_val - model_eval(model, xk)
        run.iterates.append(xk)
        run.incumbents.append(best_x)
        run.incumbent_values.append(best_val)
        run.gaps.append(t)
        run.model_sizes.append(len(model))
        if t <= eps:
            run.status = "gap_met"
            return run
        model = CutModel(dimension=model.dimension,
                         cuts=model.cuts + (make_cut(xk, fk, gk),),
                         floor=model.floor)
    run.status = "iteration_cap"
    return run


def run_kelley(oracle: SubgradientOracle, x0, eps: float,
               max_iter: Optional[int] = None, qp_tol: float = 1e-10) -> QcscRun:
    """Cutting planes with affine cuts f(x_k) + <g_k, . - x_k>."""
    def make_cut(x, fx, gx):
        return QuadraticCut(theta=fx, beta=gx, center=x, alpha=0.0)

    return _cutting_plane_loop(oracle, x0, eps, max_iter, make_cut,
                               "kelley", qp_tol)


def run_qcsc(oracle: SubgradientOracle, x0, eps: float,
             max_iter: Optional[int] = None, qp_tol: float = 1e-10) -> QcscRun:
    """Cutting planes with quadratic cuts l(., x_k) + (mu/2)||. - x_k||^2."""
    if oracle.mu <= 0.0:
        raise ContractViolationError("quadratic cuts require mu > 0")

    def make_cut(x, fx, gx):
        return QuadraticCut(theta=fx, beta=gx, center=x, alpha=oracle.mu)

    return _cutting_plane_loop(oracle, x0, eps, max_iter, make_cut,
                               "qcsc", qp_tol)


def run_qcsc_reformulated(oracle: SubgradientOracle, x0, eps: float,
                          max_iter: Optional[int] = None,
                          qp_tol: float = 1e-10) -> QcscRun:
    """Quadratic-cut method restated with affine cuts of f = f_tilde - (mu/2)||.||^2.

    The cut built at x_k is f(x_k) + <f'(x_k), . - x_k> + (mu/2)||.||^2 with
    f'(x) = g(x) - mu x; it coincides pointwise with the quadratic cut of
    ``run_qcsc``, so under the same deterministic subsolver the iterate
    sequences match.
    """
    if oracle.mu <= 0.0:
        raise ContractViolationError("quadratic cuts require mu > 0")
    mu = oracle.mu

    def make_cut(x, fx, gx):
        f_val = fx - 0.5 * mu * float(x @ x)
        f_grad = gx - mu * x
        # affine cut of f, recentred so the stored quadratic term is centered:
        # f_val + <f_grad, u - x> + (mu/2)||u||^2
        #   = theta + <beta, u - x> + (mu/2)||u - x||^2
        # with theta = f_val + (mu/2)||x||^2 and beta = f_grad + mu x.
        theta = f_val + 0.5 * mu * float(x @ x)
        beta = f_grad + mu * x
        return QuadraticCut(theta=theta, beta=beta, center=x, alpha=mu)

    return _cutting_plane_loop(oracle, x0, eps, max_iter, make_cut,
                               "qcsc-reform", qp_tol)


ALGORITHMS = {
    "kelley": run_kelley,
    "qcsc": run_qcsc,
    "qcsc-reform": run_qcsc_reformulated,
}


def uniform_gap_bound(big_m: float, lip: float, diameter: float) -> float:
    """Worst-case first gap: M^2 + (L/2 + 1) D^2."""
    return big_m ** 2 + (lip / 2.0 + 1.0) * diameter ** 2


def complexity_bound(big_m: float, lip: float, mu: float, diameter: float,
                     eps: float) -> int:
    """Iteration count guaranteeing an eps-optimal incumbent.

    ceil(1 + (1 + 8(M^2 + eps L)/(mu eps)) * log(4 tbar / (3 eps))) with
    tbar = M^2 + (L/2 + 1) D^2; returns 1 when 4 tbar <= 3 eps.
    """
    if mu <= 0.0 or eps <= 0.0 or diameter <= 0.0:
        raise InputError("mu, eps and diameter must be positive")
    if big_m < 0.0 or lip < 0.0:
        raise InputError("the smoothness constants must be nonnegative")
    tbar = uniform_gap_bound(big_m, lip, diameter)
    if 4.0 * tbar <= 3.0 * eps:
        return 1
    factor = 1.0 + 8.0 * (big_m ** 2 + eps * lip) / (mu * eps)
    return int(math.ceil(1.0 + factor * math.log(4.0 * tbar / (3.0 * eps))))


def contraction_factor(big_m: float, lip: float, mu: float, eps: float) -> float:
    """Geometric gap contraction rate tau: 1/tau = 1 + mu eps / (8(M^2 + eps L))."""
    denom = big_m ** 2 + eps * lip
    if denom == 0.0:
        return 0.0
    return 1.0 / (1.0 + mu * eps / (8.0 * denom))


def gap_recursion_residuals(run: QcscRun, big_m: float, lip: float,
                            mu: float) -> np.ndarray:
    """Residuals of t_{k+1} - eps/4 <= tau (t_k - eps/4) along a recorded run.

    Nonpositive entries mean the recursion holds; requires the supplied
    constants to be valid for the oracle that produced the run.
    """
    tau = contraction_factor(big_m, lip, mu, run.eps)
    gaps = np.asarray(run.gaps, dtype=float)
    if gaps.size < 2:
        return np.zeros(0)
    shift = run.eps / 4.0
    return (gaps[1:] - shift) - tau * (gaps[:-1] - shift)
