"""Domain model: stage costs, cuts, cut models, constraint sets, noise, instances.

Every container is immutable after construction (arrays are marked read-only);
operations that extend a model return a new object, so shared readers never
observe a partially added cut. Matrices are dense float64 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import (
    ContractViolationError,
    DimensionMismatchError,
    InputError,
)

_SYM_RTOL = 1e-12      # relative symmetry tolerance for quadratic matrices
_ALPHA_SLACK = 1e-9    # slack when certifying strong-convexity constants
_PSD_SLACK = 1e-9
_PROB_TOL = 1e-12


def _vector(v, name: str) -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _matrix(m, name: str) -> np.ndarray:
    arr = np.array(m, dtype=float)
    if arr.ndim != 2:
        raise InputError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_dim(arr: np.ndarray, dim: int, name: str) -> None:
    if arr.shape[0] != dim:
        raise DimensionMismatchError(f"{name} has length {arr.shape[0]}, expected {dim}")


# ---------------------------------------------------------------------------
# Feasible base sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box lower <= x <= upper; entries may be +-inf."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _vector(self.lower, "lower"))
        object.__setattr__(self, "upper", _vector(self.upper, "upper"))
        if self.lower.shape != self.upper.shape:
            raise DimensionMismatchError("box lower/upper lengths differ")
        if np.any(self.lower > self.upper):
            raise InputError("box has lower > upper")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))


@dataclass(frozen=True)
class Simplex:
    """Unit simplex: x >= 0 and sum(x) = 1."""

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.all(x >= -tol) and abs(float(np.sum(x)) - 1.0) <= tol)

    def diameter(self) -> float:
        return float(np.sqrt(2.0))


BaseSet = Union[Box, Simplex]


def base_set_bounds(base_set: BaseSet, n: int):
    """Bounds plus the optional sum-to-one equality row encoding a base set."""
    if isinstance(base_set, Box):
        if base_set.dim != n:
            raise DimensionMismatchError(f"box dimension {base_set.dim}, expected {n}")
        return base_set.lower.copy(), base_set.upper.copy(), None
    if isinstance(base_set, Simplex):
        return np.zeros(n), np.full(n, np.inf), np.ones(n)
    raise InputError(f"unknown base set {type(base_set).__name__}")


# ---------------------------------------------------------------------------
# Stage costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadraticStageCost:
    """Stage cost 0.5 z'Hz + c'z + d on the stacked pair z = (x_prev, x_next).

    ``alpha`` is a user-supplied strong-convexity certificate (Euclidean norm,
    jointly in the pair); the constructor verifies lambda_min(H) >= alpha - 1e-9.
    """

    n: int
    H: np.ndarray
    c: np.ndarray
    d: float
    alpha: float

    def __post_init__(self):
        H = _matrix(self.H, "H")
        c = _vector(self.c, "c")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "alpha", float(self.alpha))
        two_n = 2 * self.n
        if H.shape != (two_n, two_n):
            raise DimensionMismatchError(
                f"H has shape {H.shape}, expected {(two_n, two_n)}")
        _check_dim(c, two_n, "c")
        scale = max(1.0, float(np.abs(H).max()) if H.size else 1.0)
        if H.size and float(np.abs(H - H.T).max()) > _SYM_RTOL * scale:
            raise InputError("H is not symmetric within tolerance")
        if self.alpha <= 0.0:
            raise InputError("alpha must be positive")
        lam_min = float(np.linalg.eigvalsh(H)[0]) if H.size else 0.0
        if lam_min < self.alpha - _ALPHA_SLACK:
            raise InputError(
                f"strong-convexity certificate fails: lambda_min(H)={lam_min:.6e} "
                f"< alpha={self.alpha:.6e}")


def eval_stage_cost(cost: QuadraticStageCost, x_prev: np.ndarray, x_next: np.ndarray) -> float:
    """Evaluate 0.5 z'Hz + c'z + d at z = (x_prev, x_next)."""
    x_prev = np.asarray(x_prev, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    _check_dim(x_prev, cost.n, "x_prev")
    _check_dim(x_next, cost.n, "x_next")
    z = np.concatenate([x_prev, x_next])
    return float(0.5 * z @ cost.H @ z + cost.c @ z + cost.d)


def grad_stage_cost(cost: QuadraticStageCost, x_prev: np.ndarray, x_next: np.ndarray):
    """Gradient Hz + c split into its (x_prev, x_next) blocks."""
    x_prev = np.asarray(x_prev, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    _check_dim(x_prev, cost.n, "x_prev")
    _check_dim(x_next, cost.n, "x_next")
    g = cost.H @ np.concatenate([x_prev, x_next]) + cost.c
    return g[:cost.n].copy(), g[cost.n:].copy()


def make_penalized_stage_cost(cost: QuadraticStageCost, cons: "ConstraintSetS1",
                              rho: float) -> QuadraticStageCost:
    """Fold rho * ||A x_next + B x_prev - b||^2 into the quadratic stage cost.

    Requires the columns of (A B) to be linearly independent so the penalty
    itself is strongly convex in the pair; the certificate alpha is kept
    unchanged (valid, possibly loose).
    """
    if rho <= 0.0:
        raise InputError("rho must be positive")
    n = cost.n
    if cons.A.shape[1] != n or cons.B.shape[1] != n:
        raise DimensionMismatchError("constraint matrices do not match the cost dimension")
    stacked = np.hstack([cons.B, cons.A])  # acts on z = (x_prev, x_next)
    if np.linalg.matrix_rank(stacked) < 2 * n:
        raise InputError("columns of (A B) are linearly dependent; penalty certificate fails")
    H = cost.H + 2.0 * rho * stacked.T @ stacked
    c = cost.c - 2.0 * rho * stacked.T @ cons.b
    d = cost.d + rho * float(cons.b @ cons.b)
    return QuadraticStageCost(n=n, H=H, c=c, d=d, alpha=cost.alpha)


# ---------------------------------------------------------------------------
# Cuts and cut models
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuadraticCut:
    """One cut theta + <beta, x - center> + (alpha/2)||x - center||^2; alpha=0 is affine."""

    theta: float
    beta: np.ndarray
    center: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "beta", _vector(self.beta, "beta"))
        object.__setattr__(self, "center", _vector(self.center, "center"))
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.beta.shape != self.center.shape:
            raise DimensionMismatchError("beta and center lengths differ")
        if self.alpha < 0.0:
            raise InputError("cut alpha must be nonnegative")

    @property
    def dim(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True, eq=False)
class ShiftedAffineForm:
    """Center-free cut form x -> (alpha/2)||x||^2 + theta_tilde + <beta_tilde, x>."""

    theta_tilde: float
    beta_tilde: np.ndarray
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "theta_tilde", float(self.theta_tilde))
        object.__setattr__(self, "beta_tilde", _vector(self.beta_tilde, "beta_tilde"))
        object.__setattr__(self, "alpha", float(self.alpha))
        if self.alpha < 0.0:
            raise InputError("alpha must be nonnegative")


def cut_eval(cut: QuadraticCut, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    _check_dim(x, cut.dim, "x")
    dx = x - cut.center
    return float(cut.theta + cut.beta @ dx + 0.5 * cut.alpha * dx @ dx)


def to_shifted_affine(cut: QuadraticCut) -> ShiftedAffineForm:
    """Expand the center out of a cut so the quadratic term becomes (alpha/2)||x||^2."""
    theta_tilde = cut.theta - float(cut.beta @ cut.center) \
        + 0.5 * cut.alpha * float(cut.center @ cut.center)
    beta_tilde = cut.beta - cut.alpha * cut.center
    return ShiftedAffineForm(theta_tilde=theta_tilde, beta_tilde=beta_tilde, alpha=cut.alpha)


def shifted_affine_eval(form: ShiftedAffineForm, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * form.alpha * x @ x + form.theta_tilde + form.beta_tilde @ x)


@dataclass(frozen=True, eq=False)
class CutModel:
    """Pointwise maximum of cuts; evaluates to ``floor`` while no cut exists.

    The floor is a caller-supplied lower bound on the approximated function
    (validity requires floor <= min of the true function); once a cut has been
    added the floor is no longer active. Shifted-affine coefficients of all
    member cuts are cached for the QP subsolver.
    """

    dimension: int
    cuts: tuple = ()
    floor: float = 0.0
    thetas_tilde: np.ndarray = field(init=False, repr=False, compare=False)
    betas_tilde: np.ndarray = field(init=False, repr=False, compare=False)
    _alpha: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cuts", tuple(self.cuts))
        object.__setattr__(self, "floor", float(self.floor))
        for cut in self.cuts:
            if cut.dim != self.dimension:
                raise DimensionMismatchError(
                    f"cut dimension {cut.dim} does not match model dimension {self.dimension}")
        forms = [to_shifted_affine(c) for c in self.cuts]
        thetas = np.array([f.theta_tilde for f in forms], dtype=float)
        betas = (np.stack([f.beta_tilde for f in forms])
                 if forms else np.zeros((0, self.dimension)))
        thetas.setflags(write=False)
        betas.setflags(write=False)
        object.__setattr__(self, "thetas_tilde", thetas)
        object.__setattr__(self, "betas_tilde", betas)
        alphas = {c.alpha for c in self.cuts}
        object.__setattr__(self, "_alpha", alphas.pop() if len(alphas) == 1 else None)

    def __len__(self) -> int:
        return len(self.cuts)

    def uniform_alpha(self) -> float:
        """Common quadratic coefficient of all cuts; raises if they disagree."""
        if not self.cuts:
            return 0.0
        if self._alpha is None:
            raise ContractViolationError(
                f"mixed cut alphas in one model: {sorted({c.alpha for c in self.cuts})}")
        return float(self._alpha)


def model_eval(model: CutModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    _check_dim(x, model.dimension, "x")
    if not model.cuts:
        return model.floor
    if model._alpha is not None:
        # fast path through the cached shifted-affine coefficients
        vals = model.thetas_tilde + model.betas_tilde @ x \
            + 0.5 * float(model._alpha) * float(x @ x)
        return float(np.max(vals))
    return max(cut_eval(c, x) for c in model.cuts)


def add_cut(model: CutModel, cut: QuadraticCut) -> CutModel:
    if cut.dim != model.dimension:
        raise DimensionMismatchError(
            f"cut dimension {cut.dim} does not match model dimension {model.dimension}")
    return CutModel(dimension=model.dimension, cuts=model.cuts + (cut,), floor=model.floor)


# ---------------------------------------------------------------------------
# Constraint sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConstraintSetS1:
    """Feasible set {x : x in base_set, A x + B x_prev = b}."""

    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    base_set: BaseSet

    def __post_init__(self):
        object.__setattr__(self, "A", _matrix(self.A, "A"))
        object.__setattr__(self, "B", _matrix(self.B, "B"))
        object.__setattr__(self, "b", _vector(self.b, "b"))
        if self.A.shape != self.B.shape:
            raise DimensionMismatchError("A and B shapes differ")
        if self.b.shape[0] != self.A.shape[0]:
            raise DimensionMismatchError("b length does not match the row count of A")
        if isinstance(self.base_set, Box) and self.base_set.dim != self.A.shape[1]:
            raise DimensionMismatchError("box dimension does not match columns of A")

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class QuadraticInequality:
    """One convex component g(z) = 0.5 z'Qz + q'z + r <= 0 on z = (x_prev, x_next)."""

    Q: np.ndarray
    q: np.ndarray
    r: float

    def __post_init__(self):
        object.__setattr__(self, "Q", _matrix(self.Q, "Q"))
        object.__setattr__(self, "q", _vector(self.q, "q"))
        object.__setattr__(self, "r", float(self.r))
        if self.Q.shape[0] != self.Q.shape[1] or self.Q.shape[0] != self.q.shape[0]:
            raise DimensionMismatchError("Q/q dimensions disagree")
        if self.Q.size:
            scale = max(1.0, float(np.abs(self.Q).max()))
            if float(np.abs(self.Q - self.Q.T).max()) > _SYM_RTOL * scale:
                raise InputError("Q is not symmetric within tolerance")
            if float(np.linalg.eigvalsh(self.Q)[0]) < -_PSD_SLACK:
                raise InputError("Q is not positive semidefinite; component is not convex")


def inequality_eval(g: QuadraticInequality, x_prev: np.ndarray, x_next: np.ndarray) -> float:
    z = np.concatenate([np.asarray(x_prev, float), np.asarray(x_next, float)])
    return float(0.5 * z @ g.Q @ z + g.q @ z + g.r)


def inequality_grad_prev(g: QuadraticInequality, x_prev: np.ndarray, x_next: np.ndarray) -> np.ndarray:
    """x_prev block of the gradient of one quadratic inequality component."""
    x_prev = np.asarray(x_prev, dtype=float)
    z = np.concatenate([x_prev, np.asarray(x_next, float)])
    return (g.Q @ z + g.q)[:x_prev.shape[0]].copy()


@dataclass(frozen=True, eq=False)
class ConstraintSetS2(ConstraintSetS1):
    """S1 constraints plus convex quadratic inequalities g_i(x_next, x_prev) <= 0.

    End-to-end solving over S2 sets is not supported by the embedded QP solver;
    the type exists so cut assembly from externally supplied multipliers stays
    expressible.
    """

    g: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "g", tuple(self.g))
        two_n = 2 * self.n
        for i, comp in enumerate(self.g):
            if comp.Q.shape[0] != two_n:
                raise DimensionMismatchError(
                    f"g[{i}] acts on dimension {comp.Q.shape[0]}, expected {two_n}")


# ---------------------------------------------------------------------------
# Noise and instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Stagewise-independent discrete noise for stages 2..T.

    ``realizations[i]`` is the (M_t, K) array for stage t = i + 2 and
    ``probabilities[i]`` the matching strictly positive weights summing to one.
    """

    realizations: tuple
    probabilities: tuple

    def __post_init__(self):
        reals = tuple(_matrix(x, f"realizations[{i}]") for i, x in enumerate(self.realizations))
        probs = tuple(_vector(p, f"probabilities[{i}]") for i, p in enumerate(self.probabilities))
        object.__setattr__(self, "realizations", reals)
        object.__setattr__(self, "probabilities", probs)
        if len(reals) != len(probs):
            raise DimensionMismatchError("realizations/probabilities stage counts differ")
        for i, (x, p) in enumerate(zip(reals, probs)):
            if x.shape[0] != p.shape[0]:
                raise DimensionMismatchError(f"stage {i + 2}: realization/probability counts differ")
            if np.any(p <= 0.0):
                raise InputError(f"stage {i + 2}: probabilities must be strictly positive")
            if abs(float(np.sum(p)) - 1.0) > _PROB_TOL:
                raise InputError(f"stage {i + 2}: probabilities sum to {float(np.sum(p))!r}, not 1")

    @property
    def n_stages(self) -> int:
        """Number of random stages (t = 2..T)."""
        return len(self.realizations)

    def stage_realizations(self, t: int) -> np.ndarray:
        return self.realizations[t - 2]

    def stage_probabilities(self, t: int) -> np.ndarray:
        return self.probabilities[t - 2]


@dataclass(frozen=True, eq=False)
class StageData:
    """Per-stage data: one cost per realization, one constraint set, raw noise."""

    costs: tuple
    constraints: ConstraintSetS1
    xis: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(self.costs))
        object.__setattr__(self, "xis", _matrix(self.xis, "xis"))
        object.__setattr__(self, "probs", _vector(self.probs, "probs"))
        if len(self.costs) != self.probs.shape[0] or len(self.costs) != self.xis.shape[0]:
            raise DimensionMismatchError("costs/xis/probs counts differ within a stage")
        if np.any(self.probs <= 0.0):
            raise InputError("stage probabilities must be strictly positive")
        if abs(float(np.sum(self.probs)) - 1.0) > _PROB_TOL:
            raise InputError("stage probabilities do not sum to 1")

    @property
    def n_realizations(self) -> int:
        return len(self.costs)


@dataclass(frozen=True, eq=False)
class MspInstance:
    """A T-stage problem: initial state, per-stage costs/constraints/noise."""

    T: int
    n: int
    x0: np.ndarray
    stages: tuple

    def __post_init__(self):
        object.__setattr__(self, "x0", _vector(self.x0, "x0"))
        object.__setattr__(self, "stages", tuple(self.stages))
        _check_dim(self.x0, self.n, "x0")
        if len(self.stages) != self.T:
            raise DimensionMismatchError(f"{len(self.stages)} stages supplied, T={self.T}")
        if self.T < 1:
            raise InputError("T must be at least 1")
        if self.stages[0].n_realizations != 1:
            raise InputError("stage 1 must be deterministic (a single realization)")
        for t, stage in enumerate(self.stages, start=1):
            for j, cost in enumerate(stage.costs):
                if cost.n != self.n:
                    raise DimensionMismatchError(
                        f"stage {t} realization {j}: cost dimension {cost.n} != n={self.n}")
            if stage.constraints.n != self.n:
                raise DimensionMismatchError(f"stage {t}: constraint dimension mismatch")

    def stage(self, t: int) -> StageData:
        """1-based stage accessor."""
        return self.stages[t - 1]

    def noise_model(self) -> NoiseModel:
        return NoiseModel(
            realizations=tuple(s.xis for s in self.stages[1:]),
            probabilities=tuple(s.probs for s in self.stages[1:]),
        )
