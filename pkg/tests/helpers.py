"""Shared test utilities: feasible-point sampling, hand instances, brute-force oracles."""

import numpy as np

from sqdp.model import (
    Box,
    ConstraintSetS1,
    MspInstance,
    QuadraticStageCost,
    Simplex,
    StageData,
)


def random_feasible_point(base_set, n, rng):
    """Uniform-ish sample from a box (clipped to [-5, 5] where unbounded) or simplex."""
    if isinstance(base_set, Simplex):
        return rng.dirichlet(np.ones(n))
    lo = np.where(np.isfinite(base_set.lower), base_set.lower, -5.0)
    hi = np.where(np.isfinite(base_set.upper), base_set.upper, 5.0)
    return rng.uniform(lo, hi)


def project_simplex(v):
    """Euclidean projection onto the unit simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(v) + 1)
    cond = u - (css - 1.0) / ks > 0
    rho = ks[cond][-1]
    tau = (css[cond][-1] - 1.0) / rho
    return np.maximum(v - tau, 0.0)


def projected_gradient_simplex(P, q, iterations):
    """Brute-force projected-gradient minimization of 0.5 x'Px + q'x on the simplex."""
    step = 1.0 / float(np.linalg.eigvalsh(P)[-1])
    x = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(iterations):
        x = project_simplex(x - step * (P @ x + q))
    return x, float(0.5 * x @ P @ x + q @ x)


def spd_stage_cost(n, rng, alpha_pad=1.0, scale=1.0):
    """Random strongly convex stage cost with an exact certificate."""
    two_n = 2 * n
    F = rng.normal(size=(two_n, two_n)) * scale
    H = F @ F.T + alpha_pad * np.eye(two_n)
    alpha = float(np.linalg.eigvalsh(H)[0])
    c = rng.normal(size=two_n) * scale
    return QuadraticStageCost(n=n, H=H, c=c, d=float(rng.normal()), alpha=alpha)


def box_coupled_instance(T=2, seed=0, width=4.0):
    """Hand-built 1-d instance with box sets and a genuine coupling row (B != 0).

    Every stage: cost 0.5 (x_prev^2 + x^2) + small linear part, constraint
    x + 0.5 x_prev = b inside a wide box, so the coupling duals enter the cut
    slope through B'lambda. The floor -1e6 is a crude but valid lower bound.
    """
    rng = np.random.default_rng(seed)
    n = 1
    stages = []
    for t in range(1, T + 1):
        m_real = 1 if t == 1 else 2
        costs = []
        xis = []
        for _ in range(m_real):
            xi = rng.uniform(0.2, 1.0, size=2)
            H = np.eye(2) + 0.2 * np.outer(xi, xi)
            costs.append(QuadraticStageCost(n=n, H=H, c=0.1 * xi, d=0.0, alpha=1.0))
            xis.append(xi)
        cons = ConstraintSetS1(
            A=np.array([[1.0]]), B=np.array([[0.5]]), b=np.array([0.8]),
            base_set=Box(lower=np.array([-width]), upper=np.array([width])))
        stages.append(StageData(costs=tuple(costs), constraints=cons,
                                xis=np.array(xis),
                                probs=np.full(m_real, 1.0 / m_real)))
    return MspInstance(T=T, n=n, x0=np.array([0.3]), stages=tuple(stages))
