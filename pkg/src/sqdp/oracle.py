"""Brute-force ground truth: extensive forms over the scenario tree and grid search.

The extensive form stacks one decision block per tree node into a single QP,
so its value is exact up to the QP tolerance; subtree evaluation solves one
extensive form per realization of the root stage and averages. Both are meant
for desk-scale instances and guard against tree blow-up with a node budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NodeBudgetExceededError
from .model import MspInstance, base_set_bounds
from .qp import QpProblem, solve_qp

DEFAULT_NODE_BUDGET = 50_000


@dataclass(eq=False)
class TreeNode:
    index: int
    stage: int
    parent: int | None
    realization: int
    prob: float            # transition probability from the parent
    path_prob: float
    children: list = field(default_factory=list)


@dataclass(eq=False)
class ScenarioTree:
    """Explicit stagewise-independent scenario tree rooted at stage ``root_stage - 1``.

    The root (index 0) carries the incoming state and no realization; level
    ``root_stage`` holds its realizations, every later stage branches over the
    full noise support.
    """

    nodes: list
    root_stage: int

    @classmethod
    def from_instance(cls, instance: MspInstance, root_stage: int = 1,
                      node_budget: int = DEFAULT_NODE_BUDGET,
                      root_realization: int | None = None) -> "ScenarioTree":
        if not 1 <= root_stage <= instance.T:
            raise InputError(f"root_stage {root_stage} outside 1..{instance.T}")
        counts = []
        for t in range(root_stage, instance.T + 1):
            if t == root_stage and root_realization is not None:
                counts.append(1)
            else:
                counts.append(instance.stage(t).n_realizations)
        total = 0
        level = 1
        for c in counts:
            level *= c
            total += level
        if total + 1 > node_budget:
            raise NodeBudgetExceededError(total + 1, node_budget)

        root = TreeNode(index=0, stage=root_stage - 1, parent=None,
                        realization=-1, prob=1.0, path_prob=1.0)
        nodes = [root]
        frontier = [root]
        for t in range(root_stage, instance.T + 1):
            stage = instance.stage(t)
            if t == root_stage and root_realization is not None:
                reals = [root_realization]
                probs = [1.0]  # conditional tree: the root realization is given
            else:
                reals = list(range(stage.n_realizations))
                probs = list(stage.probs)
            new_frontier = []
            for parent in frontier:
                for j, p in zip(reals, probs):
                    node = TreeNode(index=len(nodes), stage=t, parent=parent.index,
                                    realization=j, prob=float(p),
                                    path_prob=parent.path_prob * float(p))
                    parent.children.append(node.index)
                    nodes.append(node)
                    new_frontier.append(node)
            frontier = new_frontier
        return cls(nodes=nodes, root_stage=root_stage)

    def __len__(self) -> int:
        return len(self.nodes)

    def leaves(self):
        return [n for n in self.nodes if not n.children]

    def stage_nodes(self, t: int):
        return [n for n in self.nodes if n.stage == t]


def _solve_tree_qp(instance: MspInstance, tree: ScenarioTree, root_state: np.ndarray,
                   qp_tol: float):
    """One QP over all non-root node decisions, probability-weighted objective."""
    n = instance.n
    decision_nodes = [node for node in tree.nodes if node.parent is not None]
    offset = {node.index: i * n for i, node in enumerate(decision_nodes)}
    dim = n * len(decision_nodes)

    P = np.zeros((dim, dim))
    q = np.zeros(dim)
    const = 0.0
    rows = []
    rhs = []
    lb = np.empty(dim)
    ub = np.empty(dim)

    for node in decision_nodes:
        t = node.stage
        stage = instance.stage(t)
        cost = stage.costs[node.realization]
        w = node.path_prob
        o = offset[node.index]
        parent = tree.nodes[node.parent]
        H_pp, H_pn = cost.H[:n, :n], cost.H[:n, n:]
        H_np, H_nn = cost.H[n:, :n], cost.H[n:, n:]
        P[o:o + n, o:o + n] += w * H_nn
        q[o:o + n] += w * cost.c[n:]
        if parent.parent is None:
            # parent state is fixed (root_state); fold its terms
            q[o:o + n] += w * (H_np @ root_state)
            const += w * (0.5 * float(root_state @ H_pp @ root_state)
                          + float(cost.c[:n] @ root_state) + cost.d)
        else:
            po = offset[parent.index]
            P[po:po + n, po:po + n] += w * H_pp
            P[po:po + n, o:o + n] += w * H_pn
            P[o:o + n, po:po + n] += w * H_np
            q[po:po + n] += w * cost.c[:n]
            const += w * cost.d

        cons = stage.constraints
        lower, upper, sum_row = base_set_bounds(cons.base_set, n)
        lb[o:o + n] = lower
        ub[o:o + n] = upper
        m = cons.m
        if m:
            for i in range(m):
                row = np.zeros(dim)
                row[o:o + n] = cons.A[i]
                if parent.parent is None:
                    rhs.append(float(cons.b[i] - cons.B[i] @ root_state))
                else:
                    po = offset[parent.index]
                    row[po:po + n] = cons.B[i]
                    rhs.append(float(cons.b[i]))
                rows.append(row)
        if sum_row is not None:
            row = np.zeros(dim)
            row[o:o + n] = sum_row
            rows.append(row)
            rhs.append(1.0)

    A = np.vstack(rows) if rows else np.zeros((0, dim))
    b = np.array(rhs)
    qp = QpProblem(P=P, q=q, r=const, Aeq=A, beq=b, lb=lb, ub=ub)
    sol = solve_qp(qp, tol=qp_tol)
    root_child = tree.nodes[tree.nodes[0].children[0]]
    root_decision = sol.x_star[offset[root_child.index]:offset[root_child.index] + n].copy()
    return sol.value, root_decision, sol, offset


def extensive_form_value(instance: MspInstance,
                         node_budget: int = DEFAULT_NODE_BUDGET,
                         qp_tol: float = 1e-9):
    """Exact optimal value and first-stage decision of the full problem."""
    tree = ScenarioTree.from_instance(instance, root_stage=1, node_budget=node_budget)
    value, root_decision, _, _ = _solve_tree_qp(instance, tree, instance.x0, qp_tol)
    return value, root_decision


def subtree_value(instance: MspInstance, t: int, x_prev: np.ndarray,
                  node_budget: int = DEFAULT_NODE_BUDGET,
                  qp_tol: float = 1e-9) -> float:
    """Expected cost-to-go from stage t onward given the incoming state.

    Stage T+1 is identically zero by convention. For t >= 2 the value is the
    probability-weighted sum over stage-t realizations of one extensive form
    each; t = 1 evaluates the full problem from the supplied initial state.
    """
    if t == instance.T + 1:
        return 0.0
    if not 1 <= t <= instance.T:
        raise InputError(f"stage {t} outside 1..{instance.T + 1}")
    x_prev = np.asarray(x_prev, dtype=float)
    if x_prev.shape[0] != instance.n:
        raise InputError(f"x_prev has length {x_prev.shape[0]}, expected {instance.n}")
    stage = instance.stage(t)
    total = 0.0
    for j in range(stage.n_realizations):
        tree = ScenarioTree.from_instance(instance, root_stage=t,
                                          node_budget=node_budget,
                                          root_realization=j)
        value, _, _, _ = _solve_tree_qp(instance, tree, x_prev, qp_tol)
        total += float(stage.probs[j]) * value
    return total


def grid_min(objective, domain, resolution: float, vectorized: bool = False):
    """Exhaustive minimization on a regular grid over a 1-d interval or 2-d box.

    Accuracy is bounded by the objective's Lipschitz constant times the
    resolution. ``vectorized`` objectives are called once on an (N, d) array.
    """
    if resolution <= 0.0:
        raise InputError("resolution must be positive")
    lo, hi = np.atleast_1d(np.asarray(domain[0], float)), np.atleast_1d(np.asarray(domain[1], float))
    d = lo.shape[0]
    if d > 2:
        raise InputError("grid search supports dimension <= 2 only")
    axes = [np.arange(lo[i], hi[i] + resolution / 2.0, resolution) for i in range(d)]
    if d == 1:
        points = axes[0][:, None]
    else:
        g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
        points = np.column_stack([g0.ravel(), g1.ravel()])
    if vectorized:
        values = np.asarray(objective(points), dtype=float)
    else:
        values = np.fromiter((float(objective(p)) for p in points),
                             dtype=float, count=points.shape[0])
    i = int(np.argmin(values))
    return points[i].copy(), float(values[i])
