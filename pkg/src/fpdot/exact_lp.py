"""
Exact (unregularized) discrete transport.

``solve_exact`` runs the transportation simplex: a north-west corner start,
MODI (u-v) dual potentials on the spanning-tree basis, and Bland's rule for
both the entering and the leaving cell so degenerate instances cannot cycle.

``brute_force_regularized`` is a deliberately naive oracle for the
regularized objective on 2x2 problems.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .densities import (
    CostMatrix,
    DiscreteDensity,
    ReferenceDensity,
    TransportPlan,
    as_cost,
)
from .divergence import regularized_objective
from .errors import DimensionMismatch, Infeasible, SizeGuardExceeded, UnsupportedSize

MAX_CELLS = 10**6
# basic flows at or below this are treated as zero (degenerate)
ZERO_FLOW = 1e-14


@dataclass(frozen=True)
class LpSolution:
    plan: TransportPlan
    optimal_cost: float
    basis_size: int
    degenerate: bool
    basis: Tuple[Tuple[int, int], ...] = ()
    row_duals: Optional[np.ndarray] = None
    col_duals: Optional[np.ndarray] = None
    pivots: int = 0

    def reduced_costs(self, cost) -> np.ndarray:
        c = as_cost(cost).entries
        return c - self.row_duals[:, None] - self.col_duals[None, :]


def _northwest_corner(a, b):
    n, m = a.size, b.size
    a, b = a.copy(), b.copy()
    x = np.zeros((n, m))
    basis = []
    i = j = 0
    while i < n and j < m:
        q = min(a[i], b[j])
        x[i, j] = q
        a[i] -= q
        b[j] -= q
        basis.append((i, j))
        # exactly one index advances per step, so the staircase has n + m - 1 cells
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif a[i] <= 0.0:
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(c, n, m, row_adj, col_adj):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    queue = deque([(0, True)])
    while queue:
        k, is_row = queue.popleft()
        if is_row:
            for j in row_adj[k]:
                if np.isnan(v[j]):
                    v[j] = c[k, j] - u[k]
                    queue.append((j, False))
        else:
            for i in col_adj[k]:
                if np.isnan(u[i]):
                    u[i] = c[i, k] - v[k]
                    queue.append((i, True))
    return u, v


def _tree_path(n, row_adj, col_adj, start_col, end_row):
    """Cells on the basis-tree path from column node ``start_col`` to row node ``end_row``."""
    # nodes: rows are 0..n-1, columns are n..n+m-1
    start, goal = n + start_col, end_row
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        if node < n:
            nbrs = (n + j for j in row_adj[node])
        else:
            nbrs = iter(col_adj[node - n])
        for nb in nbrs:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    cells = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        cells.append((node, prev - n) if node < n else (prev, node - n))
        node = prev
    cells.reverse()
    return cells


def solve_exact(mu: DiscreteDensity, nu: DiscreteDensity, cost, max_pivots: Optional[int] = None) -> LpSolution:
    """Optimal basic solution of the transportation LP.

    Parameters
    ----------
    mu, nu : DiscreteDensity
        Supplies and demands.
    cost : CostMatrix or array-like, shape (n, m)
    max_pivots : int, optional
        Safety cap on simplex pivots.

    Returns
    -------
    LpSolution
        Plan, optimal cost, the final basis and its dual potentials.
    """
    cost = as_cost(cost)
    n, m = cost.shape
    if (mu.size, nu.size) != (n, m):
        raise DimensionMismatch(f"cost shape {(n, m)} vs marginals {(mu.size, nu.size)}")
    if n * m > MAX_CELLS:
        raise SizeGuardExceeded(f"{n}x{m} exceeds the {MAX_CELLS}-cell limit")
    c = cost.entries
    tol = 1e-12 * max(1.0, float(c.max()))
    if max_pivots is None:
        max_pivots = 100 * n * m + 1000

    x, basis = _northwest_corner(mu.weights, nu.weights)
    is_basic = np.zeros((n, m), dtype=bool)
    row_adj = [set() for _ in range(n)]
    col_adj = [set() for _ in range(m)]
    for i, j in basis:
        is_basic[i, j] = True
        row_adj[i].add(j)
        col_adj[j].add(i)

    pivots = 0
    while True:
        u, v = _potentials(c, n, m, row_adj, col_adj)
        reduced = c - u[:, None] - v[None, :]
        reduced[is_basic] = 0.0
        # Bland: first improving cell in row-major order
        candidates = np.flatnonzero(reduced.ravel() < -tol)
        if candidates.size == 0:
            break
        if pivots >= max_pivots:
            raise RuntimeError(f"transportation simplex exceeded {max_pivots} pivots")
        ei, ej = divmod(int(candidates[0]), m)

        path = _tree_path(n, row_adj, col_adj, ej, ei)
        minus = path[0::2]
        plus = path[1::2]
        theta_min = min(x[cell] for cell in minus)
        # Bland: lowest-index cell among the (near-)tied minimum
        leave = min(cell for cell in minus if x[cell] <= theta_min + ZERO_FLOW)
        theta = x[leave]
        for cell in minus:
            x[cell] = max(x[cell] - theta, 0.0)
        for cell in plus:
            x[cell] += theta
        x[ei, ej] = theta
        x[leave] = 0.0

        li, lj = leave
        is_basic[li, lj] = False
        row_adj[li].discard(lj)
        col_adj[lj].discard(li)
        is_basic[ei, ej] = True
        row_adj[ei].add(ej)
        col_adj[ej].add(ei)
        pivots += 1

    x = np.clip(x, 0.0, None)
    x[~is_basic] = 0.0
    plan = TransportPlan.from_entries(x, mu, nu)
    cells = tuple(sorted(zip(*np.nonzero(is_basic))))
    cells = tuple((int(i), int(j)) for i, j in cells)
    degenerate = bool(np.any(x[is_basic] <= ZERO_FLOW))
    return LpSolution(
        plan=plan,
        optimal_cost=float(np.sum(c * plan.entries)),
        basis_size=len(cells),
        degenerate=degenerate,
        basis=cells,
        row_duals=u,
        col_duals=v,
        pivots=pivots,
    )


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def brute_force_regularized(mu: DiscreteDensity, nu: DiscreteDensity, cost, epsilon: float,
                            phi: Optional[ReferenceDensity] = None,
                            grid_resolution: int = 2000) -> TransportPlan:
    """Minimize the regularized objective on a 2x2 problem by direct search.

    A 2x2 plan with fixed marginals is determined by its top-left entry
    ``t``. The objective is scanned on a uniform grid over the feasible
    interval of ``t`` and the best grid point is refined by golden-section
    search on its two neighbouring grid intervals.
    """
    cost = as_cost(cost)
    if cost.shape != (2, 2) or (mu.size, nu.size) != (2, 2):
        raise UnsupportedSize(f"brute force supports 2x2 only, got {cost.shape}")
    if grid_resolution < 1000:
        raise ValueError("grid_resolution must be at least 1000")
    phi = phi if phi is not None else ReferenceDensity.uniform()
    phi_matrix = phi.resolve((2, 2), mu, nu)
    m1, n1 = mu.weights[0], nu.weights[0]
    lo, hi = max(0.0, m1 + n1 - 1.0), min(m1, n1)

    def plan_at(t):
        return np.array([[t, m1 - t], [n1 - t, 1.0 - m1 - n1 + t]]).clip(0.0, None)

    def objective(t):
        try:
            return regularized_objective(plan_at(t), cost, epsilon, phi_matrix).total
        except Infeasible:
            return np.inf

    if hi - lo <= 0.0:
        return TransportPlan.from_entries(plan_at(lo), mu, nu)

    grid = np.linspace(lo, hi, grid_resolution + 1)
    values = np.array([objective(t) for t in grid])
    k = int(np.argmin(values))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid_resolution)]
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = objective(x1), objective(x2)
    while b - a > 1e-13:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = objective(x2)
    best = min([(values[k], grid[k]), (f1, x1), (f2, x2)])[1]
    return TransportPlan.from_entries(plan_at(best), mu, nu)
