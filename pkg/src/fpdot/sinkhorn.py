"""
Log-domain Sinkhorn scaling of an ideal-design kernel.

The regularized plan has the form ``pi_ij = u_i K_ij v_j``; the scaling
vectors are found by alternately matching row and column marginals. All
updates are done on ``log u``, ``log v`` and ``log K`` so that small
regularization values do not underflow.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .densities import (
    DiscreteDensity,
    ReferenceDensity,
    TransportPlan,
    as_cost,
)
from .divergence import Objective, regularized_objective
from .errors import DimensionMismatch, InfeasibleSupport
from .ideal_design import IdealDesign, build_ideal_design, unnormalized_log_kernel


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float
    max_iterations: int = 10000
    tolerance: float = 1e-9
    check_interval: int = 10

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.check_interval < 1:
            raise ValueError("check_interval must be >= 1")

    def with_epsilon(self, epsilon: float) -> "SolverConfig":
        return dataclasses.replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class SolveReport:
    """Result of a scaling run.

    ``log_u`` and ``log_v`` are ``-inf`` on zero-mass support points.
    ``objective`` is ``(transport_cost, kl_term, total)`` with the KL term
    taken against the reference density, not the ideal design.
    """

    plan: TransportPlan
    log_u: np.ndarray
    log_v: np.ndarray
    iterations: int
    converged: bool
    final_residual: float
    objective: Objective


class ScalingResult(NamedTuple):
    plan: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray
    iterations: int
    converged: bool
    residual: float


def check_support(mu: DiscreteDensity, nu: DiscreteDensity, log_kernel: np.ndarray) -> None:
    """Raise InfeasibleSupport if a positive-mass row or column has no finite kernel entry."""
    if log_kernel.shape != (mu.size, nu.size):
        raise DimensionMismatch(f"kernel shape {log_kernel.shape} vs marginals {(mu.size, nu.size)}")
    rows, cols = mu.support, nu.support
    admissible = np.isfinite(log_kernel) & rows[:, None] & cols[None, :]
    bad_rows = np.flatnonzero(rows & ~admissible.any(axis=1))
    if bad_rows.size:
        raise InfeasibleSupport(f"row {bad_rows[0]} has mass but no admissible kernel entry")
    bad_cols = np.flatnonzero(cols & ~admissible.any(axis=0))
    if bad_cols.size:
        raise InfeasibleSupport(f"column {bad_cols[0]} has mass but no admissible kernel entry")


def scale_kernel(mu: DiscreteDensity, nu: DiscreteDensity, log_kernel: np.ndarray,
                 tolerance: float = 1e-9, max_iterations: int = 10000,
                 check_interval: int = 10,
                 init_log_v: Optional[np.ndarray] = None) -> ScalingResult:
    """Alternate row/column log-scaling of ``log_kernel`` to marginals ``mu``, ``nu``.

    The kernel need not be normalized. Convergence is tested every
    ``check_interval`` iterations (and on the first) as the L1 error of the
    column sums right after a row update, when row sums are exact.
    """
    log_kernel = np.asarray(log_kernel, dtype=np.float64)
    check_support(mu, nu, log_kernel)
    n, m = log_kernel.shape
    rows, cols = mu.support, nu.support
    log_k = log_kernel[np.ix_(rows, cols)]
    a, b = mu.weights[rows], nu.weights[cols]
    log_a, log_b = np.log(a), np.log(b)

    if init_log_v is None:
        log_v = np.zeros(b.size)
    else:
        log_v = np.asarray(init_log_v, dtype=np.float64)[cols].copy()
        log_v[~np.isfinite(log_v)] = 0.0

    converged = False
    residual = np.inf
    it = 0
    for it in range(1, max_iterations + 1):
        log_u = log_a - logsumexp(log_k + log_v[None, :], axis=1)
        log_col = logsumexp(log_k + log_u[:, None], axis=0)
        if (it - 1) % check_interval == 0 or it == max_iterations:
            residual = float(np.abs(np.exp(log_col + log_v) - b).sum())
            if residual <= tolerance:
                converged = True
                break
        log_v = log_b - log_col

    log_plan = log_u[:, None] + log_k + log_v[None, :]
    shift = float(logsumexp(log_plan))
    log_u = log_u - shift
    sub = np.exp(log_plan - shift)
    if not converged:
        residual = float(np.abs(sub.sum(axis=1) - a).sum() + np.abs(sub.sum(axis=0) - b).sum())

    plan = np.zeros((n, m))
    plan[np.ix_(rows, cols)] = sub
    full_u = np.full(n, -np.inf)
    full_u[rows] = log_u
    full_v = np.full(m, -np.inf)
    full_v[cols] = log_v
    return ScalingResult(plan, full_u, full_v, it, converged, residual)


def _report(scaled: ScalingResult, mu, nu, ideal: IdealDesign) -> SolveReport:
    plan = TransportPlan.from_entries(scaled.plan, mu, nu)
    objective = regularized_objective(plan, ideal.cost, ideal.epsilon, ideal.phi_matrix)
    return SolveReport(plan, scaled.log_u, scaled.log_v, scaled.iterations,
                       scaled.converged, scaled.residual, objective)


def solve(mu: DiscreteDensity, nu: DiscreteDensity, ideal: IdealDesign,
          config: SolverConfig, init_log_v: Optional[np.ndarray] = None) -> SolveReport:
    """Minimize KL(pi || ideal) over plans with marginals ``mu`` and ``nu``.

    Parameters
    ----------
    mu, nu : DiscreteDensity
        Source and target marginals.
    ideal : IdealDesign
        Kernel to scale. Its ``epsilon`` is used for the reported objective.
    config : SolverConfig
        Iteration limits and tolerance.
    init_log_v : ndarray, shape (m,), optional
        Starting column potentials (zero by default).

    Returns
    -------
    SolveReport
        Non-convergence is reported through ``converged = False``.
    """
    scaled = scale_kernel(mu, nu, ideal.log_kernel, config.tolerance,
                          config.max_iterations, config.check_interval, init_log_v)
    return _report(scaled, mu, nu, ideal)


class TwoRouteResult(NamedTuple):
    normalized: SolveReport
    unnormalized: SolveReport
    max_plan_difference: float


def solve_two_routes(mu: DiscreteDensity, nu: DiscreteDensity, cost, epsilon: float,
                     phi: Optional[ReferenceDensity], config: SolverConfig) -> TwoRouteResult:
    """Solve the same problem by scaling the normalized and the raw Gibbs kernel.

    The first route minimizes KL to the normalized ideal design; the second
    scales ``exp(-c / eps) * phi`` directly, which is the classical
    regularized-transport iteration. Both should return the same plan.
    """
    ideal = build_ideal_design(cost, epsilon, phi, mu, nu)
    route_a = solve(mu, nu, ideal, config)
    raw = unnormalized_log_kernel(as_cost(cost), epsilon, ideal.phi_matrix)
    scaled = scale_kernel(mu, nu, raw, config.tolerance, config.max_iterations,
                          config.check_interval)
    route_b = _report(scaled, mu, nu, ideal)
    diff = float(np.max(np.abs(route_a.plan.entries - route_b.plan.entries)))
    return TwoRouteResult(route_a, route_b, diff)


def epsilon_sweep(mu: DiscreteDensity, nu: DiscreteDensity, cost,
                  phi: Optional[ReferenceDensity], epsilons: Sequence[float],
                  config: SolverConfig) -> List[Tuple[float, SolveReport]]:
    """Solve for each epsilon in order, warm-starting from the previous potentials.

    Column potentials are carried over as ``log_v * eps_prev / eps_next``,
    i.e. the dual potential ``eps * log_v`` is kept fixed.
    """
    out = []
    log_v = None
    prev = None
    for eps in epsilons:
        ideal = build_ideal_design(cost, eps, phi, mu, nu)
        init = None if log_v is None else log_v * (prev / eps)
        report = solve(mu, nu, ideal, config.with_epsilon(eps), init)
        out.append((eps, report))
        log_v, prev = report.log_v, eps
    return out
