"""
KL projection onto transport plans with an extra moment bound.

The feasible set is ``{pi in Pi(mu, nu) : sum(chi * pi) <= eta}``. The
projection of the ideal design onto it is computed with Dykstra's
algorithm over three KL-projection blocks: row marginals, column marginals
and the half-space. Marginal blocks are affine, so their Dykstra
corrections cancel and they reduce to plain scaling. The half-space block
keeps its correction, which in log scale is just ``lambda * chi`` for the
current multiplier ``lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .densities import DiscreteDensity, TransportPlan
from .divergence import Objective, regularized_objective
from .errors import DimensionMismatch, EmptyFeasibleSet
from .exact_lp import solve_exact
from .ideal_design import IdealDesign
from .sinkhorn import SolverConfig, check_support, scale_kernel

BISECTION_STEPS = 100


@dataclass(frozen=True)
class MomentConstraint:
    """Inequality ``sum(chi * pi) <= eta`` with ``chi >= 0`` and ``eta >= 0``."""

    chi: np.ndarray
    eta: float

    def __post_init__(self):
        chi = np.array(self.chi, dtype=np.float64)
        if chi.ndim != 2:
            raise DimensionMismatch(f"chi must be a matrix, got shape {chi.shape}")
        if not np.all(np.isfinite(chi)) or np.any(chi < 0):
            raise ValueError("chi entries must be finite and nonnegative")
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"eta must be finite and nonnegative, got {self.eta!r}")
        chi.setflags(write=False)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "eta", float(self.eta))


@dataclass(frozen=True)
class ConstrainedSolveReport:
    plan: TransportPlan
    moment_value: float
    constraint_active: bool
    dykstra_iterations: int
    converged: bool
    multiplier: float
    final_residual: float
    objective: Objective


def min_moment_value(mu: DiscreteDensity, nu: DiscreteDensity, chi) -> float:
    """Smallest ``sum(chi * pi)`` over all plans with marginals ``mu``, ``nu``."""
    return solve_exact(mu, nu, chi).optimal_cost


def _lse_rows(x):
    top = x.max(axis=1, keepdims=True)
    return (top + np.log(np.exp(x - top).sum(axis=1, keepdims=True)))[:, 0]


def _halfspace_multiplier(z, chi, log_eta):
    """Smallest ``lam >= 0`` with ``sum(chi * exp(z - lam * chi)) <= eta``.

    The log-moment is convex and decreasing in ``lam``; the root is
    bracketed by doubling and then located by bisection, with Newton steps
    taken whenever they land inside the bracket.
    """
    pos = (chi > 0) & np.isfinite(z)
    if not np.any(pos):
        return 0.0
    zc, c = z[pos] + np.log(chi[pos]), chi[pos]

    def f(lam):
        t = zc - lam * c
        top = t.max()
        w = np.exp(t - top)
        total = w.sum()
        # value and derivative of log-moment minus log(eta)
        return top + np.log(total) - log_eta, -np.dot(w, c) / total

    val, slope = f(0.0)
    if val <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while f(hi)[0] > 0.0:
        lo, hi = hi, 2.0 * hi
    lam = lo
    for _ in range(BISECTION_STEPS):
        step = lam - val / slope if slope < 0 else np.nan
        lam = step if lo < step < hi else 0.5 * (lo + hi)
        val, slope = f(lam)
        if val > 0.0:
            lo = lam
        else:
            hi = lam
        if abs(val) <= 1e-15 or hi - lo <= 4e-16 * hi:
            break
    return lam if abs(val) <= 1e-15 else hi


def _finish(plan_entries, mu, nu, ideal, constraint, active, iterations, converged, lam, residual):
    plan = TransportPlan.from_entries(plan_entries, mu, nu)
    objective = regularized_objective(plan, ideal.cost, ideal.epsilon, ideal.phi_matrix)
    moment = float(np.sum(constraint.chi * plan.entries))
    return ConstrainedSolveReport(plan, moment, active, iterations, converged, lam,
                                  residual, objective)


def _face_support(mu, nu, chi, lp):
    """Cells that carry mass in some plan of minimal moment.

    Zero reduced cost (for any optimal dual) is necessary but, under
    degeneracy, not sufficient; ambiguous cells are settled by maximizing
    their mass over the optimal face.
    """
    n, m = chi.shape
    scale = max(1.0, float(chi.max()))
    face = lp.reduced_costs(chi) <= 1e-10 * scale
    support = lp.plan.entries > 0
    A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
    rhs = np.concatenate([mu.weights, nu.weights])
    bounds = [(0.0, None) if f else (0.0, 0.0) for f in face.ravel()]
    for i, j in zip(*np.nonzero(face & ~support)):
        objective = np.zeros(n * m)
        objective[i * m + j] = -1.0
        res = linprog(objective, A_eq=A, b_eq=rhs, bounds=bounds, method="highs")
        if res.status == 0 and -res.fun > 1e-12:
            support[i, j] = True
    return support


def _solve_pinched(mu, nu, ideal, constraint, config, lp):
    # At eta == min moment the feasible set is the LP optimal face.
    support = _face_support(mu, nu, constraint.chi, lp)
    log_k = np.where(support, ideal.log_kernel, -np.inf)
    active = bool(np.any(~support & ideal.support & mu.support[:, None] & nu.support[None, :]))
    scaled = scale_kernel(mu, nu, log_k, config.tolerance, config.max_iterations,
                          config.check_interval)
    return _finish(scaled.plan, mu, nu, ideal, constraint, active, scaled.iterations,
                   scaled.converged, np.inf if active else 0.0, scaled.residual)


def solve_with_moment(mu: DiscreteDensity, nu: DiscreteDensity, ideal: IdealDesign,
                      constraint: MomentConstraint, config: SolverConfig) -> ConstrainedSolveReport:
    """KL projection of ``ideal`` onto marginal-feasible plans obeying the moment bound.

    Raises
    ------
    EmptyFeasibleSet
        If even the LP minimum of ``sum(chi * pi)`` over ``Pi(mu, nu)``
        exceeds ``eta``.
    InfeasibleSupport
        As for :func:`fpdot.sinkhorn.solve`.
    """
    if constraint.chi.shape != ideal.shape:
        raise DimensionMismatch(f"chi shape {constraint.chi.shape} vs kernel shape {ideal.shape}")
    check_support(mu, nu, ideal.log_kernel)
    chi, eta = constraint.chi, constraint.eta

    lp = solve_exact(mu, nu, chi)
    scale = max(1.0, float(chi.max()))
    if lp.optimal_cost > eta + 1e-12 * scale:
        raise EmptyFeasibleSet(
            f"minimum achievable moment {lp.optimal_cost!r} exceeds eta = {eta!r}")
    if eta <= lp.optimal_cost + 1e-12 * scale:
        return _solve_pinched(mu, nu, ideal, constraint, config, lp)

    n, m = ideal.shape
    rows, cols = mu.support, nu.support
    idx = np.ix_(rows, cols)
    a, b = mu.weights[rows], nu.weights[cols]
    log_a, log_b = np.log(a), np.log(b)
    chi_s = chi[idx]
    log_eta = np.log(eta)

    log_pi = ideal.log_kernel[idx].copy()
    lam = 0.0
    converged = False
    residual = np.inf
    it = 0
    for it in range(1, config.max_iterations + 1):
        z = log_pi + lam * chi_s
        lam = _halfspace_multiplier(z, chi_s, log_eta)
        log_pi = z - lam * chi_s

        log_pi = log_pi + (log_a - _lse_rows(log_pi))[:, None]
        log_pi = log_pi + (log_b - _lse_rows(log_pi.T))[None, :]

        if (it - 1) % config.check_interval == 0 or it == config.max_iterations:
            pi = np.exp(log_pi)
            row_res = float(np.abs(pi.sum(axis=1) - a).sum())
            moment = float(np.sum(chi_s * pi))
            slack_res = abs(moment - eta) if lam > 0 else max(0.0, moment - eta)
            residual = max(row_res, slack_res)
            if residual <= config.tolerance:
                converged = True
                break

    pi = np.exp(log_pi)
    plan = np.zeros((n, m))
    plan[idx] = pi / pi.sum()
    return _finish(plan, mu, nu, ideal, constraint, lam > 0, it, converged, lam, residual)
