"""Kullback-Leibler divergence between discrete joint densities."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .densities import (
    CostMatrix,
    DiscreteDensity,
    ReferenceDensity,
    as_cost,
    as_plan,
)
from .errors import DimensionMismatch, Infeasible, NotADensity

MASS_TOL = 1e-8


class _Infinity:
    """Marker for an infinite divergence.

    Compares greater than every real number but refuses arithmetic, so an
    absolute-continuity violation cannot silently propagate through sums.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "KL_INFINITY"

    def __float__(self):
        return float("inf")

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("KL_INFINITY")

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self


KL_INFINITY = _Infinity()


@dataclass(frozen=True)
class KlResult:
    value: Union[float, _Infinity]
    absolutely_continuous: bool

    @property
    def is_finite(self) -> bool:
        return self.absolutely_continuous


def _check_mass(name, a):
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise NotADensity(f"{name} must be finite and nonnegative")
    if abs(a.sum() - 1.0) > MASS_TOL:
        raise NotADensity(f"{name} has mass {a.sum()!r}, expected 1")


def _kl_terms(p, log_q):
    pos = p > 0
    if np.any(np.isneginf(log_q[pos])):
        return None
    terms = p[pos] * (np.log(p[pos]) - log_q[pos])
    return float(terms.sum())


def kl_divergence(p, q) -> KlResult:
    """KL(p || q) in nats, with ``0 log(0/q) = 0``.

    Returns :data:`KL_INFINITY` when ``p`` puts mass where ``q`` has none.
    """
    p = np.asarray(getattr(p, "entries", p), dtype=np.float64)
    q = np.asarray(getattr(q, "entries", q), dtype=np.float64)
    if p.shape != q.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {q.shape}")
    _check_mass("p", p)
    _check_mass("q", q)
    with np.errstate(divide="ignore"):
        log_q = np.log(q)
    value = _kl_terms(p, log_q)
    if value is None:
        return KlResult(KL_INFINITY, False)
    # rounding can push a zero divergence slightly negative
    return KlResult(max(value, 0.0), True)


def kl_divergence_log(p, log_q) -> KlResult:
    """KL(p || q) with ``q`` given by its logarithm (``-inf`` off-support).

    Used for Gibbs kernels whose entries underflow in linear scale.
    """
    p = np.asarray(getattr(p, "entries", p), dtype=np.float64)
    log_q = np.asarray(log_q, dtype=np.float64)
    if p.shape != log_q.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape} vs {log_q.shape}")
    _check_mass("p", p)
    value = _kl_terms(p, log_q)
    if value is None:
        return KlResult(KL_INFINITY, False)
    return KlResult(max(value, 0.0), True)


class Objective(NamedTuple):
    transport_cost: float
    kl_term: float
    total: float


def regularized_objective(plan, cost, epsilon: float, phi,
                          mu: Optional[DiscreteDensity] = None,
                          nu: Optional[DiscreteDensity] = None) -> Objective:
    """Transport cost plus ``epsilon`` times KL(plan || phi).

    ``phi`` is a :class:`ReferenceDensity` or an explicit matrix. A product
    reference is resolved against ``mu`` and ``nu``, defaulting to the
    plan's own marginals.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    plan = as_plan(plan)
    cost: CostMatrix = as_cost(cost)
    if plan.shape != cost.shape:
        raise DimensionMismatch(f"plan shape {plan.shape} vs cost shape {cost.shape}")
    if isinstance(phi, ReferenceDensity):
        if phi.kind == "product" and (mu is None or nu is None):
            rows, cols = plan.entries.sum(axis=1), plan.entries.sum(axis=0)
            mu = mu or DiscreteDensity(rows / rows.sum())
            nu = nu or DiscreteDensity(cols / cols.sum())
        phi_matrix = phi.resolve(plan.shape, mu, nu)
    else:
        phi_matrix = np.asarray(phi, dtype=np.float64)
    kl = kl_divergence(plan.entries, phi_matrix)
    if not kl.absolutely_continuous:
        raise Infeasible("plan is not absolutely continuous w.r.t. the reference")
    transport = float(np.sum(cost.entries * plan.entries))
    return Objective(transport, kl.value, transport + epsilon * kl.value)
