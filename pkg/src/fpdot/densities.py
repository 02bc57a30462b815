"""
Discrete densities, cost matrices and transport plans.

Everything here lives on finite supports with the counting measure, so a
density is a nonnegative weight vector summing to one and a transport plan
is a nonnegative ``n x m`` matrix whose row and column sums are the source
and target marginals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DegenerateReference,
    DimensionMismatch,
    InvalidCost,
    NegativeWeight,
    NotADensity,
    NotNormalizable,
    NotNormalized,
)

# |sum - 1| below this is treated as rounding and silently renormalized
RENORMALIZE_BAND = 1e-6
DENSITY_TOL = 1e-9
PLAN_MASS_TOL = 1e-8

REFERENCE_KINDS = ("uniform", "product", "matrix")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteDensity:
    """Probability mass function on ``n`` support points.

    Parameters
    ----------
    weights : array-like, shape (n,)
        Nonnegative masses summing to one (within 1e-9).
    labels : sequence of str, optional
        Opaque identifiers of the support points.
    """

    weights: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise DimensionMismatch(f"weights must be a non-empty vector, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise NotADensity("weights must be finite")
        if np.any(w < 0):
            raise NegativeWeight(f"negative weight at index {int(np.argmax(w < 0))}")
        if abs(w.sum() - 1.0) > DENSITY_TOL:
            raise NotNormalized(f"weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "weights", _frozen(w))
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != w.size:
                raise DimensionMismatch(f"{len(labels)} labels for {w.size} weights")
            object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.weights.size

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def support(self) -> np.ndarray:
        """Boolean mask of strictly positive masses."""
        return self.weights > 0


def make_density(weights: Sequence[float], labels: Optional[Sequence[str]] = None) -> DiscreteDensity:
    """Build a density, renormalizing inputs that are off by rounding only.

    Inputs whose total differs from one by at most ``1e-6`` are rescaled;
    anything further off raises :class:`NotNormalized` so that the caller
    normalizes explicitly.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1:
        raise DimensionMismatch(f"weights must be a non-empty vector, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NotADensity("weights must be finite")
    if np.any(w < 0):
        raise NegativeWeight(f"negative weight at index {int(np.argmax(w < 0))}")
    total = w.sum()
    if total <= 0:
        raise NotNormalizable("weights sum to zero")
    if abs(total - 1.0) > RENORMALIZE_BAND:
        raise NotNormalized(f"weights sum to {total!r}; normalize before calling")
    # already normalized up to rounding: keep as-is so the call is idempotent
    if abs(total - 1.0) > DENSITY_TOL:
        w = w / total
    return DiscreteDensity(w, labels)


def uniform_density(n: int) -> DiscreteDensity:
    return DiscreteDensity(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class CostMatrix:
    """Dense nonnegative finite transport costs, shape ``(n, m)``."""

    entries: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.entries, dtype=np.float64)
        if c.ndim != 2 or c.size == 0:
            raise DimensionMismatch(f"cost must be a non-empty matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidCost("cost entries must be finite")
        if np.any(c < 0):
            i, j = np.argwhere(c < 0)[0]
            raise InvalidCost(f"negative cost at ({i}, {j})")
        object.__setattr__(self, "entries", _frozen(c))

    @property
    def shape(self) -> tuple:
        return self.entries.shape

    @property
    def T(self) -> "CostMatrix":
        return CostMatrix(self.entries.T)


def as_cost(cost) -> CostMatrix:
    return cost if isinstance(cost, CostMatrix) else CostMatrix(cost)


@dataclass(frozen=True)
class TransportPlan:
    """Joint mass function on the product support.

    ``row_marginal_error`` and ``col_marginal_error`` are L1 distances of
    the row/column sums to the marginals the plan was built against; they
    are zero when no marginals were supplied.
    """

    entries: np.ndarray
    row_marginal_error: float = 0.0
    col_marginal_error: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.entries, dtype=np.float64)
        if p.ndim != 2 or p.size == 0:
            raise DimensionMismatch(f"plan must be a non-empty matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise NotADensity("plan entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PLAN_MASS_TOL:
            raise NotADensity(f"plan mass is {p.sum()!r}, expected 1")
        object.__setattr__(self, "entries", _frozen(p))

    @classmethod
    def from_entries(cls, entries, mu: Optional[DiscreteDensity] = None,
                     nu: Optional[DiscreteDensity] = None) -> "TransportPlan":
        p = np.asarray(entries, dtype=np.float64)
        row_err = col_err = 0.0
        if mu is not None:
            if p.shape[0] != mu.size:
                raise DimensionMismatch(f"plan has {p.shape[0]} rows, mu has {mu.size} points")
            row_err = float(np.abs(p.sum(axis=1) - mu.weights).sum())
        if nu is not None:
            if p.shape[1] != nu.size:
                raise DimensionMismatch(f"plan has {p.shape[1]} columns, nu has {nu.size} points")
            col_err = float(np.abs(p.sum(axis=0) - nu.weights).sum())
        return cls(p, row_err, col_err)

    @property
    def shape(self) -> tuple:
        return self.entries.shape

    @property
    def T(self) -> "TransportPlan":
        return TransportPlan(self.entries.T, self.col_marginal_error, self.row_marginal_error)


def as_plan(plan) -> TransportPlan:
    return plan if isinstance(plan, TransportPlan) else TransportPlan(plan)


@dataclass(frozen=True)
class ReferenceDensity:
    """Reference measure on the product support.

    ``kind`` is ``"uniform"``, ``"product"`` (``mu_i * nu_j``, resolved
    against the problem's marginals) or ``"matrix"`` (explicit joint
    density given in ``matrix``).
    """

    kind: str = "uniform"
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in REFERENCE_KINDS:
            raise ValueError(f"unknown reference kind {self.kind!r}; expected one of {REFERENCE_KINDS}")
        if self.kind == "matrix":
            if self.matrix is None:
                raise DegenerateReference("explicit reference requires a matrix")
            phi = np.asarray(self.matrix, dtype=np.float64)
            if phi.ndim != 2:
                raise DimensionMismatch(f"reference matrix must be 2-d, got shape {phi.shape}")
            if not np.all(np.isfinite(phi)) or np.any(phi < 0):
                raise NegativeWeight("reference matrix entries must be finite and nonnegative")
            if not np.any(phi > 0):
                raise DegenerateReference("reference matrix is zero everywhere")
            if abs(phi.sum() - 1.0) > DENSITY_TOL:
                raise NotNormalized(f"reference matrix sums to {phi.sum()!r}, expected 1")
            object.__setattr__(self, "matrix", _frozen(phi))
        elif self.matrix is not None:
            raise ValueError(f"reference kind {self.kind!r} does not take a matrix")

    @classmethod
    def uniform(cls) -> "ReferenceDensity":
        return cls("uniform")

    @classmethod
    def product(cls) -> "ReferenceDensity":
        return cls("product")

    @classmethod
    def explicit(cls, matrix) -> "ReferenceDensity":
        return cls("matrix", matrix)

    def resolve(self, shape, mu: Optional[DiscreteDensity] = None,
                nu: Optional[DiscreteDensity] = None) -> np.ndarray:
        """Return the reference as an ``n x m`` array."""
        n, m = shape
        if self.kind == "uniform":
            return np.full((n, m), 1.0 / (n * m))
        if self.kind == "product":
            if mu is None or nu is None:
                raise ValueError("product reference needs the marginals mu and nu")
            if (mu.size, nu.size) != (n, m):
                raise DimensionMismatch(f"marginals {(mu.size, nu.size)} do not match shape {(n, m)}")
            return np.outer(mu.weights, nu.weights)
        if self.matrix.shape != (n, m):
            raise DimensionMismatch(f"reference matrix shape {self.matrix.shape} != {(n, m)}")
        return np.array(self.matrix)

    def transpose(self) -> "ReferenceDensity":
        if self.kind == "matrix":
            return ReferenceDensity.explicit(self.matrix.T)
        return self


def product_plan(mu: DiscreteDensity, nu: DiscreteDensity) -> TransportPlan:
    return TransportPlan.from_entries(np.outer(mu.weights, nu.weights), mu, nu)


def plan_marginals(plan) -> tuple:
    """Row sums and column sums of a plan."""
    p = as_plan(plan).entries
    return p.sum(axis=1), p.sum(axis=0)


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    row_error: float
    col_error: float

    def __bool__(self):
        return self.member


def validate_membership(plan, mu: DiscreteDensity, nu: DiscreteDensity, tol: float) -> MembershipReport:
    """Check whether ``plan`` has marginals ``mu`` and ``nu`` up to ``tol`` in L1."""
    p = as_plan(plan)
    if p.shape != (mu.size, nu.size):
        raise DimensionMismatch(f"plan shape {p.shape} vs marginals {(mu.size, nu.size)}")
    rows, cols = plan_marginals(p)
    row_err = float(np.abs(rows - mu.weights).sum())
    col_err = float(np.abs(cols - nu.weights).sum())
    return MembershipReport(row_err <= tol and col_err <= tol, row_err, col_err)
