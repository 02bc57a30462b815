"""
Ideal designs for KL-based transport.

The ideal design is the extended Gibbs kernel

    pi_I(x, y) = exp(-c(x, y) / eps) * phi(x, y) / N

with ``N = sum exp(-c / eps) * phi``. Minimizing KL(pi || pi_I) over plans
with fixed marginals gives the same plan as minimizing
``<c, pi> + eps * KL(pi || phi)``. Everything is stored in log scale since
``exp(-c / eps)`` underflows for ``c / eps`` beyond roughly 745.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .densities import CostMatrix, DiscreteDensity, ReferenceDensity, as_cost
from .errors import DegenerateReference, EpsilonNotPositive


@dataclass(frozen=True)
class IdealDesign:
    """Normalized extended Gibbs kernel.

    Attributes
    ----------
    log_kernel : ndarray, shape (n, m)
        Log of the normalized kernel; ``-inf`` where the reference is zero.
    log_normalizer : float
        Log of the normalizing constant ``N``.
    epsilon : float
    phi : ReferenceDensity
    cost : CostMatrix
    phi_matrix : ndarray, shape (n, m)
        The reference resolved to a matrix.
    """

    log_kernel: np.ndarray
    log_normalizer: float
    epsilon: float
    phi: ReferenceDensity
    cost: CostMatrix
    phi_matrix: np.ndarray

    @property
    def shape(self):
        return self.log_kernel.shape

    @property
    def kernel(self) -> np.ndarray:
        return np.exp(self.log_kernel)

    @property
    def normalizer(self) -> float:
        return float(np.exp(self.log_normalizer))

    @property
    def support(self) -> np.ndarray:
        return np.isfinite(self.log_kernel)

    def transpose(self) -> "IdealDesign":
        return IdealDesign(self.log_kernel.T, self.log_normalizer, self.epsilon,
                           self.phi.transpose(), self.cost.T, self.phi_matrix.T)


def unnormalized_log_kernel(cost, epsilon: float, phi_matrix: np.ndarray) -> np.ndarray:
    """``-c / eps + log phi`` with ``-inf`` where ``phi == 0``."""
    c = as_cost(cost).entries
    with np.errstate(divide="ignore"):
        log_phi = np.log(phi_matrix)
    return -c / epsilon + log_phi


def build_ideal_design(cost, epsilon: float, phi: Optional[ReferenceDensity] = None,
                       mu: Optional[DiscreteDensity] = None,
                       nu: Optional[DiscreteDensity] = None) -> IdealDesign:
    """Build the extended Gibbs kernel for ``(cost, epsilon, phi)``.

    A ``"product"`` reference needs the marginals ``mu`` and ``nu``.
    """
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise EpsilonNotPositive(f"epsilon must be positive, got {epsilon!r}")
    cost = as_cost(cost)
    phi = phi if phi is not None else ReferenceDensity.uniform()
    phi_matrix = phi.resolve(cost.shape, mu, nu)
    if not np.any(phi_matrix > 0):
        raise DegenerateReference("reference is zero everywhere")
    log_k = unnormalized_log_kernel(cost, epsilon, phi_matrix)
    # scipy's logsumexp is max-shifted and skips -inf entries
    log_n = float(logsumexp(log_k))
    log_kernel = log_k - log_n
    log_kernel.setflags(write=False)
    phi_matrix.setflags(write=False)
    return IdealDesign(log_kernel, log_n, float(epsilon), phi, cost, phi_matrix)


def boltzmann_ideal(cost, epsilon: float) -> IdealDesign:
    """Ideal design with a uniform reference: ``exp(-c / eps) / N``."""
    return build_ideal_design(cost, epsilon, ReferenceDensity.uniform())
