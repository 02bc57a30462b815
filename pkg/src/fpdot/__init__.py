"""Discrete optimal transport as KL projection onto an extended Gibbs kernel."""

from .densities import (
    CostMatrix,
    DiscreteDensity,
    MembershipReport,
    ReferenceDensity,
    TransportPlan,
    make_density,
    plan_marginals,
    product_plan,
    uniform_density,
    validate_membership,
)
from .divergence import KL_INFINITY, KlResult, kl_divergence, kl_divergence_log, regularized_objective
from .errors import *  # noqa: F401,F403
from .exact_lp import LpSolution, brute_force_regularized, solve_exact
from .fpd_constraints import (
    ConstrainedSolveReport,
    MomentConstraint,
    min_moment_value,
    solve_with_moment,
)
from .ideal_design import IdealDesign, boltzmann_ideal, build_ideal_design
from .sinkhorn import SolveReport, SolverConfig, epsilon_sweep, solve, solve_two_routes

__version__ = "0.1.0"
