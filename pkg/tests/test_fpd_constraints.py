import numpy as np
import pytest

from conftest import random_problem
from fpdot.densities import make_density
from fpdot.divergence import kl_divergence_log
from fpdot.errors import DimensionMismatch, EmptyFeasibleSet
from fpdot.exact_lp import solve_exact
from fpdot.fpd_constraints import MomentConstraint, min_moment_value, solve_with_moment
from fpdot.ideal_design import build_ideal_design
from fpdot.sinkhorn import SolverConfig, solve

HALF = make_density([0.5, 0.5])
SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])
EPS = 0.5


def _setup(rng, n=4):
    mu, nu, c = random_problem(rng, n)
    ideal = build_ideal_design(c, EPS)
    cfg = SolverConfig(EPS, max_iterations=50000)
    free = solve(mu, nu, ideal, cfg)
    return mu, nu, c, ideal, cfg, free


def test_min_moment_values():
    assert min_moment_value(HALF, HALF, np.zeros((2, 2))) == 0.0
    assert min_moment_value(HALF, HALF, np.ones((2, 2))) == pytest.approx(1.0, abs=1e-15)
    assert min_moment_value(HALF, HALF, SWAP) == 0.0


def test_slack_constraint_changes_nothing(rng):
    mu, nu, c, ideal, cfg, free = _setup(rng)
    rep = solve_with_moment(mu, nu, ideal, MomentConstraint(c, c.max()), cfg)
    assert rep.converged and not rep.constraint_active
    assert rep.multiplier == 0.0
    assert np.max(np.abs(rep.plan.entries - free.plan.entries)) <= 1e-8


def test_active_constraint_is_tight(rng):
    mu, nu, c, ideal, cfg, free = _setup(rng)
    lo = min_moment_value(mu, nu, c)
    eta = lo + 0.5 * (free.objective.transport_cost - lo)
    rep = solve_with_moment(mu, nu, ideal, MomentConstraint(c, eta), cfg)
    assert rep.converged and rep.constraint_active and rep.multiplier > 0
    assert abs(rep.moment_value - eta) <= 1e-6
    assert rep.plan.row_marginal_error <= cfg.tolerance
    assert rep.plan.col_marginal_error <= cfg.tolerance


def test_bound_at_lp_optimum(rng):
    mu, nu, c, ideal, cfg, _ = _setup(rng)
    eta = solve_exact(mu, nu, c).optimal_cost
    rep = solve_with_moment(mu, nu, ideal, MomentConstraint(c, eta), cfg)
    assert rep.converged and rep.constraint_active
    assert rep.objective.transport_cost <= eta + 1e-8


def test_zero_bound_with_zero_minimum():
    ideal = build_ideal_design(np.full((2, 2), 0.3), 1.0)
    rep = solve_with_moment(HALF, HALF, ideal, MomentConstraint(SWAP, 0.0), SolverConfig(1.0))
    np.testing.assert_allclose(rep.plan.entries, [[0.5, 0.0], [0.0, 0.5]], atol=1e-12)
    assert rep.moment_value == 0.0


def test_bound_below_lp_optimum(rng):
    mu, nu, c, ideal, cfg, _ = _setup(rng)
    eta = solve_exact(mu, nu, c).optimal_cost - 1e-6
    with pytest.raises(EmptyFeasibleSet):
        solve_with_moment(mu, nu, ideal, MomentConstraint(c, eta), cfg)


def test_constraint_validation():
    with pytest.raises(ValueError):
        MomentConstraint([[-1.0, 0.0]], 1.0)
    with pytest.raises(ValueError):
        MomentConstraint([[1.0, 0.0]], -0.1)
    ideal = build_ideal_design(SWAP, 1.0)
    with pytest.raises(DimensionMismatch):
        solve_with_moment(HALF, HALF, ideal, MomentConstraint(np.ones((3, 2)), 1.0), SolverConfig(1.0))


def test_projection_beats_feasible_mixtures(rng):
    mu, nu, c, ideal, cfg, free = _setup(rng)
    lo = min_moment_value(mu, nu, c)
    eta = lo + 0.4 * (free.objective.transport_cost - lo)
    rep = solve_with_moment(mu, nu, ideal, MomentConstraint(c, eta), cfg)
    best = kl_divergence_log(rep.plan.entries, ideal.log_kernel).value
    # feasible vertices: LP optima of slightly perturbed moment functions
    vertices = []
    for _ in range(40):
        v = solve_exact(mu, nu, c + 0.05 * rng.random(c.shape)).plan.entries
        if np.sum(c * v) <= eta:
            vertices.append(v)
    assert vertices
    for _ in range(100):
        v = vertices[rng.integers(len(vertices))]
        t = rng.random()
        mix = (1 - t) * rep.plan.entries + t * v
        assert np.sum(c * mix) <= eta + 1e-9
        assert kl_divergence_log(mix, ideal.log_kernel).value >= best - 1e-6


def test_tightening_increases_divergence(rng):
    mu, nu, c, ideal, cfg, free = _setup(rng)
    lo = min_moment_value(mu, nu, c)
    kls = []
    for frac in (1.2, 0.8, 0.5, 0.25, 0.0):
        eta = lo + frac * (free.objective.transport_cost - lo)
        rep = solve_with_moment(mu, nu, ideal, MomentConstraint(c, eta), cfg)
        assert rep.converged
        kls.append(kl_divergence_log(rep.plan.entries, ideal.log_kernel).value)
    assert all(b >= a - 1e-8 for a, b in zip(kls, kls[1:]))
