import itertools

import numpy as np
import pytest

from fpdot.densities import DiscreteDensity

# criterion label -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def random_marginal(rng, n, floor=0.01):
    w = rng.random(n) + floor
    return DiscreteDensity(w / w.sum())


def random_problem(rng, n, m=None, floor=0.01):
    m = n if m is None else m
    return random_marginal(rng, n, floor), random_marginal(rng, m, floor), rng.random((n, m))


def enumerate_vertex_optimum(a, b, c):
    """Minimum of <c, x> over the transportation polytope by brute-force vertex enumeration.

    Every vertex is a basic solution: pick n + m - 1 cells, solve the
    marginal equations restricted to them, keep nonnegative exact solutions.
    """
    n, m = c.shape
    cells = list(itertools.product(range(n), range(m)))
    rhs = np.concatenate([a, b])
    best = np.inf
    for basis in itertools.combinations(cells, n + m - 1):
        A = np.zeros((n + m, len(basis)))
        for k, (i, j) in enumerate(basis):
            A[i, k] = 1.0
            A[n + j, k] = 1.0
        if np.linalg.matrix_rank(A) < len(basis):
            continue
        x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.max(np.abs(A @ x - rhs)) > 1e-12 or x.min() < -1e-12:
            continue
        best = min(best, sum(c[i, j] * x[k] for k, (i, j) in enumerate(basis)))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s.split()[0])):
        passed, detail = ACCEPTANCE_RESULTS[label]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}")
