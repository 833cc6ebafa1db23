"""Wasserstein-2 solvers: exact vs brute force, Sinkhorn, invariances."""

import numpy as np
import pytest

from pathlaw.pathspace import EmpiricalPathMeasure, PathGrid
from pathlaw.transport import (
    BRUTEFORCE_CAP,
    EXACT_SOLVER_CAP,
    ground_cost_matrix,
    paired_cost,
    w2_bruteforce,
    w2_exact,
    w2_sinkhorn,
)

GRID = PathGrid(0.5, 3)


def _pair(n, d, seed):
    rng = np.random.default_rng(seed)
    mu = EmpiricalPathMeasure(GRID, rng.normal(size=(n, GRID.m + 1, d)))
    nu = EmpiricalPathMeasure(GRID, rng.normal(size=(n, GRID.m + 1, d)))
    return mu, nu


def test_cost_matrix_hand_value():
    # d = 1, two constant segments each: cost is the squared gap
    a = np.full((1, GRID.m + 1, 1), 1.0)
    b = np.full((1, GRID.m + 1, 1), -2.0)
    mu = EmpiricalPathMeasure(GRID, a)
    nu = EmpiricalPathMeasure(GRID, b)
    np.testing.assert_allclose(ground_cost_matrix(mu, nu), [[9.0]])
    assert w2_exact(mu, nu) == pytest.approx(3.0)


def test_exact_matches_bruteforce_small():
    for seed in range(30):
        n = 2 + seed % 5
        mu, nu = _pair(n, 2, seed)
        assert w2_exact(mu, nu) == pytest.approx(w2_bruteforce(mu, nu), abs=1e-12)


def test_identity_distance_zero():
    mu, _ = _pair(10, 2, 0)
    assert w2_exact(mu, mu) == 0.0


def test_translation_distance():
    # d = 1: shifting every segment by c moves the measure exactly |c| in W2
    # (identity matching attains |c|; Jensen on any coupling matches it).
    mu, _ = _pair(12, 1, 5)
    c = 0.7
    nu = EmpiricalPathMeasure(GRID, mu.segments + c)
    assert w2_exact(mu, nu) == pytest.approx(c, abs=1e-12)


def test_paired_cost_upper_bounds_exact():
    for seed in range(10):
        mu, nu = _pair(16, 2, seed)
        assert w2_exact(mu, nu) ** 2 <= paired_cost(mu, nu) + 1e-12


def test_permutation_invariance():
    mu, nu = _pair(9, 2, 11)
    perm = np.random.default_rng(1).permutation(9)
    nu_shuffled = EmpiricalPathMeasure(GRID, nu.segments[perm])
    assert w2_exact(mu, nu) == pytest.approx(w2_exact(mu, nu_shuffled), abs=1e-12)


def test_triangle_inequality():
    rng = np.random.default_rng(21)
    mu, nu = _pair(8, 2, 13)
    rho = EmpiricalPathMeasure(GRID, rng.normal(size=(8, GRID.m + 1, 2)))
    assert w2_exact(mu, nu) <= w2_exact(mu, rho) + w2_exact(rho, nu) + 1e-12


def test_sinkhorn_upper_bounds_exact_and_tightens():
    mu, nu = _pair(32, 2, 7)
    exact = w2_exact(mu, nu)
    loose = w2_sinkhorn(mu, nu, reg=0.5)
    tight = w2_sinkhorn(mu, nu, reg=0.05, max_iter=50_000, tol=1e-5)
    assert loose.converged and tight.converged
    assert tight.value >= exact - 1e-9
    assert tight.value - exact <= loose.value - exact + 1e-9
    assert tight.value == pytest.approx(exact, rel=0.05)


def test_sinkhorn_reports_marginal_error():
    mu, nu = _pair(16, 1, 3)
    res = w2_sinkhorn(mu, nu, reg=0.1, max_iter=2000)
    assert res.marginal_error < 1e-9
    assert res.iterations >= 1
    # non-convergence must be reported, never silent
    starved = w2_sinkhorn(mu, nu, reg=0.001, max_iter=1)
    assert not starved.converged


def test_caps_and_validation():
    mu, nu = _pair(BRUTEFORCE_CAP + 1, 1, 0)
    with pytest.raises(ValueError):
        w2_bruteforce(mu, nu)
    big = EmpiricalPathMeasure(GRID, np.zeros((EXACT_SOLVER_CAP + 1, GRID.m + 1, 1)))
    with pytest.raises(ValueError):
        w2_exact(big, big)
    other_grid = EmpiricalPathMeasure(PathGrid(0.5, 2), np.zeros((4, 3, 1)))
    small = EmpiricalPathMeasure(GRID, np.zeros((4, GRID.m + 1, 1)))
    with pytest.raises(ValueError):
        w2_exact(small, other_grid)
    with pytest.raises(ValueError):
        w2_sinkhorn(mu, nu, reg=0.0)
