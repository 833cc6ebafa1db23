"""Wasserstein-2 distance between empirical path measures.

Ground metric is the sup norm on segments. For equal-size uniform
empirical measures the optimal transport problem is an assignment
problem, solved exactly by the Hungarian algorithm; a brute-force
permutation oracle covers tiny instances and a log-domain Sinkhorn
approximation covers large ones.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .pathspace import EmpiricalPathMeasure

EXACT_SOLVER_CAP = 2048
BRUTEFORCE_CAP = 8
_COST_CHUNK = 128  # rows of the cost matrix assembled per pass


def _check_pair(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> None:
    if mu.grid != nu.grid:
        raise ValueError("measures live on different grids")
    if mu.n != nu.n:
        raise ValueError(f"equal particle counts required, got {mu.n} and {nu.n}")
    if mu.d != nu.d:
        raise ValueError("dimension mismatch")


def ground_cost_matrix(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> np.ndarray:
    """Entrywise squared sup-norm distances, shape (N, N)."""
    _check_pair(mu, nu)
    a, b = mu.segments, nu.segments
    n = mu.n
    cost = np.empty((n, n))
    for lo in range(0, n, _COST_CHUNK):
        hi = min(lo + _COST_CHUNK, n)
        diff = a[lo:hi, None, :, :] - b[None, :, :, :]
        cost[lo:hi] = np.einsum("ijkd,ijkd->ijk", diff, diff).max(axis=2)
    return cost


def w2_exact(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> float:
    """Exact W2 by optimal assignment (Hungarian algorithm)."""
    _check_pair(mu, nu)
    if mu.n > EXACT_SOLVER_CAP:
        raise ValueError(
            f"N = {mu.n} exceeds the exact solver cap {EXACT_SOLVER_CAP}; use w2_sinkhorn"
        )
    cost = ground_cost_matrix(mu, nu)
    rows, cols = linear_sum_assignment(cost)
    return math.sqrt(cost[rows, cols].mean())


def w2_bruteforce(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> float:
    """Minimum over all N! matchings; oracle for w2_exact, N <= 8 only."""
    _check_pair(mu, nu)
    if mu.n > BRUTEFORCE_CAP:
        raise ValueError(f"brute force refused for N = {mu.n} > {BRUTEFORCE_CAP}")
    cost = ground_cost_matrix(mu, nu)
    n = mu.n
    best = min(
        sum(cost[i, perm[i]] for i in range(n)) for perm in itertools.permutations(range(n))
    )
    return math.sqrt(best / n)


def paired_cost(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> float:
    """Mean squared sup distance of the identity matching (upper bounds W2^2)."""
    _check_pair(mu, nu)
    diff = mu.segments - nu.segments
    return float(np.einsum("nkd,nkd->nk", diff, diff).max(axis=1).mean())


@dataclass(frozen=True)
class SinkhornResult:
    value: float
    converged: bool
    iterations: int
    marginal_error: float


def w2_sinkhorn(
    mu: EmpiricalPathMeasure,
    nu: EmpiricalPathMeasure,
    reg: float,
    max_iter: int = 2000,
    tol: float = 1e-9,
) -> SinkhornResult:
    """Entropic-regularized W2, log-domain stabilized.

    Returns the square root of the transport cost <plan, cost> of the
    Sinkhorn plan (entropy excluded), which upper-bounds the exact value.
    Non-convergence is reported, never silent.
    """
    if reg <= 0:
        raise ValueError("regularization must be positive")
    _check_pair(mu, nu)
    cost = ground_cost_matrix(mu, nu)
    n = mu.n
    log_w = -math.log(n)
    f = np.zeros(n)
    g = np.zeros(n)
    err = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        # c-transforms in the log domain
        f = -reg * _logsumexp((g[None, :] - cost) / reg + log_w, axis=1)
        g = -reg * _logsumexp((f[:, None] - cost) / reg + log_w, axis=0)
        log_plan = (f[:, None] + g[None, :] - cost) / reg + 2 * log_w
        row = np.exp(_logsumexp(log_plan, axis=1))
        err = float(np.abs(row - 1.0 / n).sum())
        if err < tol:
            break
    log_plan = (f[:, None] + g[None, :] - cost) / reg + 2 * log_w
    value = float(np.sum(np.exp(log_plan) * cost))
    return SinkhornResult(
        value=math.sqrt(max(value, 0.0)),
        converged=err < tol,
        iterations=it,
        marginal_error=err,
    )


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    amax = a.max(axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - amax), axis=axis)) + np.squeeze(amax, axis=axis)
    return out
