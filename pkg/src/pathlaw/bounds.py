"""Closed-form contraction bounds and discrete entropy utilities.

Evaluates the two-parameter exponential bound on the squared W2 distance
between solutions with constant-in-time coefficients, checks the
criterion under which the bound contracts exponentially, and provides
relative entropy / total variation / Pinsker checks on finite alphabets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import CoefficientModel

_EPS_LO = 1e-6
_EPS_HI = 1.0 - 1e-6
_GOLDEN_TOL = 1e-10
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ContractionParams:
    """Constant-in-time constants feeding the contraction bound."""

    r0: float
    kappa: float
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float

    def __post_init__(self):
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        for name in ("kappa", "alpha1", "alpha2", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @classmethod
    def from_model(cls, model: CoefficientModel) -> "ContractionParams":
        c = model.constants
        return cls(model.r0, c.kappa, c.alpha1, c.alpha2, c.beta1, c.beta2)


def eps_grid(n_eps: int = 129) -> np.ndarray:
    """Geometric grid in (0, 1); refining n -> 2n - 1 nests the grid."""
    return np.geomspace(_EPS_LO, _EPS_HI, n_eps)


def _golden_min(fn, lo: float, hi: float) -> tuple[float, float]:
    """Golden-section minimum of a unimodal scalar function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > _GOLDEN_TOL * max(1.0, hi - lo):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
    xs = [(fn(lo), lo), (fc, c), (fd, d), (fn(hi), hi)]
    fbest, xbest = min(xs)
    return xbest, fbest


def _exponent(params: ContractionParams, eps: float, delta: float, t: float) -> float:
    rate = 4.0 * (params.alpha1 + params.alpha2) / eps + params.beta1 + params.beta2
    return (params.r0 - t) * delta + math.exp(delta * params.r0) / (1.0 - eps) * t * rate


def contraction_bound(
    params: ContractionParams,
    w0_sq: float,
    t: float,
    n_eps: int = 129,
) -> float:
    """Bound on W2(mu_t, nu_t)^2 given W2(mu_0, nu_0)^2 = w0_sq.

    Minimizes (w0_sq / (1 - eps)) * exp[(r0 - t) delta
    + e^{delta r0} t (4(a1+a2)/eps + b1 + b2) / (1 - eps)] over a geometric
    eps grid and, per eps, over delta in [0, kappa] by golden section.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if w0_sq < 0:
        raise ValueError("w0_sq must be nonnegative")
    if w0_sq == 0.0:
        return 0.0
    _, _, best = _optimize(params, t, n_eps)
    return w0_sq * best


def contraction_bound_detail(
    params: ContractionParams, w0_sq: float, t: float, n_eps: int = 129
) -> tuple[float, float, float]:
    """(bound, eps_star, delta_star) for CSV emission."""
    eps_star, delta_star, best = _optimize(params, t, n_eps)
    return w0_sq * best, eps_star, delta_star


def _optimize(params: ContractionParams, t: float, n_eps: int) -> tuple[float, float, float]:
    best = math.inf
    best_eps = _EPS_LO
    best_delta = 0.0
    for eps in eps_grid(n_eps):
        if params.kappa > 0:
            delta, expo = _golden_min(lambda dd: _exponent(params, eps, dd, t), 0.0, params.kappa)
        else:
            delta, expo = 0.0, _exponent(params, eps, 0.0, t)
        val = math.inf if expo > 700.0 else math.exp(expo) / (1.0 - eps)
        if val < best:
            best, best_eps, best_delta = val, eps, delta
    return best_eps, best_delta, best


@dataclass(frozen=True)
class ExoResult:
    holds: bool
    best_rate: float
    best_eps: float
    best_delta: float


def exo_criterion(params: ContractionParams, n_eps: int = 129) -> ExoResult:
    """Exponential-contraction criterion for constant coefficients.

    Holds iff some eps in (0,1) satisfies
        4(a1+a2)/(eps(1-eps)) + (b1+b2)/(1-eps) < sup_{delta in [0,kappa]} delta e^{-delta r0},
    equivalently iff the optimized asymptotic decay rate
        rate(eps, delta) = delta - e^{delta r0} (4(a1+a2)/eps + b1+b2)/(1-eps)
    is positive. best_rate is that optimum (the decay rate of the bound).
    """
    best_rate = -math.inf
    best_eps = _EPS_LO
    best_delta = 0.0
    for eps in eps_grid(n_eps):
        lvl = (4.0 * (params.alpha1 + params.alpha2) / eps + params.beta1 + params.beta2) / (
            1.0 - eps
        )
        if params.kappa > 0:
            delta, neg = _golden_min(
                lambda dd: -(dd - math.exp(dd * params.r0) * lvl), 0.0, params.kappa
            )
            rate = -neg
        else:
            delta, rate = 0.0, -lvl
        if rate > best_rate:
            best_rate, best_eps, best_delta = rate, eps, delta
    return ExoResult(
        holds=bool(best_rate > 0.0),
        best_rate=float(best_rate),
        best_eps=float(best_eps),
        best_delta=float(best_delta),
    )


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability weights over a finite alphabet."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d array")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()}, not 1")
        object.__setattr__(self, "weights", w)


def relative_entropy(nu: DiscreteMeasure, mu: DiscreteMeasure) -> float:
    """sum nu_i log(nu_i / mu_i); +inf when nu charges a mu-null atom."""
    if nu.weights.size != mu.weights.size:
        raise ValueError("alphabets differ")
    n, m = nu.weights, mu.weights
    support = n > 0
    if np.any(support & (m == 0)):
        return math.inf
    ns, ms = n[support], m[support]
    return float(np.sum(ns * np.log(ns / ms)))


@dataclass(frozen=True)
class PinskerReport:
    tv: float
    ent: float
    satisfied: bool


def pinsker_check(nu: DiscreteMeasure, mu: DiscreteMeasure) -> PinskerReport:
    """Total variation vs half relative entropy."""
    if nu.weights.size != mu.weights.size:
        raise ValueError("alphabets differ")
    tv = 0.5 * float(np.abs(mu.weights - nu.weights).sum())
    ent = relative_entropy(nu, mu)
    return PinskerReport(tv=tv, ent=ent, satisfied=tv**2 <= 0.5 * ent + 1e-12)
