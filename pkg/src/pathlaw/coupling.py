"""Coupling by change of measure for additive-noise models.

Builds paired trajectories (X, Y) that merge by time T - r0, the drift
corrections gamma_bar (measure mismatch) and gamma_tilde (state feedback
with the integrable 1/(T - r0 - t) factor), and the Girsanov log-weight.
The resulting importance weights verify the log-Harnack and power-Harnack
inequalities by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .models import CoefficientModel
from .pathspace import EmpiricalPathMeasure, PathGrid
from .rng import derive_seed, normals
from .simulate import Ensemble, SimConfig, simulate_mckean
from .transport import w2_exact


def gamma_bar(
    model: CoefficientModel,
    t: float,
    x_segments: np.ndarray,
    mu_t: EmpiricalPathMeasure,
    nu_t: EmpiricalPathMeasure,
) -> np.ndarray:
    """sigma^{-1} [b(t, X_t, mu_t) - b(t, X_t, nu_t)] for each row, (N, d)."""
    if model.diffusion_kind not in ("additive", "state"):
        raise ValueError("gamma_bar needs an invertible diffusion")
    diff = model.drift_all(t, x_segments, mu_t) - model.drift_all(t, x_segments, nu_t)
    if model.diffusion_kind == "additive":
        return diff @ model.sigma_inv(t).T
    return np.stack(
        [model.sigma_inv(t, x_segments[i, -1]) @ diff[i] for i in range(len(diff))]
    )


@dataclass(frozen=True)
class CouplingRun:
    """One coupled sample: trajectories, drift corrections, log-weight."""

    x_path: np.ndarray  # (m+1+steps, d)
    y_path: np.ndarray
    gamma_bar: np.ndarray  # (steps, d)
    gamma_tilde: np.ndarray  # (steps, d)
    log_weight: float
    merge_time: float


@dataclass(frozen=True)
class CouplingResult:
    """Vectorized ensemble of coupled samples."""

    grid: PathGrid
    x_ensemble: Ensemble
    y_paths: np.ndarray = field(repr=False)  # (N, m+1+steps, d)
    log_weights: np.ndarray = field(repr=False)  # ell(T), shape (N,)
    gamma_sq_integral: np.ndarray = field(repr=False)  # int |gbar+gtil|^2 dt, (N,)
    merge_time: float
    gamma_bars: Optional[np.ndarray] = None  # (steps, N, d) when stored
    gamma_tildes: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.y_paths.shape[0]

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def final_x_segments(self) -> np.ndarray:
        m = self.grid.m
        return self.x_ensemble.paths[:, -(m + 1) :, :]

    def final_y_segments(self) -> np.ndarray:
        m = self.grid.m
        return self.y_paths[:, -(m + 1) :, :]

    def mean_one_stat(self) -> tuple[float, float]:
        """(mean of exp(ell), standard error); should bracket 1."""
        w = self.weights()
        return float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size))

    def run(self, i: int) -> CouplingRun:
        if self.gamma_bars is None:
            raise ValueError("per-step corrections not stored; pass store_gammas=True")
        return CouplingRun(
            x_path=self.x_ensemble.paths[i],
            y_path=self.y_paths[i],
            gamma_bar=self.gamma_bars[:, i, :],
            gamma_tilde=self.gamma_tildes[:, i, :],
            log_weight=float(self.log_weights[i]),
            merge_time=self.merge_time,
        )


def coupled_simulate(
    model: CoefficientModel,
    x0: EmpiricalPathMeasure,
    y0: EmpiricalPathMeasure,
    horizon: float,
    config: SimConfig,
    store_gammas: bool = False,
    check_gamma_bound: bool = False,
    noise_label: str = "coupling",
) -> CouplingResult:
    """Coupled run on [0, T]; X and Y share the reference Brownian increments.

    X is the live mean-field run from x0 (its own ensemble is the mu flow);
    the nu flow comes from an auxiliary run from y0 with independent noise.
    Y follows the modified drift with feedback (X - Y)/(T - r0 - t) until the
    merge time T - r0, after which its states are copies of X.
    """
    if model.diffusion_kind != "additive":
        raise ValueError("coupling by change of measure implemented for additive noise only")
    r0 = config.grid.r0
    if horizon <= r0:
        raise ValueError(f"need T > r0, got T = {horizon}, r0 = {r0}")
    if x0.n != y0.n:
        raise ValueError("x0 and y0 must be paired ensembles of equal size")
    cfg = SimConfig(
        n_particles=x0.n,
        horizon=horizon,
        grid=config.grid,
        seed=config.seed,
        picard_iters=config.picard_iters,
    )
    h = cfg.step
    n_steps = cfg.n_steps
    m = cfg.grid.m
    n = x0.n
    merge_index = int(round((horizon - r0) / h))

    # mu flow and X trajectories in one run; nu flow with its own noise.
    x_run = simulate_mckean(model, x0, cfg, noise_label=f"{noise_label}-W")
    nu_run = simulate_mckean(model, y0, cfg, noise_label=f"{noise_label}-nu-flow")
    x_paths = x_run.ensemble.paths
    ids = x_run.ensemble.particle_ids
    noise_seed = derive_seed(cfg.seed, f"{noise_label}-W")

    y_paths = np.empty_like(x_paths)
    y_paths[:, : m + 1, :] = y0.segments
    ell = np.zeros(n)
    gamma_sq = np.zeros(n)
    gbars = np.empty((n_steps, n, d := model.d)) if store_gammas else None
    gtils = np.empty((n_steps, n, d)) if store_gammas else None
    sqrt_h = math.sqrt(h)
    lam_k2 = model.constants.lam * model.constants.kappa2

    for k in range(n_steps):
        t = k * h
        x_seg = x_paths[:, k : k + m + 1, :]
        y_seg = y_paths[:, k : k + m + 1, :]
        mu_t = x_run.ensemble.measure_at_index(k)
        nu_t = nu_run.ensemble.measure_at_index(k)
        sig = model.sigma_matrix(t)
        sig_inv = model.sigma_inv(t)
        b_x_mu = model.drift_all(t, x_seg, mu_t)
        b_x_nu = model.drift_all(t, x_seg, nu_t)
        gbar = (b_x_mu - b_x_nu) @ sig_inv.T
        if check_gamma_bound:
            w2 = w2_exact(mu_t, nu_t)
            norms = np.linalg.norm(gbar, axis=1)
            if np.any(norms > lam_k2 * w2 + 1e-9):
                raise AssertionError(
                    f"|gamma_bar| exceeds lambda kappa2 W2 at step {k}: "
                    f"{norms.max()} > {lam_k2 * w2}"
                )
        if k < merge_index:
            b_y_nu = model.drift_all(t, y_seg, nu_t)
            gap = x_paths[:, k + m, :] - y_paths[:, k + m, :]
            feedback = gap / (horizon - r0 - t)
            # feedback only while the states actually differ
            alive = np.einsum("nd,nd->n", gap, gap) > 0.0
            feedback[~alive] = 0.0
            gtil = (b_x_nu - b_y_nu + feedback) @ sig_inv.T
        else:
            b_y_nu = None
            gtil = np.zeros_like(gbar)
        gamma = gbar + gtil
        z = normals(noise_seed, ids, k, model.d)
        gam_sq_step = np.einsum("nd,nd->n", gamma, gamma)
        ell -= np.einsum("nd,nd->n", gamma, z) * sqrt_h + 0.5 * gam_sq_step * h
        gamma_sq += gam_sq_step * h
        if store_gammas:
            gbars[k] = gbar
            gtils[k] = gtil
        if k >= merge_index:
            y_paths[:, k + m + 1, :] = x_paths[:, k + m + 1, :]
        else:
            drift_y = b_y_nu + (gbar + gtil) @ sig.T
            y_new = y_paths[:, k + m, :] + drift_y * h + sqrt_h * z @ sig.T
            if k == merge_index - 1:
                y_new = x_paths[:, k + m + 1, :].copy()
            y_paths[:, k + m + 1, :] = y_new

    return CouplingResult(
        grid=cfg.grid,
        x_ensemble=x_run.ensemble,
        y_paths=y_paths,
        log_weights=ell,
        gamma_sq_integral=gamma_sq,
        merge_time=horizon - r0,
        gamma_bars=gbars,
        gamma_tildes=gtils,
    )


@dataclass(frozen=True)
class HarnackReport:
    lhs: float
    rhs_base: float
    entropy_term: float
    margin: float
    lhs_stderr: float
    rhs_stderr: float
    entropy_stderr: float
    margin_stderr: float
    n_samples: int


def log_harnack_check(
    model: CoefficientModel,
    x0: EmpiricalPathMeasure,
    y0: EmpiricalPathMeasure,
    f: Callable[[np.ndarray], np.ndarray],
    horizon: float,
    config: SimConfig,
) -> HarnackReport:
    """Monte Carlo check of the log-Harnack inequality.

    lhs estimates (P_T log f)(nu_0) via the coupled measure (weights
    exp(ell), evaluated at Y_T = X_T); rhs_base is log (P_T f)(mu_0) from an
    independent run; entropy_term is the Girsanov relative-entropy
    surrogate (1/2) E~ int |gamma_bar + gamma_tilde|^2 dt.
    """
    res = coupled_simulate(model, x0, y0, horizon, config)
    w = res.weights()
    fy = np.asarray(f(res.final_y_segments()), dtype=float)
    if np.any(fy <= 0.0):
        raise ValueError("log-Harnack requires a strictly positive functional")
    n = res.n

    lhs_terms = w * np.log(fy)
    lhs = float(lhs_terms.mean())
    lhs_se = float(lhs_terms.std(ddof=1) / math.sqrt(n))

    ent_terms = w * 0.5 * res.gamma_sq_integral
    entropy_term = float(ent_terms.mean())
    ent_se = float(ent_terms.std(ddof=1) / math.sqrt(n))

    ref_cfg = SimConfig(
        n_particles=x0.n, horizon=horizon, grid=config.grid, seed=config.seed
    )
    ref = simulate_mckean(model, x0, ref_cfg, noise_label="harnack-ref")
    fx = np.asarray(f(ref.ensemble.paths[:, -(config.grid.m + 1) :, :]), dtype=float)
    mean_fx = float(fx.mean())
    rhs_base = math.log(mean_fx)
    rhs_se = float(fx.std(ddof=1) / math.sqrt(n) / mean_fx)

    margin = rhs_base + entropy_term - lhs
    margin_se = math.sqrt(lhs_se**2 + rhs_se**2 + ent_se**2)
    return HarnackReport(
        lhs=lhs,
        rhs_base=rhs_base,
        entropy_term=entropy_term,
        margin=margin,
        lhs_stderr=lhs_se,
        rhs_stderr=rhs_se,
        entropy_stderr=ent_se,
        margin_stderr=margin_se,
        n_samples=n,
    )


@dataclass(frozen=True)
class PowerHarnackReport:
    p: float
    lhs: float
    rhs: float
    margin: float
    margin_stderr: float
    weight_moment: float
    n_samples: int


def power_harnack_check(
    model: CoefficientModel,
    x0: EmpiricalPathMeasure,
    y0: EmpiricalPathMeasure,
    f: Callable[[np.ndarray], np.ndarray],
    p: float,
    horizon: float,
    config: SimConfig,
) -> PowerHarnackReport:
    """Monte Carlo check of the power-Harnack inequality at p > 1:

    (P_T f(nu_0))^p <= (E R_T^{p/(p-1)})^{p-1} (P_T f^p)(mu_0).
    """
    if p <= 1.0:
        raise ValueError("power-Harnack needs p > 1")
    res = coupled_simulate(model, x0, y0, horizon, config)
    w = res.weights()
    fy = np.asarray(f(res.final_y_segments()), dtype=float)
    if np.any(fy < 0.0):
        raise ValueError("power-Harnack requires a nonnegative functional")
    n = res.n
    q = p / (p - 1.0)

    a_terms = w * fy
    a_mean = float(a_terms.mean())
    a_se = float(a_terms.std(ddof=1) / math.sqrt(n))
    lhs = a_mean**p
    lhs_se = abs(p * a_mean ** (p - 1.0)) * a_se

    wq_terms = w**q
    wq_mean = float(wq_terms.mean())
    wq_se = float(wq_terms.std(ddof=1) / math.sqrt(n))

    ref_cfg = SimConfig(
        n_particles=x0.n, horizon=horizon, grid=config.grid, seed=config.seed
    )
    ref = simulate_mckean(model, x0, ref_cfg, noise_label="harnack-ref")
    fp_terms = np.asarray(
        f(ref.ensemble.paths[:, -(config.grid.m + 1) :, :]), dtype=float
    ) ** p
    fp_mean = float(fp_terms.mean())
    fp_se = float(fp_terms.std(ddof=1) / math.sqrt(n))

    rhs = wq_mean ** (p - 1.0) * fp_mean
    rhs_se = math.sqrt(
        ((p - 1.0) * wq_mean ** (p - 2.0) * fp_mean * wq_se) ** 2
        + (wq_mean ** (p - 1.0) * fp_se) ** 2
    )
    margin = rhs - lhs
    return PowerHarnackReport(
        p=p,
        lhs=lhs,
        rhs=rhs,
        margin=margin,
        margin_stderr=math.sqrt(lhs_se**2 + rhs_se**2),
        weight_moment=wq_mean,
        n_samples=n,
    )
