"""Particle solver: moments against the exact discrete recursion,
determinism, exchangeability, Picard contraction, weak-form residual."""

import math

import numpy as np
import pytest

from pathlaw.models import (
    coordinate_test_function,
    make_linear_meanfield_delay,
    quadratic_test_function,
)
from pathlaw.pathspace import EmpiricalPathMeasure, PathGrid
from pathlaw.simulate import (
    SimConfig,
    SimulationError,
    picard_contraction_coefficient,
    picard_solve,
    sample_brownian_segments,
    sample_constant_segments,
    simulate_mckean,
    suggest_picard_window,
    verify_fpke_weak_form,
)

R0 = 0.25
GRID = PathGrid(R0, 8)  # h = 1/32


def _ou_model(a=1.0, sig=1.0):
    return make_linear_meanfield_delay(
        1,
        np.array([[-a]]),
        np.zeros((1, 1)),
        np.zeros((1, 1)),
        np.array([[sig]]),
        R0,
    )


def _zero_init(n, d=1, grid=GRID):
    return EmpiricalPathMeasure(grid, np.zeros((n, grid.m + 1, d)))


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_particles=1, horizon=1.0, grid=GRID, seed=0)
    with pytest.raises(ValueError):
        SimConfig(n_particles=4, horizon=-1.0, grid=GRID, seed=0)
    cfg = SimConfig(n_particles=4, horizon=0.1, grid=GRID, seed=0)
    with pytest.raises(ValueError):
        cfg.n_steps  # 0.1 is not a multiple of 1/32


def test_ou_variance_matches_discrete_recursion():
    """Oracle: for X_{k+1} = (1 - a h) X_k + sig sqrt(h) Z the variance obeys
    v_{k+1} = (1 - a h)^2 v_k + sig^2 h exactly, so only MC error remains."""
    a, sig = 1.0, 0.8
    n = 40_000
    cfg = SimConfig(n_particles=n, horizon=1.0, grid=GRID, seed=42)
    res = simulate_mckean(_ou_model(a, sig), _zero_init(n), cfg)
    h = cfg.step
    v = 0.0
    for _ in range(cfg.n_steps):
        v = (1.0 - a * h) ** 2 * v + sig**2 * h
    x = res.ensemble.states_at_index(cfg.n_steps)[:, 0]
    est = float(np.var(x))
    stderr = est * math.sqrt(2.0 / (n - 1))  # variance-of-variance, Gaussian
    assert abs(est - v) < 4.0 * stderr
    assert abs(float(x.mean())) < 4.0 * math.sqrt(v / n)


def test_deterministic_replay():
    cfg = SimConfig(n_particles=32, horizon=0.5, grid=GRID, seed=9)
    model = make_linear_meanfield_delay(
        1, np.array([[-0.5]]), np.array([[0.1]]), np.array([[0.2]]), np.eye(1), R0
    )
    init = sample_constant_segments(GRID, 32, 1, np.zeros(1), 0.5, 9)
    r1 = simulate_mckean(model, init, cfg)
    r2 = simulate_mckean(model, init, cfg)
    np.testing.assert_array_equal(r1.ensemble.paths, r2.ensemble.paths)
    r3 = simulate_mckean(model, init, SimConfig(32, 0.5, GRID, 10))
    assert not np.allclose(r1.ensemble.paths, r3.ensemble.paths)


def test_exchangeability_under_relabeling():
    """Permuting the initial particles together with their ids permutes the
    output trajectories: the particle map is equivariant, so the empirical
    law never depends on the storage order."""
    n = 16
    cfg = SimConfig(n_particles=n, horizon=0.5, grid=GRID, seed=3)
    model = make_linear_meanfield_delay(
        2,
        np.array([[-0.8, 0.2], [-0.2, -0.8]]),
        0.1 * np.eye(2),
        0.2 * np.eye(2),
        np.eye(2),
        R0,
    )
    init = sample_brownian_segments(GRID, n, 2, np.zeros(2), 0.3, 0.5, 3)
    ids = np.arange(n, dtype=np.uint64)
    base = simulate_mckean(model, init, cfg, particle_ids=ids)
    perm = np.random.default_rng(0).permutation(n)
    permuted_init = EmpiricalPathMeasure(GRID, init.segments[perm])
    permuted = simulate_mckean(model, permuted_init, cfg, particle_ids=ids[perm])
    np.testing.assert_allclose(permuted.ensemble.paths, base.ensemble.paths[perm], atol=1e-12)


def test_blowup_raises_simulation_error():
    model = make_linear_meanfield_delay(
        1, np.array([[1e8]]), np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1), R0
    )
    init = sample_constant_segments(GRID, 4, 1, np.ones(1), 0.0, 0)
    with pytest.raises(SimulationError) as exc, np.errstate(over="ignore"):
        simulate_mckean(model, init, SimConfig(4, 2.0, GRID, 0))
    assert exc.value.step >= 0
    assert 0 <= exc.value.particle < 4


def test_mismatched_init_rejected():
    cfg = SimConfig(n_particles=8, horizon=0.5, grid=GRID, seed=0)
    model = _ou_model()
    with pytest.raises(ValueError):
        simulate_mckean(model, _zero_init(4), cfg)
    with pytest.raises(ValueError):
        simulate_mckean(model, _zero_init(8, d=2), cfg)
    with pytest.raises(ValueError):
        simulate_mckean(model, _zero_init(8, grid=PathGrid(R0, 4)), cfg)


def test_contraction_coefficient_assembly():
    model = make_linear_meanfield_delay(
        1, np.array([[-1.0]]), np.array([[0.1]]), np.array([[0.2]]), np.eye(1), R0
    )
    c = model.constants
    expected = 2.0 * (8.0 * (c.alpha1 + c.alpha2) + c.beta1 + c.beta2)
    assert picard_contraction_coefficient(model) == pytest.approx(expected)


def test_suggested_window_satisfies_fixed_point_inequality():
    model = make_linear_meanfield_delay(
        1, np.array([[-1.0]]), np.array([[0.3]]), np.array([[0.3]]), np.eye(1), R0
    )
    cfg = SimConfig(n_particles=4, horizon=2.0, grid=GRID, seed=0)
    t0 = suggest_picard_window(model, cfg)
    k2 = picard_contraction_coefficient(model)
    assert t0 > 0
    assert t0 * k2 * math.exp(t0 * k2) <= math.exp(-1.0) + 1e-12
    # grid aligned
    assert abs(t0 / cfg.step - round(t0 / cfg.step)) < 1e-9
    # drift-free model: the whole horizon is one window
    free = make_linear_meanfield_delay(
        1, np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.eye(1), R0
    )
    assert suggest_picard_window(free, cfg) == pytest.approx(2.0)


def test_picard_gaps_contract():
    model = make_linear_meanfield_delay(
        1, np.array([[-1.0]]), np.array([[0.2]]), np.array([[0.2]]), np.eye(1), R0
    )
    cfg = SimConfig(n_particles=256, horizon=0.5, grid=GRID, seed=5, picard_iters=4)
    init = sample_constant_segments(GRID, 256, 1, np.ones(1), 0.3, 5)
    report, ensemble = picard_solve(model, init, cfg)
    for gaps in report.gaps:
        assert np.all(np.diff(gaps) <= 0.0)  # monotone decreasing
        assert gaps[-1] < 1e-8 * max(gaps[0], 1e-30)
    assert ensemble.paths.shape == (256, GRID.m + 1 + cfg.n_steps, 1)
    # the piecewise solution is deterministic
    report2, ensemble2 = picard_solve(model, init, cfg)
    np.testing.assert_array_equal(ensemble.paths, ensemble2.paths)


def test_picard_fixed_point_near_direct_simulation():
    """Converged Picard iterates solve the same discrete dynamics as the
    live-measure run with the same noise, so the two ensembles agree to
    iteration tolerance."""
    model = make_linear_meanfield_delay(
        1, np.array([[-1.0]]), np.array([[0.1]]), np.array([[0.1]]), np.eye(1), R0
    )
    n = 128
    cfg = SimConfig(n_particles=n, horizon=0.25, grid=GRID, seed=6, picard_iters=8)
    init = sample_constant_segments(GRID, n, 1, np.zeros(1), 0.3, 6)
    _, picard_ens = picard_solve(model, init, cfg)
    direct = simulate_mckean(model, init, cfg)
    gap = np.abs(picard_ens.paths - direct.ensemble.paths).max()
    assert gap < 1e-6


def test_fpke_residual_brownian_quadratic():
    """Pure Brownian motion, f = x^2: E f(X_t) - E f(X_0) - t tr(sigma^2) = 0
    in expectation; the residual must vanish within Monte Carlo error."""
    sig = 0.7
    model = make_linear_meanfield_delay(
        1, np.zeros((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)), np.array([[sig]]), R0
    )
    n = 20_000
    cfg = SimConfig(n_particles=n, horizon=0.5, grid=GRID, seed=8)
    res = simulate_mckean(model, _zero_init(n), cfg)
    h = cfg.step
    snapshots = [(k * h, res.ensemble.measure_at_index(k)) for k in range(cfg.n_steps + 1)]
    rep = verify_fpke_weak_form(snapshots, model, quadratic_test_function(), 0.5)
    assert rep.residual <= 4.0 * max(rep.stderr, 1e-12)
    # first moment of driftless dynamics: identically zero residual paths
    rep1 = verify_fpke_weak_form(snapshots, model, coordinate_test_function(0, 1), 0.5)
    assert rep1.residual <= 4.0 * max(rep1.stderr, 1e-12)


def test_fpke_snapshot_validation():
    model = _ou_model()
    n = 64
    cfg = SimConfig(n_particles=n, horizon=0.25, grid=GRID, seed=1)
    res = simulate_mckean(model, _zero_init(n), cfg)
    h = cfg.step
    snaps = [(k * h, res.ensemble.measure_at_index(k)) for k in range(cfg.n_steps + 1)]
    f = quadratic_test_function()
    with pytest.raises(ValueError):
        verify_fpke_weak_form([], model, f, 0.0)
    with pytest.raises(ValueError):
        verify_fpke_weak_form(snaps[1:], model, f, 0.25)  # missing t = 0
    with pytest.raises(ValueError):
        verify_fpke_weak_form(snaps, model, f, 0.17)  # no snapshot there
    with pytest.raises(ValueError):
        verify_fpke_weak_form([snaps[0], snaps[2], snaps[3]], model, f, snaps[3][0])


def test_initial_samplers_are_deterministic_and_scaled():
    a = sample_constant_segments(GRID, 1000, 2, np.array([1.0, -1.0]), 0.5, 7)
    b = sample_constant_segments(GRID, 1000, 2, np.array([1.0, -1.0]), 0.5, 7)
    np.testing.assert_array_equal(a.segments, b.segments)
    # constant in theta
    assert np.all(a.segments == a.segments[:, :1, :])
    np.testing.assert_allclose(a.endpoints.mean(axis=0), [1.0, -1.0], atol=0.07)
    np.testing.assert_allclose(a.endpoints.std(axis=0), [0.5, 0.5], atol=0.05)
    bw = sample_brownian_segments(GRID, 1000, 1, np.zeros(1), 0.0, 1.0, 7)
    # Brownian increments over the window: variance r0 at theta = 0
    assert float(bw.endpoints.var()) == pytest.approx(R0, rel=0.15)
