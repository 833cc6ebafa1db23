"""Path-space primitives: grids, segments, norms, Cameron-Martin vectors."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathlaw.pathspace import (
    CameronMartinVector,
    EmpiricalPathMeasure,
    PathGrid,
    Segment,
    Trajectory,
    h1_norm_sq,
    segment_at,
    sup_norm,
    sup_norm_many,
)


def test_grid_thetas():
    grid = PathGrid(0.5, 4)
    assert grid.dt_hist == pytest.approx(0.125)
    np.testing.assert_allclose(grid.thetas, [-0.5, -0.375, -0.25, -0.125, 0.0])
    assert grid.thetas[-1] == 0.0


def test_grid_validation():
    with pytest.raises(ValueError):
        PathGrid(0.0, 4)
    with pytest.raises(ValueError):
        PathGrid(1.0, 0)


def test_segment_endpoint_and_shape():
    grid = PathGrid(1.0, 2)
    seg = Segment(grid, np.array([[1.0, 0.0], [2.0, 1.0], [3.0, -1.0]]))
    np.testing.assert_array_equal(seg.endpoint, [3.0, -1.0])
    assert seg.d == 2
    with pytest.raises(ValueError):
        Segment(grid, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Segment(grid, np.array([[np.nan], [0.0], [0.0]]))


def test_sup_norm_hand_value():
    grid = PathGrid(1.0, 2)
    seg = Segment(grid, np.array([[3.0, 4.0], [0.0, 1.0], [1.0, 0.0]]))
    assert sup_norm(seg) == pytest.approx(5.0)  # |(3,4)| = 5 dominates


@given(
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=0, max_value=2**31 - 1),
)
@settings(max_examples=50, deadline=None)
def test_sup_norm_many_matches_loop(m, d, n, seed):
    rng = np.random.default_rng(seed)
    grid = PathGrid(1.0, m)
    segs = rng.normal(size=(n, m + 1, d))
    batch = sup_norm_many(segs)
    loop = np.array([sup_norm(Segment(grid, segs[i])) for i in range(n)])
    np.testing.assert_allclose(batch, loop, atol=1e-12)


def test_trajectory_segment_extraction():
    grid = PathGrid(0.5, 2)  # step 0.25
    pts = np.arange(7, dtype=float)[:, None]  # t in [-0.5, 1.0]
    traj = Trajectory(grid, 0.0, pts)
    assert traj.t_start == -0.5
    assert traj.t_end == pytest.approx(1.0)
    seg = segment_at(traj, 0.0)
    np.testing.assert_array_equal(seg.values[:, 0], [0.0, 1.0, 2.0])
    seg = segment_at(traj, 1.0)
    np.testing.assert_array_equal(seg.values[:, 0], [4.0, 5.0, 6.0])
    with pytest.raises(ValueError):
        segment_at(traj, 0.1)  # off grid
    with pytest.raises(ValueError):
        segment_at(traj, -0.25)  # history incomplete
    with pytest.raises(ValueError):
        segment_at(traj, 1.25)  # past the end


def test_cameron_martin_consistency():
    grid = PathGrid(1.0, 4)
    values = np.linspace(0.0, 1.0, 5)[:, None] ** 2
    eta = CameronMartinVector.from_values(grid, values)
    np.testing.assert_allclose(eta.values, values)
    with pytest.raises(ValueError):
        CameronMartinVector(grid, values, np.zeros((4, 1)))


def test_h1_norm_linear_ramp():
    # eta(theta) = theta + r0 has derivative 1, so the energy is r0
    grid = PathGrid(0.75, 6)
    eta = CameronMartinVector.from_values(grid, (grid.thetas + grid.r0)[:, None])
    assert h1_norm_sq(eta) == pytest.approx(0.75, abs=1e-12)


def test_empirical_measure_accessors():
    grid = PathGrid(1.0, 2)
    segs = np.arange(12, dtype=float).reshape(2, 3, 2)
    mu = EmpiricalPathMeasure(grid, segs)
    assert mu.n == 2 and mu.d == 2
    np.testing.assert_array_equal(mu.endpoints, segs[:, -1, :])
    np.testing.assert_allclose(mu.mean_endpoint(), segs[:, -1, :].mean(axis=0))
    np.testing.assert_array_equal(mu.particle(1).values, segs[1])
    # second moment: mean over particles of the squared sup norm
    expected = np.mean(sup_norm_many(segs) ** 2)
    assert mu.second_moment() == pytest.approx(expected)
    with pytest.raises(ValueError):
        EmpiricalPathMeasure(grid, np.zeros((2, 4, 2)))
