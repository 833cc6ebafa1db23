"""Discretized path-space primitives.

A path segment is the recent history of one particle: values on the
uniform grid theta_k = -r0 + k * (r0 / m), k = 0..m. The simulation step
always equals the history grid step r0 / m, so extracting a segment from
a trajectory is pure indexing and never interpolates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PathGrid:
    """Uniform grid on the delay window [-r0, 0] with m intervals."""

    r0: float
    m: int

    def __post_init__(self):
        if self.r0 <= 0:
            raise ValueError(f"delay horizon r0 must be positive, got {self.r0}")
        if self.m < 1:
            raise ValueError(f"grid interval count m must be >= 1, got {self.m}")

    @property
    def dt_hist(self) -> float:
        return self.r0 / self.m

    @property
    def thetas(self) -> np.ndarray:
        """Grid offsets -r0 + k * dt_hist, k = 0..m (last entry is 0)."""
        return -self.r0 + np.arange(self.m + 1) * self.dt_hist


@dataclass(frozen=True)
class Segment:
    """One particle's history window: (m+1) points in R^d."""

    grid: PathGrid
    values: np.ndarray  # shape (m+1, d)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.grid.m + 1:
            raise ValueError(
                f"segment needs shape (m+1, d) = ({self.grid.m + 1}, d), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("segment contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def endpoint(self) -> np.ndarray:
        """The current state xi(0)."""
        return self.values[-1]


@dataclass(frozen=True)
class Trajectory:
    """A path on [t0 - r0, t0 + T] sampled at the history step."""

    grid: PathGrid
    t0: float
    points: np.ndarray  # shape (n, d), n >= m+1

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] < self.grid.m + 1:
            raise ValueError(
                f"trajectory needs at least m+1 = {self.grid.m + 1} points, got {points.shape}"
            )
        object.__setattr__(self, "points", points)

    @property
    def step(self) -> float:
        # Enforced equal to the history grid step by construction.
        return self.grid.dt_hist

    @property
    def t_start(self) -> float:
        return self.t0 - self.grid.r0

    @property
    def t_end(self) -> float:
        return self.t_start + (self.points.shape[0] - 1) * self.step


@dataclass(frozen=True)
class CameronMartinVector:
    """A finite-energy direction eta on the delay grid.

    ``values`` holds eta at the grid points; ``derivative`` holds the
    per-interval slopes (piecewise-linear eta), so cumulative
    reconstruction from the derivative reproduces ``values`` exactly.
    """

    grid: PathGrid
    values: np.ndarray      # shape (m+1, d)
    derivative: np.ndarray  # shape (m, d)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        derivative = np.asarray(self.derivative, dtype=float)
        m = self.grid.m
        if values.shape[0] != m + 1 or derivative.shape != (m, values.shape[1]):
            raise ValueError("values/derivative shapes inconsistent with grid")
        rebuilt = values[:1] + np.concatenate(
            [np.zeros((1, values.shape[1])), np.cumsum(derivative * self.grid.dt_hist, axis=0)]
        )
        if not np.allclose(rebuilt, values, atol=1e-12, rtol=0.0):
            raise ValueError("derivative is not consistent with values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "derivative", derivative)

    @classmethod
    def from_values(cls, grid: PathGrid, values: np.ndarray) -> "CameronMartinVector":
        values = np.asarray(values, dtype=float)
        derivative = np.diff(values, axis=0) / grid.dt_hist
        return cls(grid, values, derivative)

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class EmpiricalPathMeasure:
    """N equally weighted segments; the particle approximation of a path law.

    Stored as one dense (N, m+1, d) array for vectorized evaluation.
    """

    grid: PathGrid
    segments: np.ndarray = field(repr=False)  # shape (N, m+1, d)

    def __post_init__(self):
        segments = np.asarray(self.segments, dtype=float)
        if segments.ndim != 3 or segments.shape[1] != self.grid.m + 1:
            raise ValueError(
                f"measure needs shape (N, m+1, d) with m+1 = {self.grid.m + 1}, got {segments.shape}"
            )
        if segments.shape[0] < 1:
            raise ValueError("empirical measure needs at least one particle")
        object.__setattr__(self, "segments", segments)

    @property
    def n(self) -> int:
        return self.segments.shape[0]

    @property
    def d(self) -> int:
        return self.segments.shape[2]

    @property
    def endpoints(self) -> np.ndarray:
        """Current states xi_i(0), shape (N, d)."""
        return self.segments[:, -1, :]

    def mean_endpoint(self) -> np.ndarray:
        return self.endpoints.mean(axis=0)

    def particle(self, i: int) -> Segment:
        return Segment(self.grid, self.segments[i])

    def second_moment(self) -> float:
        """Empirical mean of the squared sup norm."""
        return float(np.mean(sup_norm_many(self.segments) ** 2))


def sup_norm(seg: Segment) -> float:
    """max_k |seg.values[k]| in the Euclidean norm of R^d."""
    return float(np.max(np.linalg.norm(seg.values, axis=1)))


def sup_norm_many(segments: np.ndarray) -> np.ndarray:
    """Sup norms of a stacked (N, m+1, d) segment array, shape (N,)."""
    return np.sqrt(np.einsum("nkd,nkd->nk", segments, segments)).max(axis=1)


def h1_norm_sq(eta: CameronMartinVector) -> float:
    """Integral of |eta'|^2 over [-r0, 0] by midpoint quadrature."""
    return float(np.sum(eta.derivative**2) * eta.grid.dt_hist)


def segment_at(traj: Trajectory, t: float) -> Segment:
    """Extract the segment X_t from a trajectory at a grid time t."""
    offset = (t - traj.t_start) / traj.step
    k = int(round(offset))
    if abs(offset - k) > 1e-9:
        raise ValueError(f"t = {t} is not on the trajectory grid")
    if k < traj.grid.m or k >= traj.points.shape[0]:
        raise ValueError(
            f"segment at t = {t} needs points on [{t - traj.grid.r0}, {t}], "
            f"trajectory covers [{traj.t_start}, {traj.t_end}]"
        )
    return Segment(traj.grid, traj.points[k - traj.grid.m : k + 1])
