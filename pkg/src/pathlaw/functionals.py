"""Named registries of path functionals and shift directions.

Experiment configs refer to functionals and Cameron-Martin directions by
name plus parameters, never by code, so runs stay reproducible and
schema-checkable. All functionals act on stacked (N, m+1, d) segment
arrays and return (N,) values.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .pathspace import CameronMartinVector, PathGrid


def _vec(params: dict, key: str, d: int, default: float = 1.0) -> np.ndarray:
    raw = params.get(key)
    if raw is None:
        return np.full(d, default)
    a = np.asarray(raw, dtype=float)
    if a.shape != (d,):
        raise ValueError(f"parameter {key!r} must have length {d}")
    return a


def make_positive_functional(name: str, params: dict, d: int) -> Callable[[np.ndarray], np.ndarray]:
    """Bounded positive path functionals for the Harnack checks."""
    if name == "one":
        return lambda segs: np.ones(segs.shape[0])
    if name == "exp_min_linear":
        a = _vec(params, "a", d)
        cap = float(params.get("cap", 5.0))
        return lambda segs: np.exp(np.minimum(segs[:, -1, :] @ a, cap))
    if name == "gaussian":
        c = _vec(params, "center", d, default=0.0)
        return lambda segs: np.exp(-0.5 * np.sum((segs[:, -1, :] - c) ** 2, axis=1))
    if name == "sup_gaussian":
        # depends on the whole segment, not just the endpoint
        return lambda segs: np.exp(-np.einsum("nkd,nkd->nk", segs, segs).max(axis=1))
    raise KeyError(f"unknown positive functional {name!r}")


def make_differentiable_functional(
    name: str, params: dict, d: int
) -> tuple[
    Callable[[np.ndarray], np.ndarray],
    Callable[[np.ndarray, CameronMartinVector], np.ndarray],
]:
    """(value, directional derivative) pairs for the IBP identity."""
    if name == "linear":
        a = _vec(params, "a", d)

        def value(segs):
            return segs[:, -1, :] @ a

        def dvalue(segs, eta):
            return np.full(segs.shape[0], float(a @ eta.values[-1]))

        return value, dvalue
    if name == "tanh_linear":
        a = _vec(params, "a", d)

        def value(segs):
            return np.tanh(segs[:, -1, :] @ a)

        def dvalue(segs, eta):
            u = segs[:, -1, :] @ a
            return (1.0 - np.tanh(u) ** 2) * float(a @ eta.values[-1])

        return value, dvalue
    if name == "gauss_bump":
        a = _vec(params, "a", d)

        def value(segs):
            u = segs[:, -1, :] @ a
            return np.exp(-0.5 * u**2)

        def dvalue(segs, eta):
            u = segs[:, -1, :] @ a
            return -u * np.exp(-0.5 * u**2) * float(a @ eta.values[-1])

        return value, dvalue
    raise KeyError(f"unknown differentiable functional {name!r}")


def make_eta(name: str, params: dict, grid: PathGrid, d: int) -> CameronMartinVector:
    """Cameron-Martin directions on the delay grid."""
    thetas = grid.thetas
    if name == "ramp":
        # 0 at -r0, rises linearly to `end`
        end = _vec(params, "end", d)
        values = np.outer((thetas + grid.r0) / grid.r0, end)
    elif name == "affine":
        start = _vec(params, "start", d)
        end = _vec(params, "end", d)
        w = ((thetas + grid.r0) / grid.r0)[:, None]
        values = (1.0 - w) * start[None, :] + w * end[None, :]
    elif name == "sine":
        amp = _vec(params, "amp", d)
        cycles = float(params.get("cycles", 1.0))
        values = np.outer(np.sin(np.pi * cycles * (thetas + grid.r0) / grid.r0), amp)
    elif name == "zero":
        values = np.zeros((grid.m + 1, d))
    else:
        raise KeyError(f"unknown eta {name!r}")
    return CameronMartinVector.from_values(grid, values)
