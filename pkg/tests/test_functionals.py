"""Named functional / direction registries used by experiment configs."""

import numpy as np
import pytest

from pathlaw.functionals import (
    make_differentiable_functional,
    make_eta,
    make_positive_functional,
)
from pathlaw.pathspace import PathGrid

GRID = PathGrid(0.25, 4)


def _segs(n=5, d=2, seed=0):
    return np.random.default_rng(seed).normal(size=(n, GRID.m + 1, d))


def test_positive_functionals_are_positive_and_shaped():
    segs = _segs()
    for name in ("one", "exp_min_linear", "gaussian", "sup_gaussian"):
        f = make_positive_functional(name, {}, 2)
        vals = f(segs)
        assert vals.shape == (5,)
        assert np.all(vals > 0.0)
    with pytest.raises(KeyError):
        make_positive_functional("nope", {}, 2)


def test_exp_min_linear_is_capped():
    f = make_positive_functional("exp_min_linear", {"a": [1.0], "cap": 2.0}, 1)
    segs = np.full((3, GRID.m + 1, 1), 100.0)
    np.testing.assert_allclose(f(segs), np.exp(2.0))


def test_differentiable_pairs_match_numeric_derivative():
    segs = _segs(d=1)
    eta = make_eta("affine", {"start": [0.3], "end": [0.8]}, GRID, 1)
    for name in ("linear", "tanh_linear", "gauss_bump"):
        fv, fd = make_differentiable_functional(name, {"a": [1.3]}, 1)
        eps = 1e-6
        numeric = (fv(segs + eps * eta.values[None]) - fv(segs - eps * eta.values[None])) / (
            2.0 * eps
        )
        np.testing.assert_allclose(fd(segs, eta), numeric, atol=1e-6)
    with pytest.raises(KeyError):
        make_differentiable_functional("nope", {}, 1)


def test_eta_registry_boundary_values():
    ramp = make_eta("ramp", {"end": [0.5]}, GRID, 1)
    np.testing.assert_allclose(ramp.values[0], 0.0)
    np.testing.assert_allclose(ramp.values[-1], 0.5)
    aff = make_eta("affine", {"start": [1.0], "end": [-1.0]}, GRID, 1)
    np.testing.assert_allclose(aff.values[0], 1.0)
    np.testing.assert_allclose(aff.values[-1], -1.0)
    zero = make_eta("zero", {}, GRID, 3)
    assert np.all(zero.values == 0.0) and zero.d == 3
    sine = make_eta("sine", {"amp": [2.0], "cycles": 1.0}, GRID, 1)
    np.testing.assert_allclose(sine.values[0], 0.0, atol=1e-12)
    with pytest.raises(KeyError):
        make_eta("nope", {}, GRID, 1)
    with pytest.raises(ValueError):
        make_eta("ramp", {"end": [1.0, 2.0]}, GRID, 1)  # wrong dimension
