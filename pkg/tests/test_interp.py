import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from anderson_lab.geometry import ShapeSpec, discretize
from anderson_lab.interp import (
    LP_CONSTANT,
    LatticeFunction,
    coarsen,
    coarsening_bound,
    interpolant_gradient_norm,
    interpolant_norm,
    interpolate,
    lift_inner_product,
    scaled_gradient_norm,
    scaled_norm,
)


@st.composite
def lattice_functions(draw, max_side=5):
    d = draw(st.integers(1, 3))
    shape = tuple(draw(st.integers(1, max_side)) for _ in range(d))
    seed = draw(st.integers(0, 2**32 - 1))
    eps = draw(st.sampled_from([1.0, 0.25, 0.1]))
    rng = np.random.default_rng(seed)
    origin = rng.integers(-2, 3, size=d)
    return LatticeFunction(rng.normal(size=shape), origin, eps)


def _points(f, rng, m=40):
    lo = (f.origin - 1) * f.eps
    hi = (f.origin + np.asarray(f.values.shape) + 1) * f.eps
    return rng.uniform(lo, hi, size=(m, f.dim))


def test_scaled_norm_examples():
    lat = discretize(ShapeSpec.unit_cube(1), 1 / 16)
    from anderson_lab.eigen import lowest_eigenpairs
    from anderson_lab.operator import assemble

    g = lowest_eigenpairs(assemble(lat, np.zeros(lat.n)), 1).vector(1)
    f = LatticeFunction.from_lattice(lat, g * lat.eps ** (-0.5))
    assert scaled_norm(f, 2) == pytest.approx(1.0)
    ones = LatticeFunction(np.ones((3, 2)), [0, 0], 0.5)
    assert scaled_norm(ones, 1) == pytest.approx(0.25 * 6)
    assert scaled_norm(LatticeFunction([3.0, -4.0], [0], 1.0), np.inf) == 4.0
    with pytest.raises(ValueError):
        scaled_norm(ones, 0.5)


def test_constant_and_midpoint():
    f = LatticeFunction(np.full((4, 4), 2.5), [0, 0], 0.5)
    y = np.random.default_rng(0).uniform(0.0, 1.5, size=(50, 2))  # cells with all corners in the support
    assert np.allclose(interpolate(f)(y), 2.5)
    g = LatticeFunction([1.0, 3.0, -2.0], [0], 0.5)
    assert interpolate(g)([[0.25], [0.75]]).tolist() == [2.0, 0.5]


@given(lattice_functions(), st.integers(0, 1000))
def test_agrees_with_lattice_values(f, seed):
    idx = np.stack(np.meshgrid(*[np.arange(s) for s in f.values.shape], indexing="ij"), -1).reshape(-1, f.dim)
    sites = idx + f.origin
    assert np.allclose(interpolate(f)(sites * f.eps), f.values[tuple(idx.T)], atol=1e-12)


@given(lattice_functions(), st.integers(0, 1000))
def test_ties_give_the_same_value_for_every_ordering(f, seed):
    rng = np.random.default_rng(seed)
    if f.dim == 1:
        return
    base = rng.integers(f.origin - 1, f.origin + np.asarray(f.values.shape) + 1, size=(20, f.dim))
    alpha = rng.choice([0.0, 0.25, 0.5, 1 - 2**-10], size=(20, f.dim))
    alpha[:, 1] = alpha[:, 0]  # force at least one tie
    y = (base + alpha) * f.eps
    itp = interpolate(f)
    ref = itp(y)
    for perm in itertools.permutations(range(f.dim)):
        perms = np.tile(perm, (20, 1))
        sorted_alpha = np.take_along_axis(alpha, perms, axis=1)
        admissible = np.all(np.diff(sorted_alpha, axis=1) <= 0, axis=1)
        vals = itp.evaluate(y, perms=perms)
        assert np.allclose(vals[admissible], ref[admissible], atol=1e-12)


@given(lattice_functions(), st.integers(0, 1000))
def test_continuity_across_cell_faces(f, seed):
    rng = np.random.default_rng(seed)
    y = _points(f, rng)
    j = int(rng.integers(f.dim))
    y[:, j] = np.round(y[:, j] / f.eps) * f.eps
    h = 1e-9 * f.eps
    lo, hi = y.copy(), y.copy()
    lo[:, j] -= h
    hi[:, j] += h
    itp = interpolate(f)
    scale = np.abs(f.values).max() * f.dim
    assert np.allclose(itp(lo), itp(hi), atol=1e-6 * scale)


@given(lattice_functions(), lattice_functions(), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_linearity(f, h, a, b, seed):
    if f.dim != h.dim:
        return
    h = LatticeFunction(h.values, h.origin, f.eps)
    combo = f * a + h * b
    y = _points(combo, np.random.default_rng(seed))
    expected = a * interpolate(f)(y) + b * interpolate(h)(y)
    assert np.allclose(interpolate(combo)(y), expected, atol=1e-12 * (1 + abs(a) + abs(b)) * 10)


def test_gradient_norm_examples():
    assert interpolant_gradient_norm(LatticeFunction(np.zeros((3, 3)), [0, 0], 0.1)) == 0.0
    f = LatticeFunction([0.0, 1.0], [0], 1.0)
    assert interpolant_gradient_norm(f) == pytest.approx(math.sqrt(2))
    assert scaled_gradient_norm(f) == pytest.approx(math.sqrt(2))


def test_gradient_identity_on_a_cube():
    rng = np.random.default_rng(3)
    f = LatticeFunction(rng.normal(size=(4, 4, 4)), [1, -2, 0], 0.2)
    exact = interpolant_gradient_norm(f)
    assert exact == pytest.approx(scaled_gradient_norm(f) / f.eps, rel=1e-12)


@given(lattice_functions(max_side=4))
def test_lp_norm_bounds(f):
    for p in (1, 2, np.inf):
        assert interpolant_norm(f, p) <= LP_CONSTANT[f.dim] * scaled_norm(f, p) * (1 + 1e-12)


@given(lattice_functions(), lattice_functions())
def test_lift_preserves_inner_product(f, h):
    if f.dim != h.dim:
        return
    h = LatticeFunction(h.values, h.origin, f.eps)
    a = LatticeFunction(np.pad(f.values, 3), f.origin - 3, f.eps)
    b = LatticeFunction(np.pad(h.values, 3), h.origin - 3, f.eps)
    a_full, b_full = a + b * 0.0, b + a * 0.0  # embed both in a common box
    expected = float(np.sum(a_full.values * b_full.values))
    assert lift_inner_product(f, h) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_coarsen_examples():
    f = LatticeFunction(np.arange(8.0), [0], 1.0)
    assert np.array_equal(coarsen(f, 1).values, f.values)
    assert coarsening_bound(f, 1)[0] == 0.0
    lhs, rhs = coarsening_bound(f, 4)
    assert lhs == 12.0
    # zero extension adds the drop from 7 back to 0 at the right end: |grad f|_1 = 14
    assert rhs == pytest.approx(2 * 4 * 14)
    const = LatticeFunction(np.full((4, 6), 1.5), [0, 2], 1.0)
    assert np.array_equal(coarsen(const, 2).values, const.values)
    with pytest.raises(ValueError):
        coarsen(f, 0)


@given(lattice_functions(), st.integers(1, 6))
def test_coarsening_bound_holds(f, L):
    coarsening_bound(f, L, check=True)


def test_csv_export(tmp_path):
    f = LatticeFunction([0.0, 2.0], [0], 0.5)
    interpolate(f).to_csv(tmp_path / "f.csv", [[0.25]])
    assert (tmp_path / "f.csv").read_text().splitlines() == ["y0,value", "0.25,1.0"]
