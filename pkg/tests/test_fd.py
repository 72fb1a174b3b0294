"""Tests for grids, curves and multilevel samples."""
import logging

import numpy as np
import pytest

from mfpca.exceptions import GridMismatch, InsufficientData, InvalidArgument, ShapeError
from mfpca.fd import (
    Curve,
    MultilevelSample,
    SampledGrid,
    center,
    inner_product,
    norm,
    project_values,
    trapezoid_weights,
)

GRID = SampledGrid.uniform(101)


@pytest.fixture(autouse=True)
def logging_config(caplog):
    caplog.set_level(logging.DEBUG)


def toy_sample(values, mask=None):
    values = np.asarray(values, dtype=float)
    grid = SampledGrid.uniform(values.shape[2])
    if mask is None:
        mask = np.ones(values.shape[:2], dtype=bool)
    return MultilevelSample(grid=grid, values=values, mask=mask)


def test_trapezoid_weights_sum_to_span():
    """Test trapezoid weights on a non-uniform grid."""
    points = np.array([0.1, 0.2, 0.5, 0.9])
    weights = trapezoid_weights(points)
    assert weights == pytest.approx([0.05, 0.2, 0.35, 0.2])
    assert weights.sum() == pytest.approx(0.8)


def test_grid_validation():
    """Test that malformed grids are rejected."""
    with pytest.raises(InvalidArgument):
        SampledGrid.from_points([0.5])
    with pytest.raises(InvalidArgument):
        SampledGrid.from_points([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(InvalidArgument):
        SampledGrid.from_points([0.0, 1.5])
    with pytest.raises(InvalidArgument):
        SampledGrid(points=np.array([0.0, 1.0]), weights=np.array([0.25, 0.25]))
    with pytest.raises(ShapeError):
        SampledGrid(points=np.array([0.0, 1.0]), weights=np.array([1.0]))


def test_grid_is_read_only():
    """Test that grid arrays cannot be modified in place."""
    with pytest.raises(ValueError):
        GRID.points[0] = 0.5


def test_curve_validation():
    """Test curve shape and finiteness checks."""
    with pytest.raises(ShapeError):
        Curve(GRID, np.zeros(10))
    values = np.zeros(101)
    values[3] = np.nan
    with pytest.raises(InvalidArgument):
        Curve(GRID, values)


def test_inner_product_constant():
    """Test the inner product of the constant function with itself."""
    one = Curve.from_function(GRID, lambda t: 1.0)
    assert inner_product(one, one) == pytest.approx(1.0, abs=1e-12)
    assert norm(one) == pytest.approx(1.0, abs=1e-12)


def test_inner_product_fourier_orthogonal():
    """Test that sine and cosine are orthogonal under the quadrature."""
    f = Curve.from_function(GRID, lambda t: np.sqrt(2) * np.sin(2 * np.pi * t))
    g = Curve.from_function(GRID, lambda t: np.sqrt(2) * np.cos(2 * np.pi * t))
    assert inner_product(f, g) == pytest.approx(0.0, abs=1e-3)
    assert inner_product(f, g) == inner_product(g, f)


def test_inner_product_cosine_legendre():
    """Test the cosine / quadratic Legendre cross product on a fine grid."""
    fine = SampledGrid.uniform(2001)
    f = Curve.from_function(fine, lambda t: np.sqrt(2) * np.cos(2 * np.pi * t))
    g = Curve.from_function(fine, lambda t: np.sqrt(5) * (6 * t**2 - 6 * t + 1))
    assert inner_product(f, g) == pytest.approx(0.96, abs=0.01)


def test_inner_product_grid_mismatch():
    """Test that curves on different grids cannot be combined."""
    f = Curve.zeros(GRID)
    g = Curve.zeros(SampledGrid.uniform(51))
    with pytest.raises(GridMismatch):
        inner_product(f, g)


def test_inner_product_nonnegative():
    """Test that the squared norm is positive for a nonzero curve."""
    rng = np.random.default_rng(3)
    f = Curve(GRID, rng.standard_normal(101))
    assert inner_product(f, f) > 0
    assert inner_product(Curve.zeros(GRID), Curve.zeros(GRID)) == 0


def test_inner_product_sum_is_exactly_rounded():
    """Test that cancelling terms do not swallow a small middle term."""
    grid = SampledGrid.uniform(3)
    f = Curve(grid, np.array([4e16, 2.0, -4e16]))
    one = Curve(grid, np.ones(3))
    assert inner_product(f, one) == 1.0
    assert inner_product(one, f) == 1.0


def test_project_values_shapes():
    """Test projecting a stack of curves onto basis functions."""
    functions = np.stack([np.ones(101), np.sqrt(3) * (2 * GRID.points - 1)])
    values = np.broadcast_to(2 * np.ones(101), (3, 4, 101))
    projected = project_values(values, functions, GRID)
    assert projected.shape == (3, 4, 2)
    np.testing.assert_allclose(projected[..., 0], 2.0)
    np.testing.assert_allclose(projected[..., 1], 0.0, atol=1e-12)


def test_sample_validation():
    """Test the structural checks of a multilevel sample."""
    with pytest.raises(InsufficientData):
        toy_sample(np.zeros((1, 2, 5)))
    with pytest.raises(InsufficientData):
        toy_sample(np.zeros((2, 2, 5)), mask=[[True, True], [False, False]])
    with pytest.raises(ShapeError):
        toy_sample(np.zeros((2, 2, 5)), mask=[[True, True]])
    with pytest.raises(GridMismatch):
        MultilevelSample(grid=GRID, values=np.zeros((2, 2, 5)), mask=np.ones((2, 2)))


def test_sample_absent_entries_ignored():
    """Test that absent curves may hold anything and are stored as zeros."""
    values = np.ones((2, 2, 5))
    values[1, 1] = np.nan
    sample = toy_sample(values, mask=[[True, True], [True, False]])
    assert sample.n_present == 3
    assert not sample.is_balanced
    assert sample.has_within_pairs
    assert list(sample.present()) == [(0, 0), (0, 1), (1, 0)]
    np.testing.assert_array_equal(sample.values[1, 1], 0.0)
    with pytest.raises(KeyError):
        sample.curve(1, 1)
    assert sample.subject_ids == ("1", "2")


def test_center_identity_and_zero():
    """Test centering with zero means and with the exact mean."""
    rng = np.random.default_rng(0)
    values = rng.standard_normal((3, 2, 11))
    sample = toy_sample(values)
    zero = Curve.zeros(sample.grid)
    unchanged = center(sample, zero, [zero, zero])
    np.testing.assert_array_equal(unchanged.values, sample.values)

    mu = Curve(sample.grid, values[0, 0])
    constant = toy_sample(np.broadcast_to(values[0, 0], (3, 2, 11)))
    np.testing.assert_allclose(center(constant, mu, [zero, zero]).values, 0.0)


def test_center_hand_arithmetic():
    """Test centering a 2x2 sample against elementwise subtraction."""
    grid = SampledGrid.uniform(3)
    values = np.arange(12, dtype=float).reshape(2, 2, 3)
    mask = np.ones((2, 2), dtype=bool)
    sample = MultilevelSample(grid=grid, values=values, mask=mask)
    mu = Curve.from_function(grid, lambda t: t)
    eta = [
        Curve.from_function(grid, lambda t: 0.1),
        Curve.from_function(grid, lambda t: -0.1),
    ]
    centered = center(sample, mu, eta)
    expected = values - grid.points - np.array([0.1, -0.1])[np.newaxis, :, np.newaxis]
    np.testing.assert_allclose(centered.values, expected, atol=1e-14)
    offsets = np.array([0.1, -0.1])[np.newaxis, :, np.newaxis]
    restored = centered.values + grid.points + offsets
    np.testing.assert_allclose(restored, values, atol=1e-14)


def test_center_wrong_visit_count():
    """Test that one shift per visit is required."""
    sample = toy_sample(np.zeros((2, 2, 5)))
    with pytest.raises(ShapeError):
        center(sample, Curve.zeros(sample.grid), [Curve.zeros(sample.grid)])
