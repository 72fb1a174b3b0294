"""Tests for the penalized spline smoothers."""
import logging

import numpy as np
import pytest

from mfpca.const import LambdaRule
from mfpca.exceptions import InsufficientData, InvalidArgument, ShapeError
from mfpca.fd import Curve, MultilevelSample, SampledGrid
from mfpca.moments import RawCov
from mfpca.smooth import (
    PointCloud,
    SmootherConfig,
    difference_penalty,
    estimate_sigma2,
    fit_curve,
    fit_surface,
    smooth_covariances,
    smooth_curves,
    smooth_mean,
    smooth_means_of,
    spline_basis,
    spline_knots,
)

GRID = SampledGrid.uniform(101)
SINE = np.sin(2 * np.pi * GRID.points)


@pytest.fixture(autouse=True)
def logging_config(caplog):
    caplog.set_level(logging.DEBUG)


def noisy_sine(seed=0, sd=0.3):
    rng = np.random.default_rng(seed)
    return Curve(GRID, SINE + sd * rng.standard_normal(GRID.points.size))


def rms(values):
    return float(np.sqrt(np.mean(np.square(values))))


def test_basis_partition_of_unity():
    """Test that the B-spline basis sums to one across the grid."""
    knots = spline_knots(0.0, 1.0, 12)
    basis = spline_basis(GRID.points, knots)
    assert basis.shape == (101, 12)
    np.testing.assert_allclose(basis.sum(axis=1), 1.0, atol=1e-12)


def test_difference_penalty_null_space():
    """Test that low order polynomials are not penalized."""
    penalty = difference_penalty(10, 2)
    linear = np.arange(10, dtype=float)
    np.testing.assert_allclose(penalty @ np.ones(10), 0.0, atol=1e-12)
    np.testing.assert_allclose(penalty @ linear, 0.0, atol=1e-12)
    assert np.linalg.matrix_rank(penalty) == 8


def test_config_validation_and_resolve():
    """Test smoother options and their grid-dependent defaults."""
    with pytest.raises(InvalidArgument):
        SmootherConfig(n_basis=3)
    with pytest.raises(InvalidArgument):
        SmootherConfig(lambda_rule=LambdaRule.FIXED)
    with pytest.raises(InvalidArgument):
        SmootherConfig(surface_n_basis=2)
    resolved = SmootherConfig().resolve(101)
    assert (resolved.n_basis, resolved.surface_n_basis) == (25, 15)
    small = SmootherConfig().resolve(9)
    assert (small.n_basis, small.surface_n_basis) == (4, 4)
    assert SmootherConfig(lambda_rule="reml").lambda_rule is LambdaRule.REML


def test_linear_function_is_reproduced():
    """Test that a straight line passes through the smoother unchanged."""
    line = Curve.from_function(GRID, lambda t: 2 * t + 1)
    fitted, result = fit_curve(line)
    np.testing.assert_allclose(fitted.values, line.values, atol=1e-6)
    assert result.rule is LambdaRule.GCV
    assert result.lam > 0


@pytest.mark.parametrize("rule", [LambdaRule.GCV, LambdaRule.REML])
def test_noisy_sine_is_denoised(rule):
    """Test that both selection rules remove most of the noise from a sine."""
    curve = noisy_sine()
    fitted, result = fit_curve(curve, SmootherConfig(lambda_rule=rule))
    assert rms(fitted.values - SINE) < 0.15
    assert rms(fitted.values - SINE) < rms(curve.values - SINE) / 2
    assert np.isfinite(result.criterion)
    assert 1.9 < result.edf < 25.1


def test_fixed_lambda():
    """Test that a fixed smoothing parameter is used as given."""
    cfg = SmootherConfig(lambda_rule=LambdaRule.FIXED, lambda_value=0.5)
    fitted, result = fit_curve(noisy_sine(), cfg)
    assert result.lam == 0.5
    assert np.isnan(result.criterion)
    loose = SmootherConfig(lambda_rule="fixed", lambda_value=1e-8)
    rough, _ = fit_curve(noisy_sine(), loose)
    assert np.sum(np.diff(fitted.values, 2) ** 2) < np.sum(
        np.diff(rough.values, 2) ** 2
    )


def test_too_few_points():
    """Test that a grid smaller than the basis cannot be smoothed."""
    grid = SampledGrid.uniform(5)
    with pytest.raises(InsufficientData):
        fit_curve(Curve(grid, np.arange(5.0)), SmootherConfig(n_basis=8))


def test_point_cloud_with_repeated_abscissae():
    """Test the pooled smoother on repeated noisy observations of a constant."""
    rng = np.random.default_rng(4)
    x = np.tile(GRID.points, 20)
    y = 3.0 + 0.5 * rng.standard_normal(x.size)
    mean = smooth_mean(PointCloud(x=x, y=y, grid=GRID))
    np.testing.assert_allclose(mean.values, 3.0, atol=0.2)
    with pytest.raises(ShapeError):
        PointCloud(x=x, y=y[:-1], grid=GRID)


def test_surface_smoothing_keeps_smooth_surfaces():
    """Test that a smooth rank one surface survives tensor smoothing."""
    phi = np.sqrt(2) * SINE
    surface = np.outer(phi, phi)
    for drop in (False, True):
        fitted, _ = fit_surface(surface, GRID, drop_diagonal=drop)
        np.testing.assert_array_equal(fitted, fitted.T)
        np.testing.assert_allclose(fitted, surface, atol=0.02)


def test_surface_shape_checks():
    """Test that surfaces must be square and match the grid."""
    with pytest.raises(ShapeError):
        fit_surface(np.zeros((101, 100)), GRID, drop_diagonal=False)
    with pytest.raises(ShapeError):
        fit_surface(np.zeros((50, 50)), GRID, drop_diagonal=False)


def test_sigma2_from_diagonal_gap(caplog):
    """Test the noise variance and its clamping at zero."""
    smooth = np.outer(SINE, SINE)
    sigma2 = estimate_sigma2(smooth + 0.3 * np.eye(101), smooth, GRID)
    assert sigma2 == pytest.approx(0.3)
    assert estimate_sigma2(smooth - 0.3 * np.eye(101), smooth, GRID) == 0.0
    assert "clamping it to 0" in caplog.text


def test_sigma2_divides_by_span():
    """Test the noise variance on a grid not covering [0, 1]."""
    grid = SampledGrid.uniform(11, 0.2, 0.7)
    sigma2 = estimate_sigma2(0.4 * np.eye(11), np.zeros((11, 11)), grid)
    assert sigma2 == pytest.approx(0.4)


def test_smooth_covariances_recover_noise():
    """Test the nugget of a smooth covariance plus white noise."""
    phi = np.sqrt(2) * SINE
    between = np.outer(phi, phi)
    raw = RawCov(total=between + 0.25 * np.eye(101), between=between)
    smoothed = smooth_covariances(raw, GRID)
    assert smoothed.sigma2 == pytest.approx(0.25, abs=0.02)
    np.testing.assert_allclose(smoothed.within, smoothed.total - smoothed.between)


def test_smooth_curves_shares_lambda():
    """Test pre-smoothing every curve of a sample with one parameter."""
    rng = np.random.default_rng(5)
    values = SINE + 0.3 * rng.standard_normal((4, 2, 101))
    mask = np.array([[True, True], [True, False], [True, True], [False, True]])
    sample = MultilevelSample(grid=GRID, values=values, mask=mask)
    smoothed, result = smooth_curves(sample)
    np.testing.assert_array_equal(smoothed.mask, mask)
    assert result.lam > 0
    assert rms(smoothed.values[mask] - SINE) < rms(sample.values[mask] - SINE) / 2
    np.testing.assert_array_equal(smoothed.values[~mask], 0.0)


def test_smooth_means_of_sample():
    """Test the smoothed overall mean and visit shifts."""
    rng = np.random.default_rng(6)
    values = SINE + 0.2 * rng.standard_normal((30, 2, 101))
    values[:, 1] += 0.5
    mask = np.ones((30, 2), dtype=bool)
    sample = MultilevelSample(grid=GRID, values=values, mask=mask)
    mu, eta = smooth_means_of(sample)
    np.testing.assert_allclose(mu.values, SINE + 0.25, atol=0.1)
    np.testing.assert_allclose(eta[0].values, -0.25, atol=0.1)
    np.testing.assert_allclose(eta[1].values, 0.25, atol=0.1)
