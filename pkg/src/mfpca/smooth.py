"""Penalized B-spline smoothing of mean curves and covariance surfaces.

Curves are fitted with P-splines (uniform knots, difference penalty on
neighbouring coefficients). Surfaces use the tensor product of the same basis with
the penalty applied along both axes; the normal equations are assembled from the one
dimensional basis so the full design matrix of T^2 rows is never built.
"""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable

import numpy as np
import numpy.typing as npt
from scipy.interpolate import BSpline
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .const import (
    DEFAULT_PENALTY_ORDER,
    LAMBDA_GRID_DECADES,
    LAMBDA_GRID_SIZE,
    MAX_CURVE_BASIS,
    MAX_SURFACE_BASIS,
    MIN_SURFACE_BASIS,
    SPLINE_DEGREE,
    LambdaRule,
)
from .exceptions import EmptyVisit, InsufficientData, InvalidArgument, ShapeError
from .fd import Curve, FloatArray, MultilevelSample, SampledGrid
from .moments import RawCov, symmetrize

_LOGGER = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class SmootherConfig:
    """Basis sizes, penalty and smoothing parameter rule.

    Basis sizes left as None are derived from the grid size by resolve().
    """

    n_basis: int | None = None
    penalty_order: int = DEFAULT_PENALTY_ORDER
    lambda_rule: LambdaRule = LambdaRule.GCV
    lambda_value: float | None = None
    surface_n_basis: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "lambda_rule", LambdaRule(self.lambda_rule))
        if self.penalty_order < 1:
            raise InvalidArgument("penalty order must be at least 1")
        if self.n_basis is not None and self.n_basis < max(
            self.penalty_order + 1, SPLINE_DEGREE + 1
        ):
            raise InvalidArgument(
                f"n_basis={self.n_basis} is too small for penalty order "
                f"{self.penalty_order} and cubic splines"
            )
        if self.surface_n_basis is not None and self.surface_n_basis < max(
            MIN_SURFACE_BASIS, self.penalty_order + 1
        ):
            raise InvalidArgument(
                f"surface_n_basis must be at least {MIN_SURFACE_BASIS}"
            )
        if self.lambda_rule is LambdaRule.FIXED:
            if self.lambda_value is None or not self.lambda_value >= 0:
                raise InvalidArgument("a fixed smoothing parameter must be >= 0")

    def resolve(self, n_points: int) -> SmootherConfig:
        """Fill in the default basis sizes for a grid of n_points."""
        n_basis = self.n_basis
        if n_basis is None:
            n_basis = max(
                min(MAX_CURVE_BASIS, n_points // 4),
                SPLINE_DEGREE + 1,
                self.penalty_order + 1,
            )
        surface_n_basis = self.surface_n_basis
        if surface_n_basis is None:
            surface_n_basis = max(
                min(MAX_SURFACE_BASIS, n_points // 6),
                MIN_SURFACE_BASIS,
                self.penalty_order + 1,
            )
        return dataclasses.replace(
            self, n_basis=n_basis, surface_n_basis=surface_n_basis
        )

    def as_dict(self) -> dict[str, object]:
        return {
            "n_basis": self.n_basis,
            "penalty_order": self.penalty_order,
            "lambda_rule": self.lambda_rule.value,
            "lambda_value": self.lambda_value,
            "surface_n_basis": self.surface_n_basis,
        }


@dataclasses.dataclass(frozen=True)
class SmoothingResult:
    """The smoothing parameter a fit used and how it was chosen."""

    lam: float
    rule: LambdaRule
    criterion: float
    edf: float


@dataclasses.dataclass(frozen=True)
class PointCloud:
    """Pooled (x, y) observations to be smoothed and evaluated on grid."""

    x: FloatArray
    y: FloatArray
    grid: SampledGrid

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ShapeError(f"{x.size} abscissae for {y.size} values")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InsufficientData("point cloud contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclasses.dataclass(frozen=True, eq=False)
class SmoothedCov:
    """Smoothed total and between covariance surfaces and the noise variance."""

    total: FloatArray
    between: FloatArray
    sigma2: float

    def __post_init__(self) -> None:
        if self.sigma2 < 0:
            raise InvalidArgument("sigma2 must be nonnegative")

    @property
    def within(self) -> FloatArray:
        """K_W = K_T - K_B, left indefinite."""
        return self.total - self.between


def spline_knots(
    low: float, high: float, n_basis: int, degree: int = SPLINE_DEGREE
) -> FloatArray:
    """Uniform knots on [low, high] padded with degree knots on either side."""
    num_knots = n_basis - degree + 1
    if num_knots < 2:
        raise InvalidArgument("the basis size must exceed the spline degree")
    dx = (high - low) / (num_knots - 1)
    inner = np.linspace(low, high, num_knots)
    return np.concatenate(
        (
            np.linspace(low - degree * dx, low - dx, degree),
            inner,
            np.linspace(high + dx, high + degree * dx, degree),
        )
    )


def spline_basis(
    x: npt.ArrayLike, knots: FloatArray, degree: int = SPLINE_DEGREE
) -> FloatArray:
    """Dense B-spline design matrix of x for the given knots."""
    return BSpline.design_matrix(np.asarray(x, dtype=float), knots, degree).toarray()


def difference_penalty(n_basis: int, order: int) -> FloatArray:
    """D^T D for the order-th difference matrix D."""
    diff = np.diff(np.eye(n_basis), n=order, axis=0)
    return diff.T @ diff


def lambda_candidates(gram: FloatArray, penalty: FloatArray) -> FloatArray:
    """Log spaced smoothing parameters scaled to the data and penalty magnitudes."""
    scale = np.trace(gram) / np.trace(penalty)
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    low, high = LAMBDA_GRID_DECADES
    return scale * np.logspace(low, high, LAMBDA_GRID_SIZE)


@dataclasses.dataclass
class _Candidate:
    lam: float
    coef: FloatArray
    rss: float
    edf: float
    logdet: float
    roughness: float


def _solve_candidate(
    gram: FloatArray,
    rhs: FloatArray,
    penalty: FloatArray,
    lam: float,
    rss: Callable[[FloatArray], float],
) -> _Candidate:
    factor = cho_factor(gram + lam * penalty, lower=True)
    coef = cho_solve(factor, rhs)
    edf = float(np.trace(cho_solve(factor, gram)))
    logdet = float(2 * np.sum(np.log(np.diag(factor[0]))))
    roughness = float(np.sum(coef * (penalty @ coef)))
    return _Candidate(
        lam=lam,
        coef=coef,
        rss=max(rss(coef), 0.0),
        edf=edf,
        logdet=logdet,
        roughness=roughness,
    )


def _criterion(
    rule: LambdaRule,
    candidate: _Candidate,
    n_obs: int,
    n_curves: int,
    n_coef: int,
    null_dim: int,
) -> float:
    if rule is LambdaRule.GCV:
        resid_df = n_obs - n_curves * candidate.edf
        if resid_df <= 0:
            return np.inf
        return n_obs * candidate.rss / resid_df**2
    tiny = np.finfo(float).tiny
    penalized = max(candidate.rss + candidate.lam * candidate.roughness, tiny)
    return (
        (n_obs - n_curves * null_dim) * np.log(penalized)
        + n_curves * candidate.logdet
        - n_curves * (n_coef - null_dim) * np.log(candidate.lam)
    )


def penalized_fit(
    gram: FloatArray,
    rhs: FloatArray,
    penalty: FloatArray,
    rss: Callable[[FloatArray], float],
    cfg: SmootherConfig,
    *,
    n_obs: int,
    n_curves: int = 1,
    null_dim: int,
) -> tuple[FloatArray, SmoothingResult]:
    """Solve (G + lam P) c = r with lam chosen by cfg.lambda_rule.

    rss(c) returns the residual sum of squares of coefficients c. Candidates are scanned
    in increasing order of lam and the first minimizer of the criterion wins.
    """
    if cfg.lambda_rule is LambdaRule.FIXED:
        assert cfg.lambda_value is not None
        try:
            chosen = _solve_candidate(gram, rhs, penalty, cfg.lambda_value, rss)
        except LinAlgError as err:
            raise InsufficientData(
                f"penalized normal equations are singular at lambda={cfg.lambda_value}"
            ) from err
        return chosen.coef, SmoothingResult(
            lam=chosen.lam, rule=cfg.lambda_rule, criterion=float("nan"), edf=chosen.edf
        )

    best: _Candidate | None = None
    best_score = np.inf
    for lam in lambda_candidates(gram, penalty):
        try:
            candidate = _solve_candidate(gram, rhs, penalty, float(lam), rss)
        except LinAlgError:
            continue
        score = _criterion(
            cfg.lambda_rule, candidate, n_obs, n_curves, gram.shape[0], null_dim
        )
        if best is None or score < best_score:
            best, best_score = candidate, score
    if best is None:
        raise InsufficientData("no smoothing parameter gives a solvable system")
    _LOGGER.debug(
        "%s selected lambda=%.6g (edf %.3f, criterion %.6g)",
        cfg.lambda_rule.value,
        best.lam,
        best.edf,
        best_score,
    )
    return best.coef, SmoothingResult(
        lam=best.lam, rule=cfg.lambda_rule, criterion=float(best_score), edf=best.edf
    )


def _curve_system(
    x: FloatArray, y: FloatArray, grid: SampledGrid, n_basis: int
) -> tuple[FloatArray, FloatArray, FloatArray, FloatArray, FloatArray]:
    """Collapse repeated abscissae into weighted sufficient statistics.

    Returns the basis at the unique abscissae, their counts, the mean response per
    abscissa (one column per curve), the within-abscissa sum of squares per curve and
    the basis on the grid.
    """
    low = min(float(x.min()), float(grid.points[0]))
    high = max(float(x.max()), float(grid.points[-1]))
    knots = spline_knots(low, high, n_basis)
    unique, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    sums = np.zeros((unique.size, y.shape[1]))
    np.add.at(sums, inverse, y)
    means = sums / counts[:, np.newaxis]
    within_ss = np.sum((y - means[inverse]) ** 2, axis=0)
    return (
        spline_basis(unique, knots),
        counts.astype(float),
        means,
        within_ss,
        spline_basis(grid.points, knots),
    )


def _fit_curves(
    x: FloatArray, y: FloatArray, grid: SampledGrid, cfg: SmootherConfig
) -> tuple[FloatArray, SmoothingResult]:
    """Fit every column of y against x with one shared smoothing parameter."""
    cfg = cfg.resolve(len(grid))
    assert cfg.n_basis is not None
    distinct = np.unique(x).size
    if distinct < cfg.n_basis:
        raise InsufficientData(
            f"{distinct} distinct points cannot support {cfg.n_basis} basis functions"
        )
    basis, counts, means, within_ss, grid_basis = _curve_system(x, y, grid, cfg.n_basis)
    weighted = basis * counts[:, np.newaxis]
    gram = basis.T @ weighted
    rhs = weighted.T @ means
    penalty = difference_penalty(cfg.n_basis, cfg.penalty_order)

    def rss(coef: FloatArray) -> float:
        resid = means - basis @ coef
        return float(np.sum(counts[:, np.newaxis] * resid**2) + within_ss.sum())

    coef, result = penalized_fit(
        gram,
        rhs,
        penalty,
        rss,
        cfg,
        n_obs=y.size,
        n_curves=y.shape[1],
        null_dim=cfg.penalty_order,
    )
    return grid_basis @ coef, result


def fit_curve(
    data: Curve | PointCloud, cfg: SmootherConfig | None = None
) -> tuple[Curve, SmoothingResult]:
    """Penalized spline fit of a curve or a pooled point cloud on the grid."""
    cfg = cfg or SmootherConfig()
    if isinstance(data, Curve):
        grid, x, y = data.grid, data.grid.points, data.values
    else:
        grid, x, y = data.grid, data.x, data.y
    fitted, result = _fit_curves(x, y[:, np.newaxis], grid, cfg)
    return Curve(grid=grid, values=fitted[:, 0]), result


def smooth_mean(data: Curve | PointCloud, cfg: SmootherConfig | None = None) -> Curve:
    """Smooth a mean curve from one curve or a pooled point cloud."""
    return fit_curve(data, cfg)[0]


def smooth_curves(
    sample: MultilevelSample, cfg: SmootherConfig | None = None
) -> tuple[MultilevelSample, SmoothingResult]:
    """Smooth every observed curve with one smoothing parameter for the whole sample."""
    cfg = cfg or SmootherConfig()
    present = sample.values[sample.mask]
    fitted, result = _fit_curves(sample.grid.points, present.T, sample.grid, cfg)
    values = np.zeros_like(sample.values)
    values[sample.mask] = fitted.T
    _LOGGER.debug(
        "Pre-smoothed %d curves with lambda=%.6g", present.shape[0], result.lam
    )
    return sample.with_values(values), result


def fit_surface(
    surface: npt.ArrayLike,
    grid: SampledGrid,
    drop_diagonal: bool,
    cfg: SmootherConfig | None = None,
) -> tuple[FloatArray, SmoothingResult]:
    """Tensor product P-spline fit of a covariance surface.

    With drop_diagonal the entries G(t, t) are left out of the fit and the returned
    diagonal holds predictions of the smooth surface.
    """
    matrix = np.asarray(surface, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"covariance surface must be square, got {matrix.shape}")
    if matrix.shape[0] != len(grid):
        raise ShapeError(
            f"surface of size {matrix.shape[0]} does not match {len(grid)} grid points"
        )
    cfg = (cfg or SmootherConfig()).resolve(len(grid))
    assert cfg.surface_n_basis is not None
    size = cfg.surface_n_basis
    knots = spline_knots(grid.points[0], grid.points[-1], size)
    basis = spline_basis(grid.points, knots)
    cross = basis.T @ basis
    gram = np.kron(cross, cross)
    rhs = (basis.T @ matrix @ basis).ravel()
    n_obs = matrix.size
    if drop_diagonal:
        rows = np.einsum("sa,sb->sab", basis, basis).reshape(len(grid), size * size)
        gram = gram - rows.T @ rows
        rhs = rhs - rows.T @ np.diag(matrix)
        n_obs -= len(grid)
    identity = np.eye(size)
    one_axis = difference_penalty(size, cfg.penalty_order)
    penalty = np.kron(one_axis, identity) + np.kron(identity, one_axis)
    off_diagonal = ~np.eye(len(grid), dtype=bool) if drop_diagonal else None

    def rss(coef: FloatArray) -> float:
        resid = matrix - basis @ coef.reshape(size, size) @ basis.T
        if off_diagonal is not None:
            resid = resid[off_diagonal]
        return float(np.sum(resid**2))

    coef, result = penalized_fit(
        gram, rhs, penalty, rss, cfg, n_obs=n_obs, null_dim=cfg.penalty_order**2
    )
    fitted = basis @ coef.reshape(size, size) @ basis.T
    return symmetrize(fitted), result


def smooth_surface(
    surface: npt.ArrayLike,
    grid: SampledGrid,
    drop_diagonal: bool,
    cfg: SmootherConfig | None = None,
) -> FloatArray:
    """Smoothed, exactly symmetric version of a covariance surface."""
    return fit_surface(surface, grid, drop_diagonal, cfg)[0]


def estimate_sigma2(
    raw_total: npt.ArrayLike, smoothed_total: npt.ArrayLike, grid: SampledGrid
) -> float:
    """Noise variance from the gap between the raw and smoothed diagonals.

    The quadrature integral of the gap is divided by the grid span; negative values are
    clamped to zero with a warning.
    """
    raw = np.asarray(raw_total, dtype=float)
    smoothed = np.asarray(smoothed_total, dtype=float)
    if raw.shape != smoothed.shape or raw.shape != (len(grid), len(grid)):
        raise ShapeError(
            f"surfaces of shape {raw.shape} and {smoothed.shape} "
            f"on a grid of {len(grid)}"
        )
    gap = np.diag(raw) - np.diag(smoothed)
    sigma2 = float(np.sum(grid.weights * gap)) / grid.span
    if sigma2 < 0:
        _LOGGER.warning(
            "Estimated noise variance %.3g is negative, clamping it to 0", sigma2
        )
        return 0.0
    return sigma2


def smooth_covariances(
    raw: RawCov, grid: SampledGrid, cfg: SmootherConfig | None = None
) -> SmoothedCov:
    """Smooth G_T without its diagonal and G_B in full, then estimate sigma^2."""
    if raw.total.shape[0] != len(grid):
        raise ShapeError("raw covariance does not match the grid")
    total = smooth_surface(raw.total, grid, drop_diagonal=True, cfg=cfg)
    between = smooth_surface(raw.between, grid, drop_diagonal=False, cfg=cfg)
    sigma2 = estimate_sigma2(raw.total, total, grid)
    _LOGGER.debug("Estimated noise variance %.6g", sigma2)
    return SmoothedCov(total=total, between=between, sigma2=sigma2)


def smooth_means_of(
    sample: MultilevelSample, cfg: SmootherConfig | None = None
) -> tuple[Curve, tuple[Curve, ...]]:
    """Smoothed overall mean and visit shifts.

    The overall mean is fitted to the pooled observations; each visit mean is fitted
    separately and the smoothed overall mean subtracted from it.
    """
    grid = sample.grid
    present = sample.values[sample.mask]
    x = np.tile(grid.points, present.shape[0])
    cloud = PointCloud(x=x, y=present.ravel(), grid=grid)
    mu = smooth_mean(cloud, cfg)
    eta = []
    for visit in range(sample.n_visits):
        observed = sample.values[sample.mask[:, visit], visit]
        if observed.shape[0] == 0:
            raise EmptyVisit(f"visit {sample.visit_ids[visit]} has no observed curve")
        visit_mean = smooth_mean(Curve(grid=grid, values=observed.mean(axis=0)), cfg)
        eta.append(Curve(grid=grid, values=visit_mean.values - mu.values))
    return mu, tuple(eta)
