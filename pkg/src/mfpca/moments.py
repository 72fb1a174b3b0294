"""Method of moments estimators of the mean structure and raw covariances."""
from __future__ import annotations

import dataclasses
import logging

import numpy as np

from .exceptions import AsymmetricInput, EmptyVisit, NoWithinPairs, ShapeError
from .fd import Curve, FloatArray, MultilevelSample, SampledGrid, center

_LOGGER = logging.getLogger(__name__)


def symmetrize(matrix: FloatArray) -> FloatArray:
    """Return (M + M^T) / 2."""
    return (matrix + matrix.T) / 2


@dataclasses.dataclass(frozen=True, eq=False)
class MeanEstimate:
    """Overall mean curve and one shift curve per visit."""

    mu: Curve
    eta: tuple[Curve, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "eta", tuple(self.eta))
        for shift in self.eta:
            if not shift.grid.matches(self.mu.grid):
                raise ShapeError("visit shifts must share the grid of the mean")

    @property
    def grid(self) -> SampledGrid:
        return self.mu.grid

    @property
    def n_visits(self) -> int:
        return len(self.eta)

    def visit_mean(self, visit: int) -> FloatArray:
        """mu + eta_j on the grid."""
        return self.mu.values + self.eta[visit].values

    def as_matrix(self) -> FloatArray:
        """Stack mu + eta_j for every visit into a (J, T) array."""
        shifts = np.stack([shift.values for shift in self.eta])
        return self.mu.values[np.newaxis, :] + shifts


@dataclasses.dataclass(frozen=True, eq=False)
class RawCov:
    """Moment estimates of the total and between-visit covariance surfaces."""

    total: FloatArray
    between: FloatArray

    def __post_init__(self) -> None:
        total = np.array(self.total, dtype=float)
        between = np.array(self.between, dtype=float)
        if total.ndim != 2 or total.shape[0] != total.shape[1]:
            raise ShapeError(f"covariance surface must be square, got {total.shape}")
        if between.shape != total.shape:
            raise ShapeError(
                f"total {total.shape} and between {between.shape} differ in shape"
            )
        for name, matrix in (("total", total), ("between", between)):
            tol = 1e-12 * max(1.0, np.abs(matrix).max())
            if not np.allclose(matrix, matrix.T, rtol=0, atol=tol):
                raise AsymmetricInput(f"{name} covariance is not symmetric")
        total.setflags(write=False)
        between.setflags(write=False)
        object.__setattr__(self, "total", total)
        object.__setattr__(self, "between", between)


def estimate_means(sample: MultilevelSample) -> MeanEstimate:
    """Pointwise averages over observed curves.

    The overall mean pools every observed curve; the shift of visit j is the average
    over subjects observed at visit j minus the overall mean.
    """
    mask = sample.mask
    values = sample.values
    mu = values[mask].sum(axis=0) / sample.n_present
    counts = mask.sum(axis=0)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise EmptyVisit(f"visit {sample.visit_ids[empty[0]]} has no observed curve")
    # absent entries are stored as zeros, sums over subjects only see present ones
    visit_means = values.sum(axis=0) / counts[:, np.newaxis]
    eta = tuple(Curve(grid=sample.grid, values=row - mu) for row in visit_means)
    _LOGGER.debug(
        "Estimated means from %d curves over %d visits",
        sample.n_present,
        sample.n_visits,
    )
    return MeanEstimate(mu=Curve(grid=sample.grid, values=mu), eta=eta)


def estimate_raw_cov(sample: MultilevelSample, means: MeanEstimate) -> RawCov:
    """Moment estimates of G_T and G_B from the centered curves.

    G_T averages the outer products of every observed centered curve with itself, G_B
    averages the cross products of every pair of distinct visits within a subject.
    Divisors count observed curves and observed pairs only.
    """
    visits = sample.visits_per_subject
    n_pairs = int(np.sum(visits * (visits - 1) // 2))
    if n_pairs == 0:
        raise NoWithinPairs("no subject was observed at two or more visits")
    residuals = center(sample, means.mu, means.eta).values
    flat = residuals.reshape(-1, sample.n_points)
    within = flat.T @ flat
    subject_sums = residuals.sum(axis=1)
    cross = subject_sums.T @ subject_sums - within
    total = symmetrize(within / sample.n_present)
    between = symmetrize(cross / (2 * n_pairs))
    _LOGGER.debug(
        "Raw covariances from %d curves and %d within-subject pairs",
        sample.n_present,
        n_pairs,
    )
    return RawCov(total=total, between=between)
