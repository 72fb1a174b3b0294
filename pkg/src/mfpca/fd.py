"""Grids, curves and multilevel samples of functional data."""
from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Iterator, Sequence
from typing import Callable

import numpy as np
import numpy.typing as npt

from .exceptions import GridMismatch, InsufficientData, InvalidArgument, ShapeError

_LOGGER = logging.getLogger(__name__)

FloatArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]


def _frozen(array: npt.ArrayLike, dtype: type = float) -> npt.NDArray[np.generic]:
    """Return a read-only private copy of the array."""
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def trapezoid_weights(points: npt.ArrayLike) -> FloatArray:
    """Return trapezoid rule weights for (possibly non-uniform) points."""
    t = np.asarray(points, dtype=float)
    gaps = np.diff(t)
    weights = np.zeros_like(t)
    weights[:-1] += gaps / 2
    weights[1:] += gaps / 2
    return weights


@dataclasses.dataclass(frozen=True, eq=False)
class SampledGrid:
    """Ordered evaluation points in [0, 1] with their quadrature weights."""

    points: FloatArray
    weights: FloatArray

    def __post_init__(self) -> None:
        points = _frozen(self.points)
        weights = _frozen(self.weights)
        if points.ndim != 1 or points.size < 2:
            raise InvalidArgument("a grid needs at least 2 points")
        if weights.shape != points.shape:
            raise ShapeError(
                f"grid has {points.size} points but {weights.size} weights"
            )
        if not np.all(np.isfinite(points)) or np.any(np.diff(points) <= 0):
            raise InvalidArgument("grid points must be finite and strictly increasing")
        if points[0] < 0 or points[-1] > 1:
            raise InvalidArgument("grid points must lie in [0, 1]")
        if np.any(weights <= 0):
            raise InvalidArgument("quadrature weights must be positive")
        span = points[-1] - points[0]
        if not np.isclose(weights.sum(), span, rtol=1e-10, atol=1e-12):
            raise InvalidArgument(
                f"quadrature weights sum to {weights.sum()}, expected {span}"
            )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_points(cls, points: npt.ArrayLike) -> SampledGrid:
        """Build a grid with trapezoid weights."""
        points = np.asarray(points, dtype=float)
        return cls(points=points, weights=trapezoid_weights(points))

    @classmethod
    def uniform(cls, size: int, low: float = 0.0, high: float = 1.0) -> SampledGrid:
        """Equally spaced grid on [low, high]."""
        return cls.from_points(np.linspace(low, high, size))

    def __len__(self) -> int:
        return int(self.points.size)

    @property
    def span(self) -> float:
        return float(self.points[-1] - self.points[0])

    def matches(self, other: SampledGrid) -> bool:
        """Return True if both grids have identical points and weights."""
        if self is other:
            return True
        return bool(
            np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )


def check_same_grid(first: SampledGrid, second: SampledGrid) -> None:
    """Raise GridMismatch unless the two grids are identical."""
    if not first.matches(second):
        raise GridMismatch(
            f"grids differ ({len(first)} points on "
            f"[{first.points[0]}, {first.points[-1]}] vs {len(second)} points on "
            f"[{second.points[0]}, {second.points[-1]}])"
        )


@dataclasses.dataclass(frozen=True, eq=False)
class Curve:
    """A function sampled on a grid."""

    grid: SampledGrid
    values: FloatArray

    def __post_init__(self) -> None:
        values = _frozen(self.values)
        if values.shape != (len(self.grid),):
            raise ShapeError(
                f"curve has {values.size} values for a grid of {len(self.grid)} points"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("curve values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(
        cls, grid: SampledGrid, func: Callable[[FloatArray], npt.ArrayLike]
    ) -> Curve:
        """Sample func on the grid points."""
        values = np.asarray(func(grid.points), dtype=float)
        return cls(grid=grid, values=np.broadcast_to(values, grid.points.shape))

    @classmethod
    def zeros(cls, grid: SampledGrid) -> Curve:
        return cls(grid=grid, values=np.zeros(len(grid)))

    def __len__(self) -> int:
        return int(self.values.size)


def inner_product(f: Curve, g: Curve) -> float:
    """Return the quadrature approximation of the L2 inner product of f and g.

    The weighted products are summed in ascending grid order with exact rounding,
    so the result does not depend on array layout or thread count.
    """
    check_same_grid(f.grid, g.grid)
    return math.fsum((f.grid.weights * f.values * g.values).tolist())


def norm(f: Curve) -> float:
    return float(np.sqrt(inner_product(f, f)))


def project_values(
    values: npt.ArrayLike, functions: FloatArray, grid: SampledGrid
) -> FloatArray:
    """Inner products of every row of values with every row of functions.

    values has shape (..., T) and functions (K, T); the result has shape (..., K).
    """
    values = np.asarray(values, dtype=float)
    functions = np.asarray(functions, dtype=float)
    if values.shape[-1] != len(grid) or functions.shape[-1] != len(grid):
        raise GridMismatch("values and functions must be sampled on the grid")
    return values @ (functions * grid.weights).T


@dataclasses.dataclass(frozen=True, eq=False)
class MultilevelSample:
    """Curves Y_ij observed for subjects i and visits j on one shared grid.

    values has shape (I, J, T); mask[i, j] tells whether visit j of subject i was
    observed. Entries of absent curves are stored as zeros and never read.

    Construction does not require repeated visits. The need for at least one subject
    with two observed visits is checked where the within-subject covariance is
    estimated: `estimate_raw_cov` raises `NoWithinPairs` without one, and
    `has_within_pairs` reports it up front.
    """

    grid: SampledGrid
    values: FloatArray
    mask: BoolArray
    subject_ids: tuple[str, ...] = ()
    visit_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 3:
            raise ShapeError("sample values must have shape (subjects, visits, points)")
        n_subjects, n_visits, n_points = values.shape
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != (n_subjects, n_visits):
            raise ShapeError(
                f"mask shape {mask.shape} does not match ({n_subjects}, {n_visits})"
            )
        if n_points != len(self.grid):
            raise GridMismatch(
                f"curves have {n_points} points, the grid has {len(self.grid)}"
            )
        if n_subjects < 2:
            raise InsufficientData("a multilevel sample needs at least 2 subjects")
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            raise InsufficientData(f"subject {int(empty[0])} has no observed visit")
        if not np.all(np.isfinite(values[mask])):
            raise InvalidArgument("observed curve values must be finite")
        values[~mask] = 0.0
        subject_ids = tuple(self.subject_ids) or tuple(
            str(i + 1) for i in range(n_subjects)
        )
        visit_ids = tuple(self.visit_ids) or tuple(str(j + 1) for j in range(n_visits))
        if len(subject_ids) != n_subjects or len(visit_ids) != n_visits:
            raise ShapeError("subject and visit labels must match the sample shape")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask, dtype=bool))
        object.__setattr__(self, "subject_ids", subject_ids)
        object.__setattr__(self, "visit_ids", visit_ids)

    @property
    def n_subjects(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_visits(self) -> int:
        return int(self.values.shape[1])

    @property
    def n_points(self) -> int:
        return int(self.values.shape[2])

    @property
    def n_present(self) -> int:
        return int(self.mask.sum())

    @property
    def visits_per_subject(self) -> npt.NDArray[np.int_]:
        return self.mask.sum(axis=1)

    @property
    def has_within_pairs(self) -> bool:
        """True if some subject was observed at two or more visits."""
        return bool(np.any(self.visits_per_subject >= 2))

    @property
    def is_balanced(self) -> bool:
        return bool(self.mask.all())

    def curve(self, subject: int, visit: int) -> Curve:
        if not self.mask[subject, visit]:
            raise KeyError(f"visit {visit} of subject {subject} was not observed")
        return Curve(grid=self.grid, values=self.values[subject, visit])

    def present(self) -> Iterator[tuple[int, int]]:
        """Iterate over observed (subject, visit) index pairs in row-major order."""
        for subject, visit in zip(*np.nonzero(self.mask)):
            yield int(subject), int(visit)

    @property
    def curves(self) -> dict[tuple[int, int], Curve]:
        return {key: self.curve(*key) for key in self.present()}

    def with_values(self, values: npt.ArrayLike) -> MultilevelSample:
        """Same design and labels, new curve values."""
        return MultilevelSample(
            grid=self.grid,
            values=np.asarray(values, dtype=float),
            mask=self.mask,
            subject_ids=self.subject_ids,
            visit_ids=self.visit_ids,
        )


def center(
    sample: MultilevelSample, mu: Curve, eta: Sequence[Curve]
) -> MultilevelSample:
    """Subtract the overall mean and the visit shifts from every observed curve."""
    check_same_grid(sample.grid, mu.grid)
    if len(eta) != sample.n_visits:
        raise ShapeError(f"expected {sample.n_visits} visit shifts, got {len(eta)}")
    for shift in eta:
        check_same_grid(sample.grid, shift.grid)
    shifts = np.stack([shift.values for shift in eta])
    centered = sample.values - mu.values - shifts[np.newaxis, :, :]
    return sample.with_values(np.where(sample.mask[:, :, np.newaxis], centered, 0.0))
