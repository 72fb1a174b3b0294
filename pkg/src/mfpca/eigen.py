"""Eigenanalysis of covariance operators and the two-level MFPCA pipeline."""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy import linalg

from .const import DEFAULT_P1, EIGEN_RELATIVE_TOL, SYMMETRY_TOL, SelectionRule
from .exceptions import (
    AsymmetricInput,
    GridMismatch,
    InvalidArgument,
    NoVariance,
    ShapeError,
)
from .fd import BoolArray, Curve, FloatArray, MultilevelSample, SampledGrid
from .moments import MeanEstimate, estimate_means, estimate_raw_cov, symmetrize
from .smooth import (
    SmoothedCov,
    SmootherConfig,
    smooth_covariances,
    smooth_curves,
    smooth_means_of,
)

_LOGGER = logging.getLogger(__name__)

# |<phi, 1>| below this counts as a tie in the sign convention
_SIGN_TIE_TOL = 1e-8
# cumulative proportions within this of P1 count as reaching it
_CUMULATIVE_TOL = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class EigenSystem:
    """Positive eigenvalues (descending) and L2-orthonormal eigenfunctions of one level.

    functions has one row per eigenvalue; the first n_selected pairs are retained.
    """

    level: int
    eigenvalues: FloatArray
    functions: FloatArray
    grid: SampledGrid
    n_selected: int

    def __post_init__(self) -> None:
        values = np.array(self.eigenvalues, dtype=float).reshape(-1)
        functions = np.array(self.functions, dtype=float)
        functions = functions.reshape(values.size, len(self.grid))
        if self.level not in (1, 2):
            raise InvalidArgument(f"level must be 1 or 2, got {self.level}")
        if np.any(values < 0) or np.any(np.diff(values) > 0):
            raise InvalidArgument("eigenvalues must be nonnegative and descending")
        if not 0 <= self.n_selected <= int(np.count_nonzero(values > 0)):
            raise InvalidArgument(
                f"cannot select {self.n_selected} of {np.count_nonzero(values > 0)} "
                "positive eigenvalues"
            )
        values.setflags(write=False)
        functions.setflags(write=False)
        object.__setattr__(self, "eigenvalues", values)
        object.__setattr__(self, "functions", functions)

    @property
    def n_components(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def selected_values(self) -> FloatArray:
        return self.eigenvalues[: self.n_selected]

    @property
    def selected_functions(self) -> FloatArray:
        return self.functions[: self.n_selected]

    @property
    def curves(self) -> tuple[Curve, ...]:
        return tuple(Curve(grid=self.grid, values=row) for row in self.functions)

    @property
    def proportions(self) -> FloatArray:
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    @property
    def cumulative(self) -> FloatArray:
        return np.cumsum(self.proportions)

    @property
    def explained(self) -> pd.DataFrame:
        """Per-component eigenvalue, proportion and cumulative proportion."""
        return pd.DataFrame(
            {
                "index": np.arange(1, self.n_components + 1),
                "eigenvalue": self.eigenvalues,
                "proportion": self.proportions,
                "cumulative": self.cumulative,
            }
        )

    def covariance(self, n_components: int | None = None) -> FloatArray:
        """Mercer sum of lambda_k phi_k phi_k^T over the leading components."""
        count = self.n_selected if n_components is None else n_components
        phi = self.functions[:count]
        return (phi.T * self.eigenvalues[:count]) @ phi

    def with_selection(self, n_selected: int) -> EigenSystem:
        return dataclasses.replace(self, n_selected=n_selected)


def _orient(functions: FloatArray, weights: FloatArray) -> FloatArray:
    """Flip rows to a nonnegative integral, ties broken by the first nonzero entry."""
    oriented = functions.copy()
    for row in oriented:
        integral = float(np.sum(weights * row))
        if abs(integral) <= _SIGN_TIE_TOL:
            nonzero = np.flatnonzero(np.abs(row) > _SIGN_TIE_TOL * np.abs(row).max())
            flip = nonzero.size > 0 and row[nonzero[0]] < 0
        else:
            flip = integral < 0
        if flip:
            row *= -1
    return oriented


def eigendecompose(
    surface: npt.ArrayLike, grid: SampledGrid, *, level: int = 1, atol: float = 0.0
) -> EigenSystem:
    """Operator eigenpairs of a covariance surface under the grid quadrature.

    Solves the symmetric problem W^(1/2) K W^(1/2) v = lambda v and returns
    phi = W^(-1/2) v, so that sum_s w_s phi_k(s) phi_l(s) = delta_kl. Pairs with an
    eigenvalue <= atol are trimmed. All retained pairs start out selected.
    """
    matrix = np.asarray(surface, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ShapeError(f"covariance surface must be square, got {matrix.shape}")
    if matrix.shape[0] != len(grid):
        raise ShapeError(
            f"surface of size {matrix.shape[0]} does not match {len(grid)} grid points"
        )
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    if np.abs(matrix - matrix.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise AsymmetricInput("covariance surface is not symmetric")
    root = np.sqrt(grid.weights)
    weighted = symmetrize(root[:, np.newaxis] * matrix * root[np.newaxis, :])
    values, vectors = linalg.eigh(weighted)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    keep = values > atol
    if not np.all(keep):
        _LOGGER.debug(
            "Level %d: trimmed %d eigenpairs with eigenvalue <= %.3g",
            level,
            int(np.count_nonzero(~keep)),
            atol,
        )
    values = values[keep]
    functions = _orient(vectors[:, keep].T / root[np.newaxis, :], grid.weights)
    return EigenSystem(
        level=level,
        eigenvalues=values,
        functions=functions,
        grid=grid,
        n_selected=int(values.size),
    )


def select_ncomp(
    eigenvalues: Sequence[float] | FloatArray,
    n_points: int,
    p1: float = DEFAULT_P1,
    p2: float | None = None,
    rule: SelectionRule = SelectionRule.EITHER,
) -> int:
    """Number of components to retain by the cumulative and individual thresholds.

    With the EITHER rule the count is the smallest k whose cumulative proportion reaches
    p1 or whose own proportion falls below p2 (default 1/n_points). The BOTH rule needs
    the two conditions at once and falls back to the cumulative threshold alone when no
    k satisfies both.
    """
    values = np.asarray(eigenvalues, dtype=float)
    if not 0 < p1 <= 1:
        raise InvalidArgument(f"P1 must be in (0, 1], got {p1}")
    if p2 is None:
        p2 = 1.0 / n_points
    if p2 < 0:
        raise InvalidArgument(f"P2 must be nonnegative, got {p2}")
    if np.any(values < 0):
        raise InvalidArgument("eigenvalues must be nonnegative")
    total = values.sum()
    if values.size == 0 or total <= 0:
        raise NoVariance("all eigenvalues are zero")
    n_positive = int(np.count_nonzero(values > 0))
    proportions = values / total
    reached = np.cumsum(proportions) >= p1 - _CUMULATIVE_TOL
    negligible = proportions < p2
    rule = SelectionRule(rule)
    if rule is SelectionRule.EITHER:
        hits = np.flatnonzero(reached | negligible)
    else:
        hits = np.flatnonzero(reached & negligible)
        if hits.size == 0:
            _LOGGER.warning(
                "No component meets both thresholds (P1=%s, P2=%s), "
                "using the cumulative threshold alone",
                p1,
                p2,
            )
            hits = np.flatnonzero(reached)
    count = int(hits[0]) + 1 if hits.size else values.size
    return min(count, n_positive)


def rho_w(
    level1: Sequence[float] | FloatArray, level2: Sequence[float] | FloatArray
) -> float:
    """Share of the total functional variance explained at the subject level."""
    first = np.asarray(level1, dtype=float)
    second = np.asarray(level2, dtype=float)
    if np.any(first < 0) or np.any(second < 0):
        raise InvalidArgument("eigenvalues must be nonnegative")
    between, within = float(first.sum()), float(second.sum())
    if between + within <= 0:
        raise NoVariance("both levels have zero variance")
    return between / (between + within)


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """Options of fit_mfpca.

    smooth runs the smoothed pipeline (mean curves, covariance surfaces, noise
    variance); presmooth smooths every curve before anything else. n_components
    fixes the number of retained components per level, None keeps the threshold rule.
    """

    smooth: bool = True
    smoother: SmootherConfig = SmootherConfig()
    p1: float = DEFAULT_P1
    p2: float | None = None
    rule: SelectionRule = SelectionRule.EITHER
    n_components: tuple[int | None, int | None] = (None, None)
    presmooth: bool = False
    smooth_means: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "rule", SelectionRule(self.rule))
        object.__setattr__(self, "n_components", tuple(self.n_components))
        if not 0 < self.p1 <= 1:
            raise InvalidArgument(f"P1 must be in (0, 1], got {self.p1}")
        if self.p2 is not None and not 0 <= self.p2 <= 1:
            raise InvalidArgument(f"P2 must be in [0, 1], got {self.p2}")
        if len(self.n_components) != 2:
            raise InvalidArgument("n_components needs one entry per level")
        for count in self.n_components:
            if count is not None and count < 0:
                raise InvalidArgument("component counts must be nonnegative")

    def as_dict(self) -> dict[str, object]:
        return {
            "smooth": self.smooth,
            "smoother": self.smoother.as_dict(),
            "p1": self.p1,
            "p2": self.p2,
            "rule": self.rule.value,
            "n_components": list(self.n_components),
            "presmooth": self.presmooth,
            "smooth_means": self.smooth_means,
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> PipelineConfig:
        """Inverse of as_dict."""
        values = dict(data)
        smoother = values.pop("smoother", None) or {}
        assert isinstance(smoother, dict)
        smoother_cfg = SmootherConfig(**smoother)
        return cls(smoother=smoother_cfg, **values)  # type: ignore[arg-type]


@dataclasses.dataclass(frozen=True, eq=False)
class MfpcaFit:
    """Everything the two-level decomposition estimates from one sample."""

    means: MeanEstimate
    level1: EigenSystem
    level2: EigenSystem
    sigma2: float
    rho_w: float
    cov: SmoothedCov
    mask: BoolArray
    subject_ids: tuple[str, ...]
    visit_ids: tuple[str, ...]
    config: PipelineConfig = PipelineConfig()

    @property
    def grid(self) -> SampledGrid:
        return self.means.grid

    @property
    def n_subjects(self) -> int:
        return int(self.mask.shape[0])

    @property
    def n_visits(self) -> int:
        return int(self.mask.shape[1])


def _select(
    system: EigenSystem, n_points: int, cfg: PipelineConfig, requested: int | None
) -> EigenSystem:
    positive = int(np.count_nonzero(system.eigenvalues > 0))
    if requested is not None:
        if requested > positive:
            _LOGGER.warning(
                "Level %d: %d components requested, %d eigenvalues are positive",
                system.level,
                requested,
                positive,
            )
        return system.with_selection(min(requested, positive))
    if positive == 0:
        _LOGGER.warning("Level %d has no positive eigenvalue", system.level)
        return system.with_selection(0)
    count = select_ncomp(system.eigenvalues, n_points, cfg.p1, cfg.p2, cfg.rule)
    return system.with_selection(count)


def _presmooth(
    sample: MultilevelSample, cfg: PipelineConfig
) -> tuple[MultilevelSample, float]:
    smoothed, _ = smooth_curves(sample, cfg.smoother)
    resid = (sample.values - smoothed.values)[sample.mask]
    sigma2 = float(np.mean(resid**2 @ sample.grid.weights)) / sample.grid.span
    return smoothed, sigma2


def fit_mfpca(sample: MultilevelSample, cfg: PipelineConfig | None = None) -> MfpcaFit:
    """Estimate means, level covariances, eigen systems and rho_W from a sample."""
    cfg = cfg or PipelineConfig()
    work = sample
    sigma2 = 0.0
    if cfg.presmooth:
        work, sigma2 = _presmooth(sample, cfg)
        _LOGGER.debug("Pre-smoothing residual variance %.6g", sigma2)

    means = estimate_means(work)
    if cfg.smooth and cfg.smooth_means:
        mu, eta = smooth_means_of(work, cfg.smoother)
        means = MeanEstimate(mu=mu, eta=eta)
    raw = estimate_raw_cov(work, means)
    if cfg.smooth:
        cov = smooth_covariances(raw, work.grid, cfg.smoother)
        sigma2 = cov.sigma2
    else:
        cov = SmoothedCov(total=raw.total, between=raw.between, sigma2=sigma2)

    present = work.values[work.mask]
    second_moment = float(np.mean(present**2 @ work.grid.weights))
    atol = EIGEN_RELATIVE_TOL * second_moment
    level1 = eigendecompose(cov.between, work.grid, level=1, atol=atol)
    level2 = eigendecompose(cov.within, work.grid, level=2, atol=atol)
    if level1.n_components == 0 and level2.n_components == 0:
        raise NoVariance("no positive eigenvalue at either level")
    level1 = _select(level1, work.n_points, cfg, cfg.n_components[0])
    level2 = _select(level2, work.n_points, cfg, cfg.n_components[1])
    rho = rho_w(level1.selected_values, level2.selected_values)
    _LOGGER.debug(
        "Retained %d level 1 and %d level 2 components, rho_W=%.4f",
        level1.n_selected,
        level2.n_selected,
        rho,
    )
    return MfpcaFit(
        means=means,
        level1=level1,
        level2=level2,
        sigma2=sigma2,
        rho_w=rho,
        cov=cov,
        mask=sample.mask,
        subject_ids=sample.subject_ids,
        visit_ids=sample.visit_ids,
        config=cfg,
    )


def perturbation_curves(
    mean: Curve, system: EigenSystem, index: int, multiple: float = 2.0
) -> tuple[Curve, Curve]:
    """mean -/+ multiple * sqrt(lambda_k) * phi_k for component index (0-based)."""
    if not 0 <= index < system.n_components:
        raise IndexError(f"component {index} out of range for {system.n_components}")
    if not mean.grid.matches(system.grid):
        raise GridMismatch("mean and eigenfunctions are on different grids")
    shift = multiple * np.sqrt(system.eigenvalues[index]) * system.functions[index]
    return (
        Curve(grid=mean.grid, values=mean.values - shift),
        Curve(grid=mean.grid, values=mean.values + shift),
    )
