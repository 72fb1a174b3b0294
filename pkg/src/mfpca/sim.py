"""Simulated multilevel curves, score accuracy studies and the rho_W bootstrap."""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable, Sequence
from typing import TypeVar

import joblib
import numpy as np
import pandas as pd

from .const import (
    BOOTSTRAP_LEVEL,
    SIM_EIGENVALUES,
    SIM_GRID_SIZE,
    Estimator,
    Hypothesis,
    ScoreMethod,
)
from .eigen import MfpcaFit, PipelineConfig, fit_mfpca
from .exceptions import InvalidArgument, ShapeError
from .fd import Curve, FloatArray, MultilevelSample, SampledGrid
from .sampler import GibbsConfig
from .scores import ScoreSet, estimate_scores

_LOGGER = logging.getLogger(__name__)

_T = TypeVar("_T")


def _fourier(frequency: int, sine: bool) -> Callable[[FloatArray], FloatArray]:
    trig = np.sin if sine else np.cos
    return lambda t: np.sqrt(2) * trig(2 * np.pi * frequency * t)


_LEGENDRE: tuple[Callable[[FloatArray], FloatArray], ...] = (
    lambda t: np.ones_like(t),
    lambda t: np.sqrt(3) * (2 * t - 1),
    lambda t: np.sqrt(5) * (6 * t**2 - 6 * t + 1),
    lambda t: np.sqrt(7) * (20 * t**3 - 30 * t**2 + 12 * t - 1),
)

_FOURIER_LOW = tuple(_fourier(f, sine) for f in (1, 2) for sine in (True, False))
_FOURIER_HIGH = tuple(_fourier(f, sine) for f in (3, 4) for sine in (True, False))

_BASES: dict[tuple[int, int], tuple[Callable[[FloatArray], FloatArray], ...]] = {
    (1, 1): _FOURIER_LOW,
    (1, 2): _FOURIER_HIGH,
    (2, 1): _FOURIER_LOW,
    (2, 2): _LEGENDRE,
}

MAX_SIM_COMPONENTS = 4


def basis(case: int, level: int, k: int, grid: SampledGrid) -> Curve:
    """The k-th (1-based) analytic eigenfunction of a simulation case and level.

    Case 1 uses Fourier functions at disjoint frequencies for the two levels; case 2
    keeps the level 1 functions and uses shifted Legendre polynomials at level 2.
    """
    try:
        functions = _BASES[(case, level)]
    except KeyError:
        raise InvalidArgument(f"unknown simulation case {case} level {level}") from None
    if not 1 <= k <= len(functions):
        raise IndexError(f"basis index {k} out of range 1..{len(functions)}")
    return Curve.from_function(grid, functions[k - 1])


@dataclasses.dataclass(frozen=True)
class SimConfig:
    """Design of one simulated data set.

    Eigenvalues default to 1, 0.5, 0.25, 0.125 at both levels, truncated to the
    requested number of components.
    """

    case: int = 1
    n_subjects: int = 200
    n_visits: int = 2
    n_points: int = SIM_GRID_SIZE
    sigma: float = 0.0
    seed: int = 0
    n_components: tuple[int, int] = (4, 4)
    replicate: int = 0
    lambda1: tuple[float, ...] | None = None
    lambda2: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.case not in (1, 2):
            raise InvalidArgument(f"simulation case must be 1 or 2, got {self.case}")
        if self.n_subjects < 2 or self.n_visits < 1 or self.n_points < 9:
            raise InvalidArgument("need at least 2 subjects, 1 visit and 9 grid points")
        if self.sigma < 0:
            raise InvalidArgument(f"noise sd must be nonnegative, got {self.sigma}")
        object.__setattr__(self, "n_components", tuple(self.n_components))
        for count in self.n_components:
            if not 0 <= count <= MAX_SIM_COMPONENTS:
                raise InvalidArgument(
                    f"component counts must be in 0..{MAX_SIM_COMPONENTS}"
                )
        for name, count in zip(("lambda1", "lambda2"), self.n_components):
            values = getattr(self, name)
            if values is None:
                values = SIM_EIGENVALUES[:count]
            values = tuple(float(value) for value in values)
            if len(values) != count or any(value < 0 for value in values):
                raise InvalidArgument(f"{name} needs {count} nonnegative eigenvalues")
            object.__setattr__(self, name, values)

    @property
    def grid(self) -> SampledGrid:
        return SampledGrid.uniform(self.n_points)

    def as_dict(self) -> dict[str, object]:
        return {
            "case": self.case,
            "n_subjects": self.n_subjects,
            "n_visits": self.n_visits,
            "n_points": self.n_points,
            "sigma": self.sigma,
            "seed": self.seed,
            "n_components": list(self.n_components),
            "lambda1": list(self.lambda1 or ()),
            "lambda2": list(self.lambda2 or ()),
        }


@dataclasses.dataclass(frozen=True, eq=False)
class SimTruth:
    """Scores, eigenvalues and eigenfunctions behind a simulated sample."""

    case: int
    xi: FloatArray
    zeta: FloatArray
    lambda1: FloatArray
    lambda2: FloatArray
    level1: FloatArray
    level2: FloatArray

    @property
    def rho_w(self) -> float:
        total = self.lambda1.sum() + self.lambda2.sum()
        return float(self.lambda1.sum() / total) if total > 0 else float("nan")


def _basis_matrix(case: int, level: int, count: int, grid: SampledGrid) -> FloatArray:
    if count == 0:
        return np.zeros((0, len(grid)))
    return np.stack([basis(case, level, k, grid).values for k in range(1, count + 1)])


def generate(cfg: SimConfig) -> tuple[MultilevelSample, SimTruth]:
    """Draw one balanced sample with zero mean and zero visit shifts.

    Draws come from a generator keyed by (seed, replicate) in a fixed order: level 1
    scores, level 2 scores, then pointwise noise.
    """
    grid = cfg.grid
    n1, n2 = cfg.n_components
    lambda1 = np.asarray(cfg.lambda1, dtype=float)
    lambda2 = np.asarray(cfg.lambda2, dtype=float)
    level1 = _basis_matrix(cfg.case, 1, n1, grid)
    level2 = _basis_matrix(cfg.case, 2, n2, grid)
    rng = np.random.default_rng([cfg.seed, cfg.replicate])
    shape = (cfg.n_subjects, cfg.n_visits)
    xi = rng.standard_normal((cfg.n_subjects, n1)) * np.sqrt(lambda1)
    zeta = rng.standard_normal((*shape, n2)) * np.sqrt(lambda2)
    noise = rng.standard_normal((*shape, cfg.n_points)) * cfg.sigma
    values = (xi @ level1)[:, np.newaxis, :] + zeta @ level2 + noise
    sample = MultilevelSample(grid=grid, values=values, mask=np.ones(shape, dtype=bool))
    truth = SimTruth(
        case=cfg.case,
        xi=xi,
        zeta=zeta,
        lambda1=lambda1,
        lambda2=lambda2,
        level1=level1,
        level2=level2,
    )
    return sample, truth


@dataclasses.dataclass(frozen=True)
class RmseTable:
    """Per-component root mean square errors and the number of units behind each."""

    level1: FloatArray
    level2: FloatArray
    count1: int
    count2: int

    def as_row(self) -> dict[str, float]:
        row = {f"level1_{k + 1}": float(value) for k, value in enumerate(self.level1)}
        for k, value in enumerate(self.level2):
            row[f"level2_{k + 1}"] = float(value)
        return row


def _aligned_rmse(estimate: FloatArray, truth: FloatArray) -> FloatArray:
    """RMSE per component after flipping estimates anti-correlated with the truth."""
    flat_estimate = estimate.reshape(-1, estimate.shape[-1])
    flat_truth = truth.reshape(-1, truth.shape[-1])
    present = ~np.isnan(flat_estimate).any(axis=1)
    flat_estimate, flat_truth = flat_estimate[present], flat_truth[present]
    signs = np.where(np.sum(flat_estimate * flat_truth, axis=0) < 0, -1.0, 1.0)
    return np.sqrt(np.mean((flat_estimate * signs - flat_truth) ** 2, axis=0))


def rmse(estimated: ScoreSet, truth: SimTruth) -> RmseTable:
    """Sign-aligned per-component RMSE of predicted against true scores."""
    if estimated.xi.shape != truth.xi.shape or estimated.zeta.shape != truth.zeta.shape:
        raise ShapeError(
            f"estimated scores {estimated.xi.shape}/{estimated.zeta.shape} "
            f"do not match true scores {truth.xi.shape}/{truth.zeta.shape}"
        )
    present = 0
    if truth.zeta.shape[2]:
        present = int(np.count_nonzero(~np.isnan(estimated.zeta).any(axis=2)))
    return RmseTable(
        level1=_aligned_rmse(estimated.xi, truth.xi),
        level2=_aligned_rmse(estimated.zeta, truth.zeta),
        count1=int(truth.xi.shape[0]),
        count2=present,
    )


def _map(func: Callable[[int], _T], count: int, threads: int) -> list[_T]:
    if threads > 1 and count > 1:
        return joblib.Parallel(n_jobs=threads, prefer="threads")(
            joblib.delayed(func)(index) for index in range(count)
        )
    return [func(index) for index in range(count)]


@dataclasses.dataclass(frozen=True, eq=False)
class StudyResult:
    """Per-replicate RMSE and eigenvalue estimates of a simulation study."""

    replicates: tuple[RmseTable, ...]
    eigenvalues1: FloatArray
    eigenvalues2: FloatArray
    rho: FloatArray

    @property
    def pooled(self) -> RmseTable:
        """RMSE over the squared errors of every replicate."""

        def pool(values: list[FloatArray], counts: list[int]) -> FloatArray:
            weights = np.asarray(counts, dtype=float)[:, np.newaxis]
            return np.sqrt(np.sum(weights * np.square(values), axis=0) / weights.sum())

        tables = self.replicates
        return RmseTable(
            level1=pool(
                [table.level1 for table in tables], [table.count1 for table in tables]
            ),
            level2=pool(
                [table.level2 for table in tables], [table.count2 for table in tables]
            ),
            count1=sum(table.count1 for table in tables),
            count2=sum(table.count2 for table in tables),
        )

    def frame(self) -> pd.DataFrame:
        """One row per replicate plus a final pooled row."""
        rows = [
            {"replicate": str(index), **table.as_row()}
            for index, table in enumerate(self.replicates)
        ]
        rows.append({"replicate": "pooled", **self.pooled.as_row()})
        return pd.DataFrame(rows)


def simulate_study(
    cfg: SimConfig,
    pipeline: PipelineConfig | None = None,
    method: ScoreMethod = ScoreMethod.PCP,
    estimator: Estimator = Estimator.BLUP,
    reps: int = 10,
    *,
    gibbs: GibbsConfig | None = None,
    threads: int = 1,
) -> StudyResult:
    """Generate, fit and score reps replicates of cfg.

    The pipeline retains exactly the simulated number of components at each level so
    scores can be compared with the truth.
    """
    if reps < 1:
        raise InvalidArgument("a study needs at least one replicate")
    pipeline = dataclasses.replace(
        pipeline or PipelineConfig(), n_components=cfg.n_components
    )

    def replicate(index: int) -> tuple[RmseTable, FloatArray, FloatArray, float]:
        sample, truth = generate(dataclasses.replace(cfg, replicate=index))
        fit = fit_mfpca(sample, pipeline)
        scores = estimate_scores(
            sample, fit, method, estimator, gibbs=gibbs, seed=cfg.seed + index
        )
        table = rmse(scores, truth)
        _LOGGER.debug("Replicate %d: level 1 RMSE %s", index, np.round(table.level1, 4))
        return (
            table,
            _padded(fit.level1.eigenvalues, cfg.n_components[0]),
            _padded(fit.level2.eigenvalues, cfg.n_components[1]),
            fit.rho_w,
        )

    results = _map(replicate, reps, threads)
    return StudyResult(
        replicates=tuple(result[0] for result in results),
        eigenvalues1=np.array([result[1] for result in results]),
        eigenvalues2=np.array([result[2] for result in results]),
        rho=np.array([result[3] for result in results]),
    )


def _padded(values: FloatArray, count: int) -> FloatArray:
    out = np.full(count, np.nan)
    out[: min(count, values.size)] = values[:count]
    return out


@dataclasses.dataclass(frozen=True, eq=False)
class BootstrapResult:
    """rho_W of the fit and the percentile interval of its bootstrap replicates."""

    point: float
    low: float
    high: float
    replicates: FloatArray
    hypothesis: Hypothesis
    level: float = BOOTSTRAP_LEVEL

    def as_dict(self) -> dict[str, object]:
        return {
            "point": self.point,
            "ci": [self.low, self.high],
            "level": self.level,
            "hypothesis": self.hypothesis.value,
            "n_boot": int(self.replicates.size),
            "bootstrap_mean": float(np.mean(self.replicates)),
        }


def simulate_from_fit(
    fit: MfpcaFit, hypothesis: Hypothesis, rng: np.random.Generator
) -> MultilevelSample:
    """Draw a sample with the design, means, eigen systems and noise level of fit.

    Under H0 the subject level contributes nothing.
    """
    grid = fit.grid
    mask = np.asarray(fit.mask)
    n_subjects, n_visits = mask.shape
    lambda1 = fit.level1.selected_values
    if Hypothesis(hypothesis) is Hypothesis.H0:
        lambda1 = np.zeros_like(lambda1)
    lambda2 = fit.level2.selected_values
    xi = rng.standard_normal((n_subjects, lambda1.size)) * np.sqrt(lambda1)
    zeta = rng.standard_normal((n_subjects, n_visits, lambda2.size)) * np.sqrt(lambda2)
    noise = rng.standard_normal((n_subjects, n_visits, len(grid))) * np.sqrt(fit.sigma2)
    values = (
        fit.means.as_matrix()[np.newaxis, :, :]
        + (xi @ fit.level1.selected_functions)[:, np.newaxis, :]
        + zeta @ fit.level2.selected_functions
        + noise
    )
    return MultilevelSample(
        grid=grid,
        values=np.where(mask[:, :, np.newaxis], values, 0.0),
        mask=mask,
        subject_ids=fit.subject_ids,
        visit_ids=fit.visit_ids,
    )


def bootstrap_rho(
    fit: MfpcaFit,
    hypothesis: Hypothesis = Hypothesis.H1,
    n_boot: int = 200,
    seed: int = 0,
    *,
    threads: int = 1,
    pipeline: PipelineConfig | None = None,
    level: float = BOOTSTRAP_LEVEL,
) -> BootstrapResult:
    """Parametric bootstrap interval for rho_W.

    Every replicate is drawn from the fitted model (H0 removes the subject level) with a
    generator keyed by (seed, replicate) and refitted with the thresholds of the
    original fit.
    """
    hypothesis = Hypothesis(hypothesis)
    if n_boot < 1:
        raise InvalidArgument("n_boot must be at least 1")
    if not 0 < level < 1:
        raise InvalidArgument(f"confidence level must be in (0, 1), got {level}")
    if fit.level2.n_selected == 0:
        raise InvalidArgument("the fit has no level 2 components to simulate from")
    if hypothesis is Hypothesis.H1 and fit.level1.n_selected == 0:
        raise InvalidArgument("H1 needs at least one level 1 component")
    pipeline = pipeline or fit.config

    def replicate(index: int) -> float:
        rng = np.random.default_rng([seed, index])
        return fit_mfpca(simulate_from_fit(fit, hypothesis, rng), pipeline).rho_w

    values = np.array(_map(replicate, n_boot, threads))
    tail = (1 - level) / 2
    low, high = np.quantile(values, [tail, 1 - tail])
    _LOGGER.debug(
        "Bootstrap (%s, %d replicates): rho_W interval [%.4f, %.4f]",
        hypothesis.value,
        n_boot,
        low,
        high,
    )
    return BootstrapResult(
        point=fit.rho_w,
        low=float(low),
        high=float(high),
        replicates=values,
        hypothesis=hypothesis,
        level=level,
    )


def true_scores_frame(truth: SimTruth, subject_ids: Sequence[str]) -> pd.DataFrame:
    """Level 1 true scores as a table, one row per subject."""
    columns = [f"xi_{k + 1}" for k in range(truth.xi.shape[1])]
    frame = pd.DataFrame(truth.xi, columns=columns)
    frame.insert(0, "subject_id", list(subject_ids))
    return frame
