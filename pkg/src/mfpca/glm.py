"""Logistic regression of a binary outcome on subject level component scores."""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy import linalg, special, stats

from .const import (
    IRLS_MAX_ITER,
    IRLS_TOL,
    SEPARATION_AFTER,
    SEPARATION_ETA,
    SEPARATION_STEP,
    SIGNIFICANCE_LEVEL,
)
from .eigen import EigenSystem
from .exceptions import (
    InsufficientData,
    InvalidArgument,
    RankDeficient,
    SeparationDetected,
    ShapeError,
)
from .fd import Curve, FloatArray

_LOGGER = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"
_MAX_HALVINGS = 30


def _matrix(values: npt.ArrayLike | None, n_rows: int) -> FloatArray:
    if values is None:
        return np.zeros((n_rows, 0))
    matrix = np.asarray(values, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, np.newaxis]
    return matrix


@dataclasses.dataclass(frozen=True, eq=False)
class RegressionSpec:
    """Outcome, score columns and adjustment covariates of one logistic model.

    With standardize the rendered table reports coefficients per standard deviation
    of each score column.
    """

    outcome: FloatArray
    scores: FloatArray
    covariates: FloatArray | None = None
    score_names: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()
    standardize: bool = False

    def __post_init__(self) -> None:
        outcome = np.asarray(self.outcome, dtype=float).ravel()
        scores = _matrix(self.scores, outcome.size)
        covariates = _matrix(self.covariates, outcome.size)
        if scores.shape[0] != outcome.size or covariates.shape[0] != outcome.size:
            raise ShapeError(
                f"row counts differ: outcome {outcome.size}, scores {scores.shape[0]}, "
                f"covariates {covariates.shape[0]}"
            )
        if not np.all((outcome == 0) | (outcome == 1)):
            raise InvalidArgument("outcome must be coded 0/1")
        if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(covariates))):
            raise InvalidArgument("scores and covariates must be finite")
        constant = [k for k in range(scores.shape[1]) if np.ptp(scores[:, k]) == 0]
        if constant:
            raise InvalidArgument(f"score columns {constant} are constant")
        if outcome.size < 1 + scores.shape[1] + covariates.shape[1] + 1:
            raise InsufficientData(
                f"{outcome.size} rows cannot support "
                f"{1 + scores.shape[1] + covariates.shape[1]} coefficients"
            )
        score_names = tuple(self.score_names) or tuple(
            f"xi_{k + 1}" for k in range(scores.shape[1])
        )
        covariate_names = tuple(self.covariate_names) or tuple(
            f"v_{k + 1}" for k in range(covariates.shape[1])
        )
        if (len(score_names), len(covariate_names)) != (
            scores.shape[1],
            covariates.shape[1],
        ):
            raise ShapeError("column names do not match the number of columns")
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "score_names", score_names)
        object.__setattr__(self, "covariate_names", covariate_names)

    @property
    def n_rows(self) -> int:
        return int(self.outcome.size)

    @property
    def n_scores(self) -> int:
        return int(self.scores.shape[1])

    @property
    def names(self) -> tuple[str, ...]:
        return (INTERCEPT, *self.score_names, *self.covariate_names)

    def design(self) -> FloatArray:
        assert self.covariates is not None
        return np.column_stack([np.ones(self.n_rows), self.scores, self.covariates])


@dataclasses.dataclass(frozen=True, eq=False)
class RegressionFit:
    """Maximum likelihood estimates with Wald inference.

    standardized holds coefficient times score standard deviation for the score
    columns and nan elsewhere.
    """

    names: tuple[str, ...]
    coefficients: FloatArray
    standard_errors: FloatArray
    standardized: FloatArray
    score_sd: FloatArray
    log_likelihood: float
    iterations: int
    converged: bool
    n_scores: int
    standardize: bool = False
    confidence: float = 0.95

    @property
    def z_values(self) -> FloatArray:
        return self.coefficients / self.standard_errors

    @property
    def p_values(self) -> FloatArray:
        return 2 * stats.norm.sf(np.abs(self.z_values))

    @property
    def intervals(self) -> FloatArray:
        """Wald intervals for the coefficients, shaped (p, 2)."""
        quantile = stats.norm.ppf(0.5 + self.confidence / 2)
        half = quantile * self.standard_errors
        return np.column_stack([self.coefficients - half, self.coefficients + half])

    @property
    def odds_ratios(self) -> FloatArray:
        return np.exp(self.coefficients)

    @property
    def odds_ratio_intervals(self) -> FloatArray:
        return np.exp(self.intervals)

    @property
    def score_coefficients(self) -> FloatArray:
        return self.coefficients[1 : 1 + self.n_scores]

    def beta_curve(self, level1: EigenSystem) -> Curve:
        return reconstruct_beta_curve(self.score_coefficients, level1)

    def frame(self) -> pd.DataFrame:
        """Numeric summary, one row per term."""
        intervals = self.odds_ratio_intervals
        return pd.DataFrame(
            {
                "term": self.names,
                "estimate": self.coefficients,
                "se": self.standard_errors,
                "z": self.z_values,
                "p_value": self.p_values,
                "standardized": self.standardized,
                "odds_ratio": self.odds_ratios,
                "or_low": intervals[:, 0],
                "or_high": intervals[:, 1],
            }
        )

    def table(self, digits: int = 2) -> pd.DataFrame:
        """"estimate (se)" cells with a star for significance at the 0.05 level."""
        estimates, errors = self.coefficients, self.standard_errors
        if self.standardize:
            scale = np.where(np.isnan(self.score_sd), 1.0, self.score_sd)
            estimates, errors = estimates * scale, errors * scale
        cells = [
            f"{estimate:.{digits}f} ({error:.{digits}f})"
            + ("*" if p < SIGNIFICANCE_LEVEL else "")
            for estimate, error, p in zip(estimates, errors, self.p_values)
        ]
        return pd.DataFrame({"term": self.names, "estimate": cells})


def _log_likelihood(design: FloatArray, outcome: FloatArray, beta: FloatArray) -> float:
    eta = design @ beta
    return float(np.sum(outcome * eta - np.logaddexp(0.0, eta)))


def fit_logistic(spec: RegressionSpec, confidence: float = 0.95) -> RegressionFit:
    """Fit by iteratively reweighted least squares with step halving.

    Standard errors come from the inverse observed information at the estimate.
    Raises RankDeficient for collinear columns and SeparationDetected when the
    linear predictor or the Newton steps diverge.
    """
    design = spec.design()
    outcome = spec.outcome
    n_coef = design.shape[1]
    if np.linalg.matrix_rank(design) < n_coef:
        raise RankDeficient(f"design matrix with {n_coef} columns is rank deficient")

    beta = np.zeros(n_coef)
    loglik = _log_likelihood(design, outcome, beta)
    converged = False
    iteration = 0
    for iteration in range(1, IRLS_MAX_ITER + 1):
        fitted = special.expit(design @ beta)
        weights = fitted * (1 - fitted)
        information = design.T @ (design * weights[:, np.newaxis])
        try:
            step = linalg.cho_solve(
                linalg.cho_factor(information, lower=True),
                design.T @ (outcome - fitted),
            )
        except linalg.LinAlgError as err:
            raise SeparationDetected("observed information became singular") from err
        candidate = beta + step
        new_loglik = _log_likelihood(design, outcome, candidate)
        halvings = 0
        while new_loglik < loglik and halvings < _MAX_HALVINGS:
            step = step / 2
            candidate = beta + step
            new_loglik = _log_likelihood(design, outcome, candidate)
            halvings += 1
        eta_max = float(np.max(np.abs(design @ candidate)))
        _LOGGER.debug(
            "IRLS iteration %d: log-likelihood %.10g (%d halvings)",
            iteration,
            new_loglik,
            halvings,
        )
        if eta_max > SEPARATION_ETA:
            raise SeparationDetected(
                f"linear predictor reached {eta_max:.1f}, probabilities pinned to 0/1"
            )
        if iteration >= SEPARATION_AFTER and np.max(np.abs(step)) > SEPARATION_STEP:
            raise SeparationDetected(
                f"coefficients still diverging after {iteration} iterations"
            )
        change = abs(new_loglik - loglik) / (abs(loglik) + IRLS_TOL)
        beta, loglik = candidate, new_loglik
        if change < IRLS_TOL:
            converged = True
            break
    if not converged:
        _LOGGER.warning("IRLS did not converge in %d iterations", IRLS_MAX_ITER)

    fitted = special.expit(design @ beta)
    information = design.T @ (design * (fitted * (1 - fitted))[:, np.newaxis])
    covariance = linalg.inv(information)
    score_sd = np.full(n_coef, np.nan)
    score_sd[1 : 1 + spec.n_scores] = spec.scores.std(axis=0, ddof=1)
    return RegressionFit(
        names=spec.names,
        coefficients=beta,
        standard_errors=np.sqrt(np.diag(covariance)),
        standardized=beta * score_sd,
        score_sd=score_sd,
        log_likelihood=loglik,
        iterations=iteration,
        converged=converged,
        n_scores=spec.n_scores,
        standardize=spec.standardize,
        confidence=confidence,
    )


def standardize_coef(beta: float, score_sd: float) -> float:
    """Coefficient per standard deviation of its score."""
    if not np.isfinite(score_sd) or score_sd <= 0:
        raise InvalidArgument(f"score sd must be positive, got {score_sd}")
    return beta * score_sd


def reconstruct_beta_curve(betas: npt.ArrayLike, level1: EigenSystem) -> Curve:
    """beta(t) as the combination of the retained level 1 eigenfunctions."""
    betas = np.asarray(betas, dtype=float).ravel()
    if betas.size != level1.n_selected:
        raise ShapeError(
            f"{betas.size} coefficients for {level1.n_selected} retained eigenfunctions"
        )
    return Curve(level1.grid, betas @ level1.selected_functions)


def encode_categorical(
    values: Sequence[object], name: str
) -> tuple[FloatArray, tuple[str, ...]]:
    """Reference cell indicators; the first level seen is the reference."""
    series = pd.Series(list(values), dtype=object)
    if series.isna().any():
        raise InvalidArgument(f"{name} has missing values")
    levels = list(pd.unique(series))
    columns = np.column_stack(
        [(series == level).to_numpy(dtype=float) for level in levels[1:]]
    ) if len(levels) > 1 else np.zeros((len(series), 0))
    return columns, tuple(f"{name}={level}" for level in levels[1:])
