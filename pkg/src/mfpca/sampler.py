"""Shared machinery of the conjugate Gibbs samplers for principal component scores."""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Callable, Mapping

import joblib
import numpy as np
import numpy.typing as npt
from scipy import linalg

from .const import (
    GIBBS_BURN_IN,
    GIBBS_CHAINS,
    GIBBS_ITERATIONS,
    GIBBS_PRIOR_RATE,
    GIBBS_PRIOR_SHAPE,
    GIBBS_THIN,
    RHAT_THRESHOLD,
)
from .exceptions import InvalidArgument
from .fd import FloatArray

_LOGGER = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class GibbsConfig:
    """Chain lengths, priors and parallelism of a Gibbs run.

    Each precision gets a gamma(prior_shape, prior_rate) prior. With fix_variances the
    residual variances stay at their starting values and only the scores are sampled.
    """

    iterations: int = GIBBS_ITERATIONS
    burn_in: int = GIBBS_BURN_IN
    thin: int = GIBBS_THIN
    chains: int = GIBBS_CHAINS
    prior_shape: float = GIBBS_PRIOR_SHAPE
    prior_rate: float = GIBBS_PRIOR_RATE
    fix_variances: bool = False
    threads: int = 1

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.chains < 1 or self.thin < 1 or self.threads < 1:
            raise InvalidArgument("iterations, chains, thin and threads must be >= 1")
        if not 0 <= self.burn_in < self.iterations:
            raise InvalidArgument(
                f"burn-in {self.burn_in} must be below the {self.iterations} iterations"
            )
        if self.prior_shape <= 0 or self.prior_rate <= 0:
            raise InvalidArgument("gamma prior parameters must be positive")

    @property
    def kept_per_chain(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))

    def keeps(self, iteration: int) -> bool:
        return iteration >= self.burn_in and (iteration - self.burn_in) % self.thin == 0


@dataclasses.dataclass(frozen=True)
class GibbsDiagnostics:
    """Split-chain potential scale reduction per monitored quantity."""

    rhat: Mapping[str, float]
    chains: int
    draws_per_chain: int

    @property
    def max_rhat(self) -> float:
        finite = [value for value in self.rhat.values() if np.isfinite(value)]
        return max(finite, default=1.0)

    @property
    def converged(self) -> bool:
        return self.max_rhat <= RHAT_THRESHOLD

    def as_dict(self) -> dict[str, object]:
        return {
            "rhat": dict(self.rhat),
            "max_rhat": self.max_rhat,
            "converged": self.converged,
            "chains": self.chains,
            "draws_per_chain": self.draws_per_chain,
        }


@dataclasses.dataclass
class ChainResult:
    """Running sums of the kept draws of one chain plus traces of monitored scalars."""

    totals: FloatArray
    squares: FloatArray
    count: int = 0
    traces: dict[str, list[float]] = dataclasses.field(default_factory=dict)

    @classmethod
    def empty(cls, size: int) -> ChainResult:
        return cls(totals=np.zeros(size), squares=np.zeros(size))

    def record(self, draw: FloatArray, monitored: Mapping[str, float]) -> None:
        self.totals += draw
        self.squares += draw**2
        self.count += 1
        for name, value in monitored.items():
            self.traces.setdefault(name, []).append(float(value))


def split_rhat(chains: npt.ArrayLike) -> float:
    """Potential scale reduction of (chains, draws) after splitting every chain in two.

    Returns 1.0 for traces without variation and nan when there are too few draws.
    """
    draws = np.asarray(chains, dtype=float)
    half = draws.shape[1] // 2
    if half < 2:
        return float("nan")
    split = np.concatenate([draws[:, :half], draws[:, -half:]], axis=0)
    within = split.var(axis=1, ddof=1).mean()
    between = half * split.mean(axis=1).var(ddof=1)
    if within <= 0:
        return 1.0 if between <= 0 else float("inf")
    pooled = (half - 1) / half * within + between / half
    return float(np.sqrt(pooled / within))


def draw_gaussian(
    rng: np.random.Generator, precision: FloatArray, rhs: FloatArray
) -> FloatArray:
    """Draw from N(H^-1 r, H^-1) for every column r of rhs.

    Raises numpy/scipy LinAlgError when H is not positive definite.
    """
    lower = linalg.cholesky(precision, lower=True)
    mean = linalg.cho_solve((lower, True), rhs)
    noise = rng.standard_normal(rhs.shape)
    return mean + linalg.solve_triangular(lower, noise, lower=True, trans="T")


def draw_precision(
    rng: np.random.Generator, cfg: GibbsConfig, n_obs: int, ssr: float
) -> float:
    """Draw a precision from its gamma full conditional."""
    shape = cfg.prior_shape + n_obs / 2
    rate = cfg.prior_rate + max(ssr, 0.0) / 2
    return float(rng.gamma(shape, 1.0 / rate))


def run_chains(
    cfg: GibbsConfig,
    seed: int,
    chain: Callable[[int, np.random.Generator], ChainResult],
) -> list[ChainResult]:
    """Run every chain with its own generator seeded by (seed, chain index)."""

    def start(index: int) -> ChainResult:
        return chain(index, np.random.default_rng([seed, index]))

    if cfg.threads > 1 and cfg.chains > 1:
        return joblib.Parallel(n_jobs=cfg.threads, prefer="threads")(
            joblib.delayed(start)(index) for index in range(cfg.chains)
        )
    return [start(index) for index in range(cfg.chains)]


def summarize(
    results: list[ChainResult],
) -> tuple[FloatArray, FloatArray, GibbsDiagnostics]:
    """Posterior means, standard deviations and split-R-hat over all chains."""
    count = sum(result.count for result in results)
    totals = np.sum([result.totals for result in results], axis=0)
    squares = np.sum([result.squares for result in results], axis=0)
    mean = totals / count
    variance = np.maximum(squares / count - mean**2, 0.0)
    if count > 1:
        variance *= count / (count - 1)
    rhat = {
        name: split_rhat([result.traces[name] for result in results])
        for name in results[0].traces
    }
    diagnostics = GibbsDiagnostics(
        rhat=rhat, chains=len(results), draws_per_chain=results[0].count
    )
    if not diagnostics.converged:
        _LOGGER.warning(
            "Gibbs sampler may not have converged: max split R-hat %.3f exceeds %.2f",
            diagnostics.max_rhat,
            RHAT_THRESHOLD,
        )
    return mean, np.sqrt(variance), diagnostics
