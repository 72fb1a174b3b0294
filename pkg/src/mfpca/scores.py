"""Component scores from the projection (PC-P) and full (PC-F) mixed models.

Both models are linear Gaussian with independent subjects. Subjects observed at the
same set of visits share one posterior precision matrix, so each distinct presence
pattern is factorized once and all of its subjects are solved together.
"""
from __future__ import annotations

import dataclasses
import logging
from collections.abc import Mapping

import numpy as np
import numpy.typing as npt
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .const import (
    GIBBS_TRACED_SUBJECTS,
    NOISELESS_SIGMA2_FLOOR,
    RESIDUAL_VARIANCE_FLOOR,
    Estimator,
    ScoreMethod,
    VarianceMode,
)
from .eigen import EigenSystem, MfpcaFit
from .exceptions import (
    GridMismatch,
    InvalidArgument,
    InvalidVariance,
    ShapeError,
    SingularSystem,
)
from .fd import (
    BoolArray,
    FloatArray,
    MultilevelSample,
    center,
    check_same_grid,
    project_values,
)
from .moments import MeanEstimate
from .sampler import (
    ChainResult,
    GibbsConfig,
    GibbsDiagnostics,
    draw_gaussian,
    draw_precision,
    run_chains,
    summarize,
)

_LOGGER = logging.getLogger(__name__)

_EM_MAX_ITER = 500
_EM_TOL = 1e-8


@dataclasses.dataclass(frozen=True, eq=False)
class CrossProductMatrix:
    """c_kl = <phi_k level 1, phi_l level 2> for the retained components."""

    values: FloatArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, ndmin=2)
        if np.any(np.abs(values) > 1 + 1e-8):
            raise InvalidArgument("cross products of unit-norm functions exceed 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.values.shape[0]), int(self.values.shape[1])


@dataclasses.dataclass(frozen=True, eq=False)
class Projections:
    """Integrated projections of the centered curves onto each level's eigenfunctions.

    a has shape (I, J, N1), b has shape (I, J, N2); entries of absent visits are NaN.
    """

    a: FloatArray
    b: FloatArray
    mask: BoolArray

    def __post_init__(self) -> None:
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        mask = np.array(self.mask, dtype=bool)
        if a.ndim != 3 or b.ndim != 3 or not a.shape[:2] == b.shape[:2] == mask.shape:
            raise ShapeError("projections must be (subjects, visits, components)")
        if not (np.all(np.isfinite(a[mask])) and np.all(np.isfinite(b[mask]))):
            raise InvalidArgument("projections of observed curves must be finite")
        a[~mask] = np.nan
        b[~mask] = np.nan
        for array in (a, b, mask):
            array.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "mask", mask)

    @property
    def n1(self) -> int:
        return int(self.a.shape[2])

    @property
    def n2(self) -> int:
        return int(self.b.shape[2])


@dataclasses.dataclass(frozen=True, eq=False)
class ScoreSet:
    """Predicted scores with their posterior standard deviations.

    xi has shape (I, N1) and zeta (I, J, N2); zeta is NaN for absent visits.
    """

    xi: FloatArray
    zeta: FloatArray
    xi_sd: FloatArray
    zeta_sd: FloatArray
    residual_variances: Mapping[str, float]
    method: ScoreMethod
    estimator: Estimator
    diagnostics: GibbsDiagnostics | None = None

    def __post_init__(self) -> None:
        if self.xi.shape != self.xi_sd.shape or self.zeta.shape != self.zeta_sd.shape:
            raise ShapeError("scores and standard deviations differ in shape")
        if self.xi.shape[0] != self.zeta.shape[0]:
            raise ShapeError("level 1 and level 2 scores disagree on the subject count")
        if np.any(self.xi_sd < 0) or np.any(self.zeta_sd < 0):
            raise InvalidArgument("posterior standard deviations must be nonnegative")

    @property
    def n1(self) -> int:
        return int(self.xi.shape[1])

    @property
    def n2(self) -> int:
        return int(self.zeta.shape[2])


def compute_C(level1: EigenSystem, level2: EigenSystem) -> CrossProductMatrix:
    """Inner products between the retained eigenfunctions of the two levels."""
    check_same_grid(level1.grid, level2.grid)
    values = project_values(
        level1.selected_functions, level2.selected_functions, level1.grid
    )
    values = values.reshape(level1.n_selected, level2.n_selected)
    return CrossProductMatrix(values=values)


def project(
    sample: MultilevelSample,
    means: MeanEstimate,
    level1: EigenSystem,
    level2: EigenSystem,
) -> Projections:
    """Quadrature inner products of the centered curves with the eigenfunctions."""
    for system in (level1, level2):
        if not system.grid.matches(sample.grid):
            raise GridMismatch(
                f"level {system.level} eigenfunctions are on another grid"
            )
    centered = center(sample, means.mu, means.eta).values
    a = project_values(centered, level1.selected_functions, sample.grid)
    b = project_values(centered, level2.selected_functions, sample.grid)
    return Projections(a=a, b=b, mask=sample.mask)


@dataclasses.dataclass(frozen=True, eq=False)
class _Group:
    """Subjects sharing one presence pattern."""

    subjects: npt.NDArray[np.int_]
    visits: npt.NDArray[np.int_]

    @property
    def n_visits(self) -> int:
        return int(self.visits.size)


# xi, zeta and their posterior standard deviations
_Scores = tuple[FloatArray, FloatArray, FloatArray, FloatArray]


def _groups(mask: BoolArray) -> list[_Group]:
    patterns: dict[bytes, list[int]] = {}
    for subject, row in enumerate(mask):
        patterns.setdefault(row.tobytes(), []).append(subject)
    return [
        _Group(subjects=np.array(members), visits=np.flatnonzero(mask[members[0]]))
        for members in patterns.values()
    ]


class _BlockModel:
    """A mixed model with unknowns (xi_i, zeta_ij for observed j) per subject."""

    variance_names: tuple[str, ...] = ()

    def __init__(
        self, mask: BoolArray, n1: int, n2: int, lam1: FloatArray, lam2: FloatArray
    ) -> None:
        self.mask = mask
        self.n1 = n1
        self.n2 = n2
        self.lam1 = _check_eigenvalues(lam1, n1, 1)
        self.lam2 = _check_eigenvalues(lam2, n2, 2)
        self.groups = _groups(mask)

    @property
    def noise_floor(self) -> float:
        """Smallest residual variance used when the data are declared noiseless."""
        largest = max(np.max(self.lam1, initial=0.0), np.max(self.lam2, initial=0.0))
        return NOISELESS_SIGMA2_FLOOR * float(largest)

    def size(self, group: _Group) -> int:
        return self.n1 + group.n_visits * self.n2

    def prior_precision(self, group: _Group) -> FloatArray:
        level2 = np.tile(1 / self.lam2, group.n_visits)
        return np.diag(np.concatenate([1 / self.lam1, level2]))

    def precision(self, group: _Group, variances: Mapping[str, float]) -> FloatArray:
        raise NotImplementedError

    def rhs(self, group: _Group, variances: Mapping[str, float]) -> FloatArray:
        raise NotImplementedError

    def residuals(
        self, xi: FloatArray, zeta: FloatArray
    ) -> dict[str, tuple[float, int]]:
        """Residual sum of squares and observation count per variance parameter."""
        raise NotImplementedError

    def unpack(
        self, group: _Group, solution: FloatArray, xi: FloatArray, zeta: FloatArray
    ) -> None:
        """Scatter a (d, n) block solution into the (I, N1) and (I, J, N2) arrays."""
        n_subjects = group.subjects.size
        xi[group.subjects] = solution[: self.n1].T
        blocks = solution[self.n1 :].T.reshape(n_subjects, group.n_visits, self.n2)
        zeta[np.ix_(group.subjects, group.visits)] = blocks


def _check_eigenvalues(values: npt.ArrayLike, count: int, level: int) -> FloatArray:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.size != count:
        raise ShapeError(
            f"{array.size} level {level} eigenvalues for {count} components"
        )
    if np.any(array <= 0):
        raise InvalidVariance(f"level {level} eigenvalues must be positive")
    return array


class _ProjectionModel(_BlockModel):
    """A_ij = xi_i + C zeta_ij + e1, B_ij = C^T xi_i + zeta_ij + e2."""

    variance_names = ("sigma2_1", "sigma2_2")

    def __init__(
        self,
        proj: Projections,
        cross: CrossProductMatrix,
        lam1: FloatArray,
        lam2: FloatArray,
    ) -> None:
        if cross.shape != (proj.n1, proj.n2):
            raise ShapeError(
                f"C has shape {cross.shape}, "
                f"projections have {proj.n1} and {proj.n2} components"
            )
        super().__init__(proj.mask, proj.n1, proj.n2, lam1, lam2)
        self.proj = proj
        self.cross = cross.values

    def precision(self, group: _Group, variances: Mapping[str, float]) -> FloatArray:
        s1, s2 = variances["sigma2_1"], variances["sigma2_2"]
        n1, n2, c = self.n1, self.n2, self.cross
        out = self.prior_precision(group)
        out[:n1, :n1] += group.n_visits * (np.eye(n1) / s1 + c @ c.T / s2)
        coupling = c * (1 / s1 + 1 / s2)
        block = c.T @ c / s1 + np.eye(n2) / s2
        for slot in range(group.n_visits):
            start = n1 + slot * n2
            out[:n1, start : start + n2] += coupling
            out[start : start + n2, :n1] += coupling.T
            out[start : start + n2, start : start + n2] += block
        return out

    def _observed(self, group: _Group) -> tuple[FloatArray, FloatArray]:
        index = np.ix_(group.subjects, group.visits)
        return self.proj.a[index], self.proj.b[index]

    def rhs(self, group: _Group, variances: Mapping[str, float]) -> FloatArray:
        s1, s2 = variances["sigma2_1"], variances["sigma2_2"]
        a, b = self._observed(group)
        r_xi = a.sum(axis=1) / s1 + b.sum(axis=1) @ self.cross.T / s2
        r_zeta = a @ self.cross / s1 + b / s2
        return np.concatenate([r_xi, r_zeta.reshape(group.subjects.size, -1)], axis=1).T

    def _residual_arrays(
        self, xi: FloatArray, zeta: FloatArray
    ) -> tuple[FloatArray, FloatArray]:
        mask = self.mask
        fitted_a = xi[:, np.newaxis, :] + zeta @ self.cross.T
        fitted_b = (xi @ self.cross)[:, np.newaxis, :] + zeta
        return (self.proj.a - fitted_a)[mask], (self.proj.b - fitted_b)[mask]

    def residuals(
        self, xi: FloatArray, zeta: FloatArray
    ) -> dict[str, tuple[float, int]]:
        res_a, res_b = self._residual_arrays(xi, zeta)
        return {
            "sigma2_1": (float(np.sum(res_a**2)), res_a.size),
            "sigma2_2": (float(np.sum(res_b**2)), res_b.size),
        }

    def uncertainty(self, group: _Group, covariance: FloatArray) -> tuple[float, float]:
        """Summed posterior variance of the fitted A and B over one subject's visits."""
        n1, n2, d = self.n1, self.n2, self.size(group)
        trace_a = trace_b = 0.0
        for slot in range(group.n_visits):
            start = n1 + slot * n2
            map_a = np.zeros((n1, d))
            map_a[:, :n1] = np.eye(n1)
            map_a[:, start : start + n2] = self.cross
            map_b = np.zeros((n2, d))
            map_b[:, :n1] = self.cross.T
            map_b[:, start : start + n2] = np.eye(n2)
            trace_a += float(np.trace(map_a @ covariance @ map_a.T))
            trace_b += float(np.trace(map_b @ covariance @ map_b.T))
        return trace_a, trace_b


class _FullModel(_BlockModel):
    """Y_ij(t) = sum_k xi_ik phi_k(t) + sum_l zeta_ijl psi_l(t) + e_ij(t)."""

    variance_names = ("sigma2",)

    def __init__(
        self, centered: MultilevelSample, level1: EigenSystem, level2: EigenSystem
    ) -> None:
        super().__init__(
            centered.mask,
            level1.n_selected,
            level2.n_selected,
            level1.selected_values,
            level2.selected_values,
        )
        self.values = centered.values
        self.phi = level1.selected_functions.T
        self.psi = level2.selected_functions.T
        self.phi_phi = self.phi.T @ self.phi
        self.phi_psi = self.phi.T @ self.psi
        self.psi_psi = self.psi.T @ self.psi

    def precision(self, group: _Group, variances: Mapping[str, float]) -> FloatArray:
        s = variances["sigma2"]
        n1, n2 = self.n1, self.n2
        out = self.prior_precision(group)
        out[:n1, :n1] += group.n_visits * self.phi_phi / s
        for slot in range(group.n_visits):
            start = n1 + slot * n2
            out[:n1, start : start + n2] += self.phi_psi / s
            out[start : start + n2, :n1] += self.phi_psi.T / s
            out[start : start + n2, start : start + n2] += self.psi_psi / s
        return out

    def rhs(self, group: _Group, variances: Mapping[str, float]) -> FloatArray:
        s = variances["sigma2"]
        y = self.values[np.ix_(group.subjects, group.visits)]
        r_xi = y.sum(axis=1) @ self.phi
        r_zeta = (y @ self.psi).reshape(group.subjects.size, -1)
        return np.concatenate([r_xi, r_zeta], axis=1).T / s

    def residuals(
        self, xi: FloatArray, zeta: FloatArray
    ) -> dict[str, tuple[float, int]]:
        fitted = (xi @ self.phi.T)[:, np.newaxis, :] + zeta @ self.psi.T
        resid = (self.values - fitted)[self.mask]
        return {"sigma2": (float(np.sum(resid**2)), resid.size)}


def _blup(
    model: _BlockModel, variances: Mapping[str, float]
) -> tuple[_Scores, list[tuple[_Group, FloatArray, FloatArray]]]:
    n_subjects, n_visits = model.mask.shape
    xi = np.zeros((n_subjects, model.n1))
    zeta = np.zeros((n_subjects, n_visits, model.n2))
    xi_var = np.zeros_like(xi)
    zeta_var = np.zeros_like(zeta)
    solved = []
    for group in model.groups:
        if model.size(group) == 0:
            continue
        try:
            factor = cho_factor(model.precision(group, variances), lower=True)
        except LinAlgError as err:
            raise SingularSystem(
                f"mixed model equations of subject {group.subjects[0]} are singular",
                subject_index=int(group.subjects[0]),
            ) from err
        solution = cho_solve(factor, model.rhs(group, variances))
        covariance = cho_solve(factor, np.eye(model.size(group)))
        model.unpack(group, solution, xi, zeta)
        spread = np.repeat(
            np.diag(covariance)[:, np.newaxis], group.subjects.size, axis=1
        )
        model.unpack(group, spread, xi_var, zeta_var)
        solved.append((group, solution, covariance))
    return (xi, zeta, np.sqrt(xi_var), np.sqrt(zeta_var)), solved


def _gibbs(
    model: _BlockModel, start: Mapping[str, float], cfg: GibbsConfig, seed: int
) -> tuple[_Scores, dict[str, float], GibbsDiagnostics]:
    n_subjects, n_visits = model.mask.shape
    n_xi, n_zeta = n_subjects * model.n1, n_subjects * n_visits * model.n2
    names = model.variance_names
    traced = range(min(GIBBS_TRACED_SUBJECTS, n_subjects) if model.n1 else 0)

    def chain(index: int, rng: np.random.Generator) -> ChainResult:
        variances = dict(start)
        xi = np.zeros((n_subjects, model.n1))
        zeta = np.zeros((n_subjects, n_visits, model.n2))
        result = ChainResult.empty(n_xi + n_zeta + len(names))
        for iteration in range(cfg.iterations):
            for group in model.groups:
                if model.size(group) == 0:
                    continue
                try:
                    draw = draw_gaussian(
                        rng,
                        model.precision(group, variances),
                        model.rhs(group, variances),
                    )
                except LinAlgError as err:
                    raise SingularSystem(
                        f"posterior of subject {group.subjects[0]} is singular",
                        subject_index=int(group.subjects[0]),
                    ) from err
                model.unpack(group, draw, xi, zeta)
            if not cfg.fix_variances:
                for name, (ssr, n_obs) in model.residuals(xi, zeta).items():
                    if n_obs:
                        variances[name] = 1.0 / draw_precision(rng, cfg, n_obs, ssr)
            if cfg.keeps(iteration):
                state = np.concatenate(
                    [xi.ravel(), zeta.ravel(), [variances[name] for name in names]]
                )
                monitored = {name: variances[name] for name in names}
                for subject in traced:
                    monitored[f"xi[{subject}][1]"] = xi[subject, 0]
                result.record(state, monitored)
        _LOGGER.debug("Gibbs chain %d finished %d iterations", index, cfg.iterations)
        return result

    mean, sd, diagnostics = summarize(run_chains(cfg, seed, chain))
    shape_xi, shape_zeta = (n_subjects, model.n1), (n_subjects, n_visits, model.n2)
    variances = {name: float(mean[n_xi + n_zeta + k]) for k, name in enumerate(names)}
    scores = (
        mean[:n_xi].reshape(shape_xi),
        mean[n_xi : n_xi + n_zeta].reshape(shape_zeta),
        sd[:n_xi].reshape(shape_xi),
        sd[n_xi : n_xi + n_zeta].reshape(shape_zeta),
    )
    return scores, variances, diagnostics


def _moment_variances(
    proj: Projections, cross: FloatArray, lam1: FloatArray, lam2: FloatArray
) -> dict[str, float]:
    """Empirical second moments of A and B minus their model-implied score variance."""
    mask = proj.mask
    estimates = {}
    for name, values, own, other, coupling in (
        ("sigma2_1", proj.a[mask], lam1, lam2, cross),
        ("sigma2_2", proj.b[mask], lam2, lam1, cross.T),
    ):
        if values.shape[1] == 0:
            estimates[name] = RESIDUAL_VARIANCE_FLOOR
            continue
        implied = own + coupling**2 @ other
        raw = float(np.mean(np.mean(values**2, axis=0) - implied))
        estimates[name] = max(raw, RESIDUAL_VARIANCE_FLOOR)
    return estimates


def _refine_variances(
    model: _ProjectionModel, variances: dict[str, float]
) -> dict[str, float]:
    """Expectation-maximization updates of sigma2_1 and sigma2_2."""
    n_present = int(model.mask.sum())
    for iteration in range(_EM_MAX_ITER):
        (xi, zeta, _, _), solved = _blup(model, variances)
        ssr = model.residuals(xi, zeta)
        expected_a, expected_b = ssr["sigma2_1"][0], ssr["sigma2_2"][0]
        for group, _, covariance in solved:
            trace_a, trace_b = model.uncertainty(group, covariance)
            expected_a += group.subjects.size * trace_a
            expected_b += group.subjects.size * trace_b
        updated = dict(variances)
        if model.n1:
            value = expected_a / (n_present * model.n1)
            updated["sigma2_1"] = max(value, RESIDUAL_VARIANCE_FLOOR)
        if model.n2:
            value = expected_b / (n_present * model.n2)
            updated["sigma2_2"] = max(value, RESIDUAL_VARIANCE_FLOOR)
        change = max(
            abs(updated[name] - variances[name]) / variances[name] for name in updated
        )
        variances = updated
        if change < _EM_TOL:
            _LOGGER.debug(
                "Variance refinement converged after %d iterations", iteration + 1
            )
            break
    else:
        _LOGGER.warning("Variance refinement stopped after %d iterations", _EM_MAX_ITER)
    return variances


def _finish(
    model: _BlockModel,
    scores: _Scores,
    variances: Mapping[str, float],
    method: ScoreMethod,
    estimator: Estimator,
    diagnostics: GibbsDiagnostics | None = None,
    *,
    exact: bool = False,
) -> ScoreSet:
    """Mask absent visits; exact scores report zero standard deviations."""
    xi, zeta, xi_sd, zeta_sd = (array.copy() for array in scores)
    if exact:
        xi_sd[:] = 0.0
        zeta_sd[:] = 0.0
    absent = ~model.mask
    zeta[absent] = np.nan
    zeta_sd[absent] = np.nan
    return ScoreSet(
        xi=xi,
        zeta=zeta,
        xi_sd=xi_sd,
        zeta_sd=zeta_sd,
        residual_variances=dict(variances),
        method=method,
        estimator=estimator,
        diagnostics=diagnostics,
    )


def estimate_scores_pcp(
    proj: Projections,
    cross: CrossProductMatrix,
    lam1: npt.ArrayLike,
    lam2: npt.ArrayLike,
    variance_mode: VarianceMode = VarianceMode.MOMENTS,
    *,
    sigma2s: tuple[float, float] | None = None,
    estimator: Estimator = Estimator.BLUP,
    gibbs: GibbsConfig | None = None,
    seed: int = 0,
) -> ScoreSet:
    """Scores of the projection model.

    The residual variances come from the method of moments, from its EM refinement or
    from sigma2s. BLUP returns the Gaussian conditional means and standard deviations;
    the Gibbs path samples scores and (unless fixed) both residual precisions.
    """
    model = _ProjectionModel(
        proj, cross, np.asarray(lam1, dtype=float), np.asarray(lam2, dtype=float)
    )
    variance_mode = VarianceMode(variance_mode)
    estimator = Estimator(estimator)
    noiseless = False
    if variance_mode is VarianceMode.FIXED:
        if sigma2s is None:
            raise InvalidArgument("fixed residual variances need sigma2s")
        if min(sigma2s) < 0:
            raise InvalidVariance("residual variances must be nonnegative")
        reported = {"sigma2_1": float(sigma2s[0]), "sigma2_2": float(sigma2s[1])}
        noiseless = max(sigma2s) == 0
        variances = {
            name: max(value, model.noise_floor) for name, value in reported.items()
        }
    else:
        variances = _moment_variances(proj, model.cross, model.lam1, model.lam2)
        if variance_mode is VarianceMode.REFINE:
            variances = _refine_variances(model, variances)
        reported = dict(variances)
    _LOGGER.debug("Projection model residual variances %s", reported)

    if estimator is Estimator.GIBBS:
        cfg = gibbs or GibbsConfig()
        scores, sampled, diagnostics = _gibbs(model, variances, cfg, seed)
        if not cfg.fix_variances:
            reported = sampled
        return _finish(model, scores, reported, ScoreMethod.PCP, estimator, diagnostics)
    scores, _ = _blup(model, variances)
    return _finish(
        model, scores, reported, ScoreMethod.PCP, estimator, exact=noiseless
    )


def estimate_scores_pcf(
    sample: MultilevelSample,
    means: MeanEstimate,
    level1: EigenSystem,
    level2: EigenSystem,
    sigma2: float,
    *,
    estimator: Estimator = Estimator.BLUP,
    gibbs: GibbsConfig | None = None,
    seed: int = 0,
) -> ScoreSet:
    """Scores of the full model fitted to the observed curves.

    sigma2 = 0 is solved with a small floor on the noise variance and reported as exact
    (zero standard deviations).
    """
    if sigma2 < 0:
        raise InvalidVariance("noise variance must be nonnegative")
    check_same_grid(level1.grid, sample.grid)
    check_same_grid(level2.grid, sample.grid)
    centered = center(sample, means.mu, means.eta)
    model = _FullModel(centered, level1, level2)
    estimator = Estimator(estimator)
    variances = {"sigma2": max(sigma2, model.noise_floor)}
    reported = {"sigma2": float(sigma2)}

    if estimator is Estimator.GIBBS:
        cfg = gibbs or GibbsConfig()
        scores, sampled, diagnostics = _gibbs(model, variances, cfg, seed)
        if not cfg.fix_variances:
            reported = sampled
        return _finish(model, scores, reported, ScoreMethod.PCF, estimator, diagnostics)
    scores, _ = _blup(model, variances)
    return _finish(
        model, scores, reported, ScoreMethod.PCF, estimator, exact=sigma2 == 0
    )


def estimate_scores_ni(proj: Projections) -> ScoreSet:
    """Unshrunk scores: xi is the visit average of A, zeta is B."""
    mask = proj.mask
    counts = mask.sum(axis=1)[:, np.newaxis]
    xi = np.where(mask[:, :, np.newaxis], proj.a, 0.0).sum(axis=1) / counts
    zeta = np.where(mask[:, :, np.newaxis], proj.b, np.nan)
    return ScoreSet(
        xi=xi,
        zeta=zeta,
        xi_sd=np.full_like(xi, np.nan),
        zeta_sd=np.full_like(zeta, np.nan),
        residual_variances={},
        method=ScoreMethod.NI,
        estimator=Estimator.BLUP,
    )


def estimate_scores(
    sample: MultilevelSample,
    fit: MfpcaFit,
    method: ScoreMethod = ScoreMethod.PCP,
    estimator: Estimator = Estimator.BLUP,
    *,
    variance_mode: VarianceMode = VarianceMode.MOMENTS,
    sigma2s: tuple[float, float] | None = None,
    gibbs: GibbsConfig | None = None,
    seed: int = 0,
) -> ScoreSet:
    """Score the sample with the eigen systems of fit using the chosen model."""
    method = ScoreMethod(method)
    if method is ScoreMethod.PCF:
        return estimate_scores_pcf(
            sample,
            fit.means,
            fit.level1,
            fit.level2,
            fit.sigma2,
            estimator=estimator,
            gibbs=gibbs,
            seed=seed,
        )
    proj = project(sample, fit.means, fit.level1, fit.level2)
    if method is ScoreMethod.NI:
        return estimate_scores_ni(proj)
    return estimate_scores_pcp(
        proj,
        compute_C(fit.level1, fit.level2),
        fit.level1.selected_values,
        fit.level2.selected_values,
        variance_mode,
        sigma2s=sigma2s,
        estimator=estimator,
        gibbs=gibbs,
        seed=seed,
    )
