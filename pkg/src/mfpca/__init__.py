"""Multilevel functional principal component analysis."""
from __future__ import annotations

__version__ = "0.4.0"

from .const import (  # noqa: E402
    EEG_BANDS,
    Estimator,
    Hypothesis,
    LambdaRule,
    RawFormat,
    ScoreMethod,
    SelectionRule,
    VarianceMode,
)
from .eigen import (  # noqa: E402
    EigenSystem,
    MfpcaFit,
    PipelineConfig,
    eigendecompose,
    fit_mfpca,
    perturbation_curves,
    rho_w,
    select_ncomp,
)
from .exceptions import MfpcaError  # noqa: E402
from .fd import (  # noqa: E402
    Curve,
    MultilevelSample,
    SampledGrid,
    center,
    inner_product,
    norm,
)
from .glm import (  # noqa: E402
    RegressionFit,
    RegressionSpec,
    encode_categorical,
    fit_logistic,
    reconstruct_beta_curve,
    standardize_coef,
)
from .ingest import (  # noqa: E402
    BandPowerSeries,
    BandSpec,
    band_power,
    load_sample,
    read_signal,
    write_sample,
)
from .moments import (  # noqa: E402
    MeanEstimate,
    RawCov,
    estimate_means,
    estimate_raw_cov,
)
from .results import read_fit, write_fit  # noqa: E402
from .sampler import GibbsConfig, GibbsDiagnostics  # noqa: E402
from .scores import (  # noqa: E402
    CrossProductMatrix,
    Projections,
    ScoreSet,
    compute_C,
    estimate_scores,
    estimate_scores_ni,
    estimate_scores_pcf,
    estimate_scores_pcp,
    project,
)
from .sim import (  # noqa: E402
    BootstrapResult,
    SimConfig,
    SimTruth,
    StudyResult,
    basis,
    bootstrap_rho,
    generate,
    rmse,
    simulate_study,
)
from .smooth import (  # noqa: E402
    SmoothedCov,
    SmootherConfig,
    SmoothingResult,
    estimate_sigma2,
    smooth_covariances,
    smooth_curves,
    smooth_mean,
    smooth_surface,
)

__all__ = [
    "BandPowerSeries",
    "BandSpec",
    "BootstrapResult",
    "CrossProductMatrix",
    "Curve",
    "EEG_BANDS",
    "EigenSystem",
    "Estimator",
    "GibbsConfig",
    "GibbsDiagnostics",
    "Hypothesis",
    "LambdaRule",
    "MeanEstimate",
    "MfpcaError",
    "MfpcaFit",
    "MultilevelSample",
    "PipelineConfig",
    "Projections",
    "RawCov",
    "RawFormat",
    "RegressionFit",
    "RegressionSpec",
    "SampledGrid",
    "ScoreMethod",
    "ScoreSet",
    "SelectionRule",
    "SimConfig",
    "SimTruth",
    "SmoothedCov",
    "SmootherConfig",
    "SmoothingResult",
    "StudyResult",
    "VarianceMode",
    "band_power",
    "basis",
    "bootstrap_rho",
    "center",
    "compute_C",
    "eigendecompose",
    "encode_categorical",
    "estimate_means",
    "estimate_raw_cov",
    "estimate_scores",
    "estimate_scores_ni",
    "estimate_scores_pcf",
    "estimate_scores_pcp",
    "estimate_sigma2",
    "fit_logistic",
    "fit_mfpca",
    "generate",
    "inner_product",
    "load_sample",
    "norm",
    "perturbation_curves",
    "project",
    "read_fit",
    "read_signal",
    "reconstruct_beta_curve",
    "rho_w",
    "rmse",
    "select_ncomp",
    "simulate_study",
    "smooth_covariances",
    "smooth_curves",
    "smooth_mean",
    "smooth_surface",
    "standardize_coef",
    "write_fit",
    "write_sample",
]
