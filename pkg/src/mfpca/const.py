"""Constants for multilevel functional principal component analysis."""
from __future__ import annotations

import dataclasses
from enum import Enum


class LambdaRule(Enum):
    """How the smoothing parameter of a penalized spline is chosen."""

    # Use the configured value as is
    FIXED = "fixed"

    # Generalized cross validation
    GCV = "gcv"

    # Restricted maximum likelihood of the mixed-model representation
    REML = "reml"


class SelectionRule(Enum):
    """How the cumulative and individual variance thresholds are combined."""

    # Stop as soon as either threshold is met
    EITHER = "or"

    # Stop only when both thresholds are met (literal reading)
    BOTH = "and"


class ScoreMethod(Enum):
    """Mixed model used to predict the principal component scores."""

    # Projection model on the integrated projections A and B
    PCP = "pcp"

    # Full model on the observed curves
    PCF = "pcf"

    # Direct numerical integration without shrinkage
    NI = "ni"


class Estimator(Enum):
    """Inference engine for the score models."""

    BLUP = "blup"
    GIBBS = "gibbs"


class VarianceMode(Enum):
    """How the residual variances of the projection model are obtained."""

    # Method of moments initializer only
    MOMENTS = "moments"

    # Method of moments followed by fixed-point (EM) refinement
    REFINE = "refine"

    # Caller supplies the variances
    FIXED = "fixed"


class Hypothesis(Enum):
    """Generating model of the parametric bootstrap."""

    # No subject level variation
    H0 = "h0"

    # The fitted model as is
    H1 = "h1"


class RawFormat(Enum):
    """Encodings accepted for raw signal files."""

    TEXT = "text"
    F32LE = "f32le"


@dataclasses.dataclass(frozen=True)
class Band:
    name: str
    low: float
    high: float


EEG_BANDS: dict[str, Band] = {
    "delta": Band(name="delta", low=0.8, high=4.0),
    "theta": Band(name="theta", low=4.1, high=8.0),
    "alpha": Band(name="alpha", low=8.1, high=13.0),
    "beta": Band(name="beta", low=13.1, high=20.0),
}

DEFAULT_WINDOW_SECONDS = 30.0
DEFAULT_SAMPLING_RATE = 125.0

# In-band power at or below this fraction of the window energy counts as none
BAND_POWER_RELATIVE_TOL = 1e-20

# Component selection thresholds, the individual one defaults to 1/T
DEFAULT_P1 = 0.9

# Smoother sizing
SPLINE_DEGREE = 3
DEFAULT_PENALTY_ORDER = 2
MAX_CURVE_BASIS = 35
MAX_SURFACE_BASIS = 15
MIN_SURFACE_BASIS = 4
LAMBDA_GRID_SIZE = 61
LAMBDA_GRID_DECADES = (-8.0, 4.0)

# Gibbs sampler defaults; gamma(0.01, 0.01) has mean 1 and variance 100
GIBBS_ITERATIONS = 2000
GIBBS_BURN_IN = 500
GIBBS_THIN = 1
GIBBS_CHAINS = 3
GIBBS_PRIOR_SHAPE = 0.01
GIBBS_PRIOR_RATE = 0.01
RHAT_THRESHOLD = 1.1
GIBBS_TRACED_SUBJECTS = 5

# Floors keeping the mixed-model equations solvable
RESIDUAL_VARIANCE_FLOOR = 1e-8
NOISELESS_SIGMA2_FLOOR = 1e-10

# Eigenvalues below this multiple of the mean integrated square of the curves
# are rounding noise
EIGEN_RELATIVE_TOL = 1e-20

SYMMETRY_TOL = 1e-8

# Logistic regression
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-10
SEPARATION_ETA = 30.0
SEPARATION_STEP = 10.0
SEPARATION_AFTER = 25
SIGNIFICANCE_LEVEL = 0.05

# Simulation design
SIM_EIGENVALUES: tuple[float, ...] = (1.0, 0.5, 0.25, 0.125)
SIM_GRID_SIZE = 101

BOOTSTRAP_LEVEL = 0.95

CSV_FLOAT_FORMAT = "%.17g"
SAMPLE_COLUMNS = ("subject_id", "visit_id", "t", "value")
