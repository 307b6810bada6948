"""Separable covariance estimation: flip-flop fits for matrix-normal and Tyler-type models."""
from .diagnostics import (
    ThresholdVerdict,
    UniquenessReport,
    boundary_probe_2x2,
    collinearity_oracle,
    discriminant_2x2,
    multistart_uniqueness,
    rank_necessary_check,
    threshold_verdict,
    zeta_2x2,
)
from .exceptions import (
    DimensionMismatch,
    InvalidSpdMatrix,
    KroncovError,
    MissingWitness,
    RankDeficientUpdate,
    SampleFileError,
    ZeroSample,
)
from .gaussian import (
    EstimationResult,
    KroneckerPair,
    gaussian_nll,
    gff_estimate,
    gff_residual,
    gff_rhs,
    gff_step,
)
from .linalg import SpdMatrix, geodesic, inverse, kron, logdet, spd_power, spectral_norm
from .robust import rff_estimate, rff_residual, rff_rhs, rff_step, robust_nll, tyler_unconstrained
from .sampling import (
    MatrixNormalParams,
    SampleSet,
    center_reduce,
    sample_elliptical,
    sample_matrix_normal,
    sample_mean,
    scm,
)

__version__ = "0.1.0"
