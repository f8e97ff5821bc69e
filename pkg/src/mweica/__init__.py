"""Independent component analysis by joint diagonalization of Gaussian-weighted covariances."""

__version__ = "0.1.0"

from .errors import AlgorithmError, InputError, MweicaError, NearDegenerateSpectrum
from .evaluation import amari_error, amari_index, congruence_matrix, match_components, match_sources, rank_methods, tucker_congruence
from .ica import MweicaOptions, UnmixingResult, fastica_baseline, mweica, normalize_unmixing, transform, weica
from .independence import IndexReport, independence_index
from .joint_diag import DiagResult, mean_diag_error, pham_joint_diag, simultaneous_diag_pair
from .weighted_stats import (
    WeightVector,
    diag_error,
    effective_sample_size,
    gaussian_log_weights,
    regularize,
    sample_covariance,
    sample_mean,
    weighted_covariance,
    weighted_mean,
)
