"""Quality-scale recovery from ratings and actively sampled comparisons."""

from .errors import DataError, NumericalError, QboostError
from .loop import IterationRecord, LoopConfig, StudyState, init_state, step
from .metrics import agreement_proportion, srocc
from .pcm import (
    AcrRatingTable,
    BinaryPreferenceMatrix,
    PairComparisonMatrix,
    pcm_binarize,
    pcm_from_acr,
    pcm_merge,
    read_acr_csv,
    read_pcm_csv,
    to_pcm_csv,
)
from .recovery import (
    FitOptions,
    QualityEstimate,
    covariance_of_estimates,
    fit_bradley_terry,
    fit_model,
    fit_thurstone_case3,
    fit_thurstone_case5,
    log_likelihood,
    log_likelihood_gradient,
    win_probability,
)
from .sampling import (
    QuadratureRule,
    SamplingBatch,
    gauss_hermite_rule,
    pair_eig,
    posterior_difference,
    select_batch,
)

__version__ = "0.1.0"

__all__ = [
    "AcrRatingTable",
    "BinaryPreferenceMatrix",
    "DataError",
    "FitOptions",
    "IterationRecord",
    "LoopConfig",
    "NumericalError",
    "PairComparisonMatrix",
    "QboostError",
    "QualityEstimate",
    "QuadratureRule",
    "SamplingBatch",
    "StudyState",
    "agreement_proportion",
    "covariance_of_estimates",
    "fit_bradley_terry",
    "fit_model",
    "fit_thurstone_case3",
    "fit_thurstone_case5",
    "gauss_hermite_rule",
    "init_state",
    "log_likelihood",
    "log_likelihood_gradient",
    "pair_eig",
    "pcm_binarize",
    "pcm_from_acr",
    "pcm_merge",
    "posterior_difference",
    "read_acr_csv",
    "read_pcm_csv",
    "select_batch",
    "srocc",
    "step",
    "to_pcm_csv",
    "win_probability",
]
