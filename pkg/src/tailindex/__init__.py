"""Tail-index estimation from exceedances of exponential thresholds.

Submodules:

* ``dist_models``: Pareto-type laws, samplers and dataset I/O
* ``tail_estimators``: the tail-event estimator and its relatives
* ``adaptive_select``: data-driven threshold choice
* ``minimax_lb``: the hypothesis family behind the lower bound, KL and Fano
* ``mc_harness``: seeded simulation sweeps, rate fits and coverage
* ``cli``: command-line front end
"""

from .dist_models import (
    Dataset,
    ExactPareto,
    PerturbedPareto,
    PiecewiseLB,
    SecondOrderParams,
    parse_model,
    read_dataset,
    sample,
    verify_membership,
    write_dataset,
)
from .errors import (
    DegenerateSpacing,
    EmptyTail,
    EstimationError,
    InsufficientData,
    NoAdmissibleK,
    TailIndexError,
    TooSmallN,
)
from .tail_estimators import alpha_hat_k, alpha_hat_uv, alpha_tilde_quantile, hill, oracle_estimate

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ExactPareto",
    "PerturbedPareto",
    "PiecewiseLB",
    "SecondOrderParams",
    "parse_model",
    "read_dataset",
    "sample",
    "verify_membership",
    "write_dataset",
    "DegenerateSpacing",
    "EmptyTail",
    "EstimationError",
    "InsufficientData",
    "NoAdmissibleK",
    "TailIndexError",
    "TooSmallN",
    "alpha_hat_k",
    "alpha_hat_uv",
    "alpha_tilde_quantile",
    "hill",
    "oracle_estimate",
]
