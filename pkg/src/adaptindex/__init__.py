"""Adaptive one-step estimation of single-index directions."""

from .adaptive import FitConfig, FitResult, adaptive_fit, ols_direction
from .data import Dataset, load_dataset, whiten
from .errors import AdaptIndexError, EstimationError, InputError
from .models import ModelSpec, mle_fit, oracle_one_step
from .score import KernelSpec, fit_score
from .simulation import McConfig, McReport, PredictorLaw, run_monte_carlo

__version__ = "0.1.0"

__all__ = [
    "AdaptIndexError",
    "Dataset",
    "EstimationError",
    "FitConfig",
    "FitResult",
    "InputError",
    "KernelSpec",
    "McConfig",
    "McReport",
    "ModelSpec",
    "PredictorLaw",
    "adaptive_fit",
    "fit_score",
    "load_dataset",
    "mle_fit",
    "ols_direction",
    "oracle_one_step",
    "run_monte_carlo",
    "whiten",
]
