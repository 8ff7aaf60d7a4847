"""Two-stage l1-regularized M-estimation with orthogonalized losses."""

from .applications import SCHEMAS, loss_for, resolve_model
from .data import Dataset, FoldPlan, NuisanceFit, make_folds, read_csv, stream, write_csv
from .errors import (ConfigurationError, DataIntegrityError, InvalidArgumentError,
                     NumericFailureError, SingularCorrectionError)
from .estimators import (EstimationResult, PenaltyPlan, algorithm1, algorithm2, caption_lambda,
                         cross_fit_estimate, fit_second_stage, make_penalty_plan)
from .first_stage import FirstStageConfig, build_nuisance, fit_sparse
from .moments import CompositeLoss, orthogonality_check, orthogonalize
from .solver import SearchSet, SolverConfig, prox_grad_minimize

__version__ = "0.1.0"

__all__ = [
    "SCHEMAS", "loss_for", "resolve_model",
    "Dataset", "FoldPlan", "NuisanceFit", "make_folds", "read_csv", "stream", "write_csv",
    "ConfigurationError", "DataIntegrityError", "InvalidArgumentError", "NumericFailureError",
    "SingularCorrectionError",
    "EstimationResult", "PenaltyPlan", "algorithm1", "algorithm2", "caption_lambda",
    "cross_fit_estimate", "fit_second_stage", "make_penalty_plan",
    "FirstStageConfig", "build_nuisance", "fit_sparse",
    "CompositeLoss", "orthogonality_check", "orthogonalize",
    "SearchSet", "SolverConfig", "prox_grad_minimize",
]
