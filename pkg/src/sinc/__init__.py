"""Joint sparse network and covariate selection for compositional counts."""

__version__ = "0.1.0"

from ._backend import backend_name
from .driver import ElboBreakdown, GridResult, compute_elbo, fit_grid, fit_once
from .io import load_matrix, write_outputs
from .metrics import ConfusionCounts, confusion, confusion_edges, roc_auc, scores
from .model import (
    CountMatrix,
    CovariateMatrix,
    FitConfig,
    FitResult,
    Hyperparameters,
    LatentState,
    NetworkState,
    RegressionState,
)
from .synthetic import GraphSpec, GroundTruth, generate_dataset, generate_graph, generate_precision

__all__ = [
    "__version__", "backend_name", "ElboBreakdown", "GridResult", "compute_elbo", "fit_grid",
    "fit_once", "load_matrix", "write_outputs", "ConfusionCounts", "confusion",
    "confusion_edges", "roc_auc", "scores", "CountMatrix", "CovariateMatrix", "FitConfig",
    "FitResult", "Hyperparameters", "LatentState", "NetworkState", "RegressionState",
    "GraphSpec", "GroundTruth", "generate_dataset", "generate_graph", "generate_precision",
]
