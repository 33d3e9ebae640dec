"""Probabilistic clustering of attributed networks with learned neighbor
preferences and per-vertex topology/feature inclinations, fitted by EM."""

__version__ = "0.1.0"

from .network import (
    AttributedNetwork,
    NetworkFormatError,
    load_edge_list,
    load_feature_table,
    load_labels,
    validate_network,
)
from .similarity import SimilarityMaps, compute_similarities
from .state import ModelState, NumericalError, init_state, log_likelihood, lower_bound
from .em import EMConfig, FitResult, assign_labels, fit
from .synthetic import SyntheticSpec, generate_network
from .evaluation import EvalReport, accuracy, evaluate, hungarian, nmi

__all__ = [
    "AttributedNetwork", "NetworkFormatError", "load_edge_list", "load_feature_table",
    "load_labels", "validate_network", "SimilarityMaps", "compute_similarities",
    "ModelState", "NumericalError", "init_state", "log_likelihood", "lower_bound",
    "EMConfig", "FitResult", "assign_labels", "fit", "SyntheticSpec", "generate_network",
    "EvalReport", "accuracy", "evaluate", "hungarian", "nmi",
]
