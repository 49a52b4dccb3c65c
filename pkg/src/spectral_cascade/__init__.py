"""Spectral analysis, classification and structural optimisation of propagation trees."""

from .bounds import BOUND_IDS, BOUNDS, CATEGORIES, BoundVector, bound_vector, compute_bounds
from .cascade import (
    CascadeDataset,
    PropagationTree,
    generate_tree,
    load_dataset,
    save_dataset,
    validate_tree,
)
from .classify import ClassifierModel, cross_validate, featurize_dataset, train_classifier
from .features import STRUCTURAL_IDS, assemble_representation, feature_ids, structural_features
from .optimize import (
    EvolutionTrace,
    optimize_bound,
    optimize_score,
    trace_from_json,
    trace_report,
    validate_trace,
)
from .perturbation import (
    Migration,
    apply_migration,
    benchmark_approximation,
    enumerate_migrations,
    estimate_delta_lambda,
    estimate_delta_mu,
)
from .properties import ExactProperties, exact_properties
from .spectra import SpectrumSet, decompose
from .stats import correlation

__version__ = "0.1.0"

__all__ = [
    "BOUND_IDS", "BOUNDS", "CATEGORIES", "BoundVector", "bound_vector", "compute_bounds",
    "CascadeDataset", "PropagationTree", "generate_tree", "load_dataset", "save_dataset",
    "validate_tree", "ClassifierModel", "cross_validate", "featurize_dataset", "train_classifier",
    "STRUCTURAL_IDS", "assemble_representation", "feature_ids", "structural_features",
    "EvolutionTrace", "optimize_bound", "optimize_score", "trace_from_json", "trace_report",
    "validate_trace", "Migration", "apply_migration", "benchmark_approximation",
    "enumerate_migrations", "estimate_delta_lambda", "estimate_delta_mu", "ExactProperties",
    "exact_properties", "SpectrumSet", "decompose", "correlation",
]
