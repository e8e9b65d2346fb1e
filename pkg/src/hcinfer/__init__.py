"""Inference of hidden-cascade spreading parameters by distribution classification."""

from .cascade import BaselineModel, SpreadParams, run_ic, simulate_hidden_cascade
from .classify import ClassifierSpec, entity_accuracy, grid_search
from .features import CascadeBank, FeatureSet, generate_feature_set
from .graph import Graph, SeedSchedule, gen_balanced_tree, gen_barabasi_albert, gen_star
from .optimize import (
    InferenceResult,
    ObjectiveContext,
    SyntheticProblem,
    dc_objective,
    infer,
    learn_params,
    replicate,
    tune_and_restart,
)
from .powell import PowellConfig, powell_minimize

__version__ = "0.1.0"

__all__ = [
    "BaselineModel", "CascadeBank", "ClassifierSpec", "FeatureSet", "Graph", "InferenceResult",
    "ObjectiveContext", "PowellConfig", "SeedSchedule", "SpreadParams", "SyntheticProblem",
    "dc_objective", "entity_accuracy", "gen_balanced_tree", "gen_barabasi_albert", "gen_star",
    "generate_feature_set", "grid_search", "infer", "learn_params", "powell_minimize",
    "replicate", "run_ic", "simulate_hidden_cascade", "tune_and_restart",
]
