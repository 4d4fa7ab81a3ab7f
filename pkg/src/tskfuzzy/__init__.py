"""Gradient-optimized first-order TSK fuzzy classifier for binary tabular data."""

from .core import (
    ForwardTrace,
    MembershipFunction,
    Rule,
    TskModel,
    forward,
    forward_batch,
    predict,
    predict_proba,
)
from .data import Dataset, StandardizationStats, load_csv, rank_features
from .initialization import InitConfig, build_model
from .training import TrainConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ForwardTrace",
    "InitConfig",
    "MembershipFunction",
    "Rule",
    "StandardizationStats",
    "TrainConfig",
    "TrainReport",
    "TskModel",
    "build_model",
    "forward",
    "forward_batch",
    "load_csv",
    "predict",
    "predict_proba",
    "rank_features",
    "train",
]
