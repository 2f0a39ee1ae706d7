"""Phenotype classifiers used as the bias probe, with per-group label grouping."""
from .classifier import (
    MODES,
    ClassifierConfig,
    ClassifierError,
    ClassifierModel,
    TrainReport,
    early_stopping,
    embed,
    per_group_accuracy,
    predict,
    predict_labels,
    train_classifier,
    train_classifier_seeds,
)
from .grouping import GroupedLabelMap, apply_grouping, group_labels, retained_labels

__all__ = [
    "MODES", "ClassifierConfig", "ClassifierError", "ClassifierModel", "GroupedLabelMap", "TrainReport",
    "apply_grouping", "early_stopping", "embed", "group_labels", "per_group_accuracy", "predict",
    "predict_labels", "retained_labels", "train_classifier", "train_classifier_seeds",
]
