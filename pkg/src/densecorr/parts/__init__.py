"""Keypoint classification and detection with linear SVMs."""

from densecorr.parts.detector import (
    Detection,
    DetectorConfig,
    TrainingSet,
    build_training_set,
    classify_keypoint,
    cross_validate,
    fuse_scores,
    predict_keypoint,
    prior_score,
    squash,
    stack_all,
    stack_neighborhood,
    train_detector,
    train_one_vs_all,
)
from densecorr.parts.svm import (
    LinearModel,
    MiningResult,
    mine_hard_negatives,
    read_model,
    svm_objective,
    train_svm,
    write_model,
)

__all__ = [
    "Detection",
    "DetectorConfig",
    "LinearModel",
    "MiningResult",
    "TrainingSet",
    "build_training_set",
    "classify_keypoint",
    "cross_validate",
    "fuse_scores",
    "mine_hard_negatives",
    "predict_keypoint",
    "prior_score",
    "read_model",
    "squash",
    "stack_all",
    "stack_neighborhood",
    "svm_objective",
    "train_detector",
    "train_one_vs_all",
    "train_svm",
    "write_model",
]
