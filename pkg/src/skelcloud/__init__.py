"""Skeleton-agnostic motion toolkit: point-cloud obfuscation, retargeting and in-betweening metrics."""

from .cloud import CloudSpec, CloudTrajectory, allocate_points, realize_trajectory, sample_cloud_spec
from .interp import KeyframeSet, MetricReport, TrainingSample, emit_training_samples, extract_keyframes
from .interp import interpolate_baseline, l2p, l2q, npss
from .objectives import KnnConfig, ObjectiveBreakdown, ObjectiveWeights, knn_assign, knn_loss
from .retarget import OptimizerConfig, RetargetParams, optimize, retarget
from .skeleton import BodyGroup, Bone, MotionSequence, Skeleton, fk_heads, fk_tails, rpa_augment, validate_skeleton

__version__ = "0.1.0"

__all__ = [
    "BodyGroup",
    "Bone",
    "CloudSpec",
    "CloudTrajectory",
    "KeyframeSet",
    "KnnConfig",
    "MetricReport",
    "MotionSequence",
    "ObjectiveBreakdown",
    "ObjectiveWeights",
    "OptimizerConfig",
    "RetargetParams",
    "Skeleton",
    "TrainingSample",
    "allocate_points",
    "emit_training_samples",
    "extract_keyframes",
    "fk_heads",
    "fk_tails",
    "interpolate_baseline",
    "knn_assign",
    "knn_loss",
    "l2p",
    "l2q",
    "npss",
    "optimize",
    "realize_trajectory",
    "retarget",
    "rpa_augment",
    "sample_cloud_spec",
    "validate_skeleton",
]
