"""Phone-to-feature mapping and the per-frame feature probability model."""

from .mapping import (
    FEATURE_NAMES,
    FeatureInventory,
    FeatureMapping,
    TargetPair,
    TARGET_PAIRS,
    feature_list,
    label_frames,
    normalize_phone,
    verify_pair_contrasts,
)
from .model import (
    FeatureModel,
    FeatureModelConfig,
    FeatureScore,
    SegmentFeatureProfile,
    TrainResult,
    average_profiles,
    binary_scores,
    evaluate_features,
    score_segments,
    stack_context,
    train_feature_model,
)

__all__ = [
    "FEATURE_NAMES",
    "FeatureInventory",
    "FeatureMapping",
    "TargetPair",
    "TARGET_PAIRS",
    "feature_list",
    "label_frames",
    "normalize_phone",
    "verify_pair_contrasts",
    "FeatureModel",
    "FeatureModelConfig",
    "FeatureScore",
    "SegmentFeatureProfile",
    "TrainResult",
    "average_profiles",
    "binary_scores",
    "evaluate_features",
    "score_segments",
    "stack_context",
    "train_feature_model",
]
