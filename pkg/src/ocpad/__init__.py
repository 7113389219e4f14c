"""Client-specific one-class face presentation-attack detection."""

from .dataset import FeatureRecord, Split, SynthConfig, generate_synthetic, load_features, save_features
from .evaluation import evaluate, fuse_per_video, roc_auc, eer, hter, per_client_thresholds, sample_size_sweep
from .mahalanobis import MahalanobisDetector
from .ocsrc import OneClassSRC
from .ocsvm import OneClassSVM
from .registry import DetectorSpec, ModelRegistry, load_registry, save_registry, score_query, train_registry

__version__ = "0.1.0"

__all__ = [
    "DetectorSpec",
    "FeatureRecord",
    "MahalanobisDetector",
    "ModelRegistry",
    "OneClassSRC",
    "OneClassSVM",
    "Split",
    "SynthConfig",
    "eer",
    "evaluate",
    "fuse_per_video",
    "generate_synthetic",
    "hter",
    "load_features",
    "load_registry",
    "per_client_thresholds",
    "roc_auc",
    "sample_size_sweep",
    "save_features",
    "save_registry",
    "score_query",
    "train_registry",
]
