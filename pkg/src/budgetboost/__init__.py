"""Anytime structured scene labeling via cost-greedy gradient boosting."""

from .core import (
    ScoreField,
    StructuredInstance,
    cross_entropy_risk,
    descent_direction,
    softmax,
)
from .hierarchy import SegmentationHierarchy, build_quadtree_hierarchy
from .scenes import SyntheticSceneConfig, generate_scene
from .features import CostLedger, FeatureCache, FeatureGroup, default_feature_groups
from .selectors import EntropySelector, enumerate_selectors, select
from .trees import RegressionTree, train_tree
from .boosting import AdditiveModel, TrainConfig, WeakStage, train
from .runtime import evaluate, infer, profile_corpus
from .io import load_instance, load_model, save_instance, save_model

__version__ = "0.1.0"

__all__ = [
    "ScoreField", "StructuredInstance", "cross_entropy_risk",
    "descent_direction", "softmax",
    "SegmentationHierarchy", "build_quadtree_hierarchy",
    "SyntheticSceneConfig", "generate_scene",
    "CostLedger", "FeatureCache", "FeatureGroup", "default_feature_groups",
    "EntropySelector", "enumerate_selectors", "select",
    "RegressionTree", "train_tree",
    "AdditiveModel", "TrainConfig", "WeakStage", "train",
    "evaluate", "infer", "profile_corpus",
    "load_instance", "load_model", "save_instance", "save_model",
]
