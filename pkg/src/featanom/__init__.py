"""Anomaly detection on pre-extracted deep feature maps.

Fits compact statistical models of normal data in the embedding space of
a frozen feature extractor (nearest-neighbor distances, level-wise
Gaussians, per-patch Gaussians) and benchmarks how their detection AUC
holds up as the training set shrinks, with optional image-space data
augmentation to stretch very small sample sizes.
"""

from . import augment, covariance, evaluation, pipeline, scorers, store
from .augment import AugmentationPlan, AugmentationPolicy, augment_dataset, augment_image, load_policy
from .covariance import GaussianStats, fit_empirical, fit_ledoit_wolf, mahalanobis
from .evaluation import (
    MethodConfig,
    RobustnessReport,
    RobustnessRunSpec,
    auc_percent_area,
    aggregate,
    build_sample_grid,
    roc_auc,
    run_robustness,
)
from .pipeline import AlignedPatchGrid, EmbeddingVector, align_concat, global_average_pool
from .scorers import (
    KnnModel,
    MahalanobisModel,
    PadimModel,
    ScoreResult,
    knn_fit,
    knn_score,
    load_model,
    maha_fit,
    maha_score,
    padim_fit,
    padim_score,
    save_model,
)
from .store import EmbeddingDataset, FeatureMapSet, LabeledSample, load_dataset, save_dataset

__version__ = "0.1.0"
