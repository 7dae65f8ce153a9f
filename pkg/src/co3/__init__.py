"""Cooperative contrastive and contextual shape-prediction pretraining for LiDAR encoders.

Vehicle and infrastructure point clouds of the same scene are voxelized;
matched voxels are pulled together by a contrastive loss while a second
head predicts each voxel's local shape-context distribution.
"""

from .config import ConfigError, RunConfig, load_config
from .estimators import Co3Pretrainer, LinearProbe, ShapeContextTransformer
from .geom import PointCloud, RigidTransform
from .shape_context import ScConfig, finalize_distribution, partition_id, raw_histograms
from .training import DivergenceError, pretrain

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "Co3Pretrainer",
    "LinearProbe",
    "ShapeContextTransformer",
    "PointCloud",
    "RigidTransform",
    "ScConfig",
    "finalize_distribution",
    "partition_id",
    "raw_histograms",
    "DivergenceError",
    "pretrain",
]
