"""Fused 3D point-cloud reconstruction from endoscopic depth/disparity sequences."""

from .config import ConfigError, PipelineConfig, load_config
from .depth_io import CameraIntrinsics, DepthMap
from .geometry import PointCloud, RigidTransform
from .icp import IcpConfig, IcpReport, ThresholdScheme, align_sequence, icp
from .map_merge import GlobalMap, merge
from .metrics import MetricReport, evaluate_sequence
from .pipeline import run_pipeline

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "ConfigError",
    "DepthMap",
    "GlobalMap",
    "IcpConfig",
    "IcpReport",
    "MetricReport",
    "PipelineConfig",
    "PointCloud",
    "RigidTransform",
    "ThresholdScheme",
    "align_sequence",
    "evaluate_sequence",
    "icp",
    "load_config",
    "merge",
    "run_pipeline",
    "__version__",
]
