"""Synthetic traffic-intersection dataset generation with occlusion-aware labels.

The pipeline is: build an intersection (``scene``), simulate traffic
(``traffic``), sample lighting and weather (``environment``), resolve
per-pixel visibility (``visibility``), derive 2D/3D labels (``annotate``) and
write KITTI/YOLO files (``export``). ``evalkit`` scores detections against the
result.
"""
from .geometry import CameraModel, PixelRect, Pose, TriMesh, rect_iou
from .scene import ConfigError, SceneConfig, build_intersection, default_catalog
from .traffic import LightCycle, TrafficParams, WorldState, initial_world, step, spawn_despawn
from .environment import EnvironmentSchedule, EnvironmentState, next_environment
from .visibility import Snapshot, analyze, raycast_oracle
from .annotate import AnnotateConfig, CaptureSchedule, capture_frame, run_capture_session
from .export import ExportOptions, write_dataset
from .evalkit import map_at_50
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "AnnotateConfig", "CameraModel", "CaptureSchedule", "ConfigError", "EnvironmentSchedule",
    "EnvironmentState", "ExportOptions", "LightCycle", "PixelRect", "Pose", "RunConfig",
    "SceneConfig", "Snapshot", "TrafficParams", "TriMesh", "WorldState", "analyze",
    "build_intersection", "capture_frame", "default_catalog", "initial_world", "load_config",
    "map_at_50", "next_environment", "raycast_oracle", "rect_iou", "run_capture_session",
    "spawn_despawn", "step", "write_dataset",
]
