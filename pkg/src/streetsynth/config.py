"""JSON run configuration: one section per subsystem, unknown keys rejected."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .annotate import AnnotateConfig, CaptureSchedule
from .environment import EnvironmentSchedule
from .export import ExportOptions
from .geometry import CameraModel
from .scene import ConfigError, SceneConfig
from .traffic import TrafficParams

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CameraConfig:
    height: float = 40.0
    pitch_deg: float = -45.0
    yaw_deg: float = 45.0
    target: tuple[float, float] = (0.0, 0.0)
    focal: float = 2000.0
    resolution: tuple[int, int] = (3840, 2160)

    def validate(self, prefix: str = "camera") -> None:
        if not self.height > 0:
            raise ConfigError(f"{prefix}.height", "must be positive")
        if not -90 < self.pitch_deg < 0:
            raise ConfigError(f"{prefix}.pitch_deg", "must lie in (-90, 0)")
        if not self.focal > 0:
            raise ConfigError(f"{prefix}.focal", "must be positive")
        w, h = self.resolution
        if not (isinstance(w, int) and isinstance(h, int)) or w < 1 or h < 1:
            raise ConfigError(f"{prefix}.resolution", "must be two integers >= 1")

    def build(self) -> CameraModel:
        return CameraModel.from_rig(self.height, self.pitch_deg, self.yaw_deg, self.target,
                                    self.focal, self.resolution)


@dataclass(frozen=True)
class EnvironmentConfig(EnvironmentSchedule):
    visibility_culling: bool = False


@dataclass(frozen=True)
class CaptureConfig:
    period: float = 3.0
    total_frames: int = 8000
    analysis_resolution: tuple[int, int] = (960, 540)
    min_visible: float = 0.05
    min_pixels: int = 20
    lod_thresholds: tuple[float, float] = (30.0, 80.0)

    def validate(self, prefix: str = "capture") -> None:
        self.schedule().validate(prefix)
        w, h = self.analysis_resolution
        if not (isinstance(w, int) and isinstance(h, int)):
            raise ConfigError(f"{prefix}.analysis_resolution", "must be two integers")
        AnnotateConfig(self.analysis_resolution, self.min_visible, self.min_pixels,
                       self.lod_thresholds).validate(prefix)

    def schedule(self) -> CaptureSchedule:
        return CaptureSchedule(self.period, self.total_frames)


@dataclass(frozen=True)
class RunConfig:
    version: int = SCHEMA_VERSION
    seed: int = 0
    scene: SceneConfig = SceneConfig()
    traffic: TrafficParams = TrafficParams()
    camera: CameraConfig = CameraConfig()
    environment: EnvironmentConfig = EnvironmentConfig()
    capture: CaptureConfig = CaptureConfig()
    export: ExportOptions = ExportOptions()

    def validate(self) -> "RunConfig":
        if self.version != SCHEMA_VERSION:
            raise ConfigError("version", f"unsupported schema version (expected {SCHEMA_VERSION})")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) \
                or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an integer in [0, 2**64)")
        self.scene.validate("scene")
        self.traffic.validate("traffic")
        self.camera.validate("camera")
        self.environment.validate("environment")
        self.capture.validate("capture")
        self.export.validate("export")
        return self

    def annotate_config(self, keep_buffer: bool = False) -> AnnotateConfig:
        c = self.capture
        return AnnotateConfig(c.analysis_resolution, c.min_visible, c.min_pixels,
                              c.lod_thresholds, self.environment.visibility_culling,
                              keep_buffer)

    def rngs(self) -> tuple[np.random.Generator, np.random.Generator]:
        """Independent (traffic, environment) generators derived from ``seed``."""
        traffic, env = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(traffic), np.random.default_rng(env)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def with_overrides(self, seed: Optional[int] = None, frames: Optional[int] = None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if frames is not None:
            cfg = replace(cfg, capture=replace(cfg.capture, total_frames=frames))
        return cfg


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(default: Any, value: Any, path: str):
    if is_dataclass(default):
        return _build(type(default), value, path)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, "must be true or false")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(path, "must be an integer")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(path, "must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, "must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(path, f"must be a list of {len(default)} values")
        return tuple(_coerce(d, v, f"{path}[{i}]") for i, (d, v) in enumerate(zip(default, value)))
    if isinstance(default, Mapping):
        if not isinstance(value, dict):
            raise ConfigError(path, "must be an object")
        out = {}
        for k, v in value.items():
            if v is not None and (not isinstance(v, (int, float)) or isinstance(v, bool)):
                raise ConfigError(f"{path}.{k}", "must be a number")
            out[k] = v
        return out
    raise ConfigError(path, "unsupported value")  # pragma: no cover


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "must be an object")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(sub, "unknown key")
        kwargs[key] = _coerce(getattr(defaults, key), value, sub)
    return cls(**kwargs)


def parse_config(data: Mapping) -> RunConfig:
    """Build and validate a RunConfig from decoded JSON."""
    return _build(RunConfig, dict(data), "").validate()


def load_config(path: Optional[Path | str]) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(data)
