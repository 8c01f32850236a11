"""Frame capture: refresh LOD and visibility, then emit 2D/3D labels per object."""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .environment import EnvironmentSchedule, EnvironmentState, next_environment
from .geometry import (EPS_Z, CameraModel, PixelRect, alpha_angle, image_rect,
                       TriMesh, project_mesh_amodal, wrap_to_pi)
from .scene import Actor, ActorClass, ConfigError, IntersectionMap, select_lod
from .traffic import WorldState, spawn_despawn, step
from .visibility import IdDepthBuffer, Snapshot, VisibilityStats, analyze


@dataclass(frozen=True)
class AnnotateConfig:
    analysis_resolution: tuple[int, int] = (960, 540)
    min_visible: float = 0.05
    min_pixels: int = 20
    lod_thresholds: tuple[float, float] = (30.0, 80.0)
    visibility_culling: bool = False
    keep_buffer: bool = False

    def validate(self, prefix: str = "capture") -> None:
        w, h = self.analysis_resolution
        if w < 1 or h < 1:
            raise ConfigError(f"{prefix}.analysis_resolution", "must be at least 1x1")
        if not 0 <= self.min_visible <= 1:
            raise ConfigError(f"{prefix}.min_visible", "must lie in [0, 1]")
        if self.min_pixels < 0:
            raise ConfigError(f"{prefix}.min_pixels", "must be non-negative")
        d0, d1 = self.lod_thresholds
        if not 0 <= d0 < d1:
            raise ConfigError(f"{prefix}.lod_thresholds", "must satisfy 0 <= d0 < d1")


@dataclass(frozen=True)
class CaptureSchedule:
    period: float = 3.0
    total_frames: int = 8000

    def validate(self, prefix: str = "capture") -> None:
        if not self.period > 0:
            raise ConfigError(f"{prefix}.period", "must be positive")
        if not isinstance(self.total_frames, int) or self.total_frames < 1:
            raise ConfigError(f"{prefix}.total_frames", "must be an integer >= 1")

    def capture_times(self) -> list[float]:
        return [k * self.period for k in range(self.total_frames)]


@dataclass(frozen=True)
class Box3D:
    location: tuple[float, float, float]  # camera frame, bottom-face centre
    dimensions: tuple[float, float, float]  # (h, w, l)
    rotation_y: float
    alpha: float


@dataclass(frozen=True)
class ObjectAnnotation:
    actor_id: int
    kind: str
    rect_modal: PixelRect
    rect_amodal: PixelRect
    rect_unclipped: PixelRect
    box3d: Box3D
    truncation: float
    occlusion_level: int
    visible_fraction: float
    lod: int = 0

    def to_dict(self) -> dict:
        return {
            "actor_id": self.actor_id,
            "class": self.kind,
            "rect_modal": list(self.rect_modal.as_tuple()),
            "rect_amodal": list(self.rect_amodal.as_tuple()),
            "rect_unclipped": list(self.rect_unclipped.as_tuple()),
            "location": list(self.box3d.location),
            "dimensions": list(self.box3d.dimensions),
            "rotation_y": self.box3d.rotation_y,
            "alpha": self.box3d.alpha,
            "truncation": self.truncation,
            "occlusion_level": self.occlusion_level,
            "visible_fraction": self.visible_fraction,
            "lod": self.lod,
        }


@dataclass(frozen=True)
class FrameAnnotation:
    index: int
    time: float
    camera: CameraModel
    environment: EnvironmentState
    objects: tuple[ObjectAnnotation, ...]
    buffer: Optional[IdDepthBuffer] = field(default=None, compare=False, repr=False)
    kinds: Mapping[int, str] = field(default_factory=dict, compare=False, repr=False)


def truncation(rect_unclipped: PixelRect, image: tuple[int, int]) -> float:
    """Fraction of the unclipped rect lying outside the image (1 for empty rects).

    Built from the per-axis overhang fractions rather than ``1 - inside/area``
    so that an overhang too small to change the area still counts.
    """
    r = rect_unclipped
    if r.area <= 0.0:
        return 1.0
    W, H = image
    out_x = max(0.0, min(r.right, 0.0) - r.left) + max(0.0, r.right - max(r.left, W))
    out_y = max(0.0, min(r.bottom, 0.0) - r.top) + max(0.0, r.bottom - max(r.top, H))
    a = min(1.0, out_x / r.width)
    b = min(1.0, out_y / r.height)
    return a + b - a * b


def occlusion_level(visible_fraction: float) -> int:
    """KITTI occlusion grade: 0 at >= 0.9 visible, 1 at >= 0.5, else 2.

    Grade 3 (unknown) is never produced.
    """
    if not 0.0 <= visible_fraction <= 1.0:
        raise ValueError("visible fraction must lie in [0, 1]")
    if visible_fraction >= 0.9:
        return 0
    if visible_fraction >= 0.5:
        return 1
    return 2


def rotation_y(yaw: float, cam: CameraModel) -> float:
    """Actor heading as an angle about the camera y axis, zero along camera +z."""
    fwd = cam.rotation @ np.array([math.cos(yaw), math.sin(yaw), 0.0])
    return wrap_to_pi(math.atan2(fwd[0], fwd[2]))


def bbox3d_kitti(actor: Actor, cam: CameraModel) -> Box3D:
    loc = cam.world_to_camera(actor.pose.position)
    if loc[2] <= 0.0:
        raise ValueError(f"actor {actor.id} is behind the camera")
    ry = rotation_y(actor.pose.yaw, cam)
    return Box3D(tuple(float(c) for c in loc), actor.actor_class.dimensions, ry,
                 alpha_angle(loc, ry))


def bbox2d(actor: Actor, stats: VisibilityStats, cam: CameraModel, mode: str = "amodal",
           analysis_resolution: Optional[tuple[int, int]] = None) -> Optional[PixelRect]:
    """Image-clipped 2D box of an actor at camera resolution.

    ``amodal`` covers the full mesh projection; ``modal`` the pixels the actor
    wins in the id buffer, rescaled from analysis resolution and kept inside
    the amodal box.
    """
    unclipped = project_mesh_amodal(actor.mesh, actor.pose, cam)
    if unclipped is None:
        return None
    amodal = unclipped.intersect(image_rect(cam.width, cam.height))
    if mode == "amodal" or amodal is None:
        return amodal
    if mode != "modal":
        raise ValueError(f"unknown box mode {mode!r}")
    if stats.bounds is None:
        return None
    aw, ah = analysis_resolution or (cam.width, cam.height)
    sx, sy = cam.width / aw, cam.height / ah
    x0, y0, x1, y1 = stats.bounds
    pixels = PixelRect(x0 * sx, y0 * sy, (x1 + 1) * sx, (y1 + 1) * sy)
    return pixels.intersect(amodal)


def capture_frame(world: WorldState, imap: IntersectionMap, cam: CameraModel,
                  env: EnvironmentState, cfg: AnnotateConfig,
                  catalog: Mapping[str, ActorClass], index: int = 0,
                  time: Optional[float] = None) -> FrameAnnotation:
    """Annotate every sufficiently visible actor in one world snapshot."""
    return annotate_actors(world.actors(imap, catalog), imap.props, cam, env, cfg, index,
                           world.t if time is None else time)


def annotate_actors(actors: Sequence[Actor], props: Sequence[TriMesh], cam: CameraModel,
                    env: EnvironmentState, cfg: AnnotateConfig, index: int = 0,
                    time: float = 0.0) -> FrameAnnotation:
    """Refresh LODs, resolve visibility once, and label the actors that pass the filters."""
    cam_pos = cam.position
    actors = [replace(a, active_lod=select_lod(a.pose.position, cam_pos, cfg.lod_thresholds))
              for a in actors]
    buffer, stats = analyze(Snapshot(actors, props), cam, cfg.analysis_resolution)
    limit = env.visibility_limit if cfg.visibility_culling else None
    objects = []
    for actor in actors:
        st = stats[actor.id]
        frac = st.visible_fraction
        if frac < cfg.min_visible or st.solo_pixels < cfg.min_pixels:
            continue
        if limit is not None and np.linalg.norm(actor.pose.position - cam_pos) > limit:
            continue
        obj = _annotate(actor, st, cam, cfg)
        if obj is not None:
            objects.append(obj)
    return FrameAnnotation(
        index, time, cam, env, tuple(objects),
        buffer if cfg.keep_buffer else None, {a.id: a.kind for a in actors},
    )


def _annotate(actor: Actor, st: VisibilityStats, cam: CameraModel,
              cfg: AnnotateConfig) -> Optional[ObjectAnnotation]:
    if cam.world_to_camera(actor.pose.position)[2] <= EPS_Z:
        return None
    unclipped = project_mesh_amodal(actor.mesh, actor.pose, cam)
    if unclipped is None:
        return None
    amodal = unclipped.intersect(image_rect(cam.width, cam.height))
    if amodal is None or amodal.area <= 0.0:
        return None
    modal = bbox2d(actor, st, cam, "modal", cfg.analysis_resolution)
    if modal is None:
        return None
    frac = st.visible_fraction
    return ObjectAnnotation(
        actor_id=actor.id, kind=actor.kind, rect_modal=modal, rect_amodal=amodal,
        rect_unclipped=unclipped, box3d=bbox3d_kitti(actor, cam),
        truncation=truncation(unclipped, cam.resolution), occlusion_level=occlusion_level(frac),
        visible_fraction=frac, lod=actor.active_lod,
    )


def _integration_steps(period: float, dt: float) -> tuple[int, float]:
    n = max(1, math.ceil(period / dt - 1e-9))
    return n, period / n


def simulate_snapshots(world: WorldState, imap: IntersectionMap, schedule: CaptureSchedule,
                       rng: np.random.Generator,
                       catalog: Optional[Mapping[str, ActorClass]] = None) -> Iterator[WorldState]:
    """Yield the world at every capture time ``k * period``.

    The integration step is shrunk so a whole number of steps spans one
    period, and the clock is reset to the exact capture time at each boundary.
    """
    n, dt = _integration_steps(schedule.period, world.params.dt)
    for k in range(schedule.total_frames):
        world = replace(world, t=k * schedule.period)
        yield world
        if k + 1 == schedule.total_frames:
            break
        for _ in range(n):
            world = step(world, imap, dt, catalog)
            world = spawn_despawn(world, imap, rng, catalog=catalog)


_worker: dict = {}


def _init_worker(imap, cam, cfg, catalog):
    _worker.update(imap=imap, cam=cam, cfg=cfg, catalog=catalog)


def _capture_job(args):
    world, env, index = args
    w = _worker
    frame = capture_frame(world, w["imap"], w["cam"], env, w["cfg"], w["catalog"], index,
                          world.t)
    return frame


def run_capture_session(world: WorldState, imap: IntersectionMap, cam: CameraModel,
                        schedule: CaptureSchedule, env_schedule: EnvironmentSchedule,
                        cfg: AnnotateConfig, traffic_rng: np.random.Generator,
                        env_rng: np.random.Generator,
                        catalog: Mapping[str, ActorClass], jobs: int = 1) -> Iterator[FrameAnnotation]:
    """Simulate at a fixed step and annotate a frame every ``schedule.period`` seconds.

    Simulation is strictly sequential; with ``jobs > 1`` captures run in a
    process pool and are yielded in frame order, giving the same stream as
    ``jobs == 1``.
    """
    def work():
        for k, snap in enumerate(simulate_snapshots(world, imap, schedule, traffic_rng, catalog)):
            env = next_environment(env_rng, env_schedule, index=k)
            yield snap, env, k

    if jobs <= 1:
        for snap, env, k in work():
            yield capture_frame(snap, imap, cam, env, cfg, catalog, k, snap.t)
        return

    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                             initargs=(imap, cam, cfg, catalog)) as pool:
        pending: deque = deque()
        for item in work():
            pending.append(pool.submit(_capture_job, item))
            if len(pending) >= 4 * jobs:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()
