"""Procedural four-way intersection, actor catalog and LOD selection.

The junction sits at the world origin with one road running east-west and one
north-south. Traffic drives on the right. Approaches are named after the arm a
vehicle arrives from (``"S"`` traffic heads north).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose, TriMesh

PEDESTRIAN = "pedestrian"
VEHICLE = "vehicle"
KINDS = (PEDESTRIAN, VEHICLE)

APPROACHES = ("N", "E", "S", "W")
# unit heading of traffic arriving from each arm
APPROACH_HEADING = {"N": (0.0, -1.0), "E": (-1.0, 0.0), "S": (0.0, 1.0), "W": (1.0, 0.0)}
OPPOSITE = {"N": "S", "S": "N", "E": "W", "W": "E"}
AXIS = {"N": "NS", "S": "NS", "E": "EW", "W": "EW"}


class ConfigError(ValueError):
    """Invalid configuration value; ``field`` is the dotted path of the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class SceneConfig:
    lanes_per_dir: int = 2
    road_width: float = 14.0
    sidewalk_width: float = 3.0
    arm_length: float = 120.0
    block_size: float = 30.0
    alley_width: float = 6.0
    building_setback: float = 2.0
    building_height: float = 18.0

    def validate(self, prefix: str = "scene") -> None:
        if not isinstance(self.lanes_per_dir, int) or isinstance(self.lanes_per_dir, bool) \
                or self.lanes_per_dir < 1:
            raise ConfigError(f"{prefix}.lanes_per_dir", "must be an integer >= 1")
        for name in ("road_width", "sidewalk_width", "block_size", "building_height"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{prefix}.{name}", "must be positive")
        for name in ("alley_width", "building_setback"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{prefix}.{name}", "must be non-negative")
        inner = self.road_width / 2 + self.sidewalk_width
        if self.arm_length <= inner + 1.0:
            raise ConfigError(f"{prefix}.arm_length", "must exceed the junction half-size")

    @property
    def lane_width(self) -> float:
        return self.road_width / (2 * self.lanes_per_dir)


@dataclass(frozen=True)
class Lane:
    approach: str
    direction: str  # "in" towards the junction, "out" away from it
    index: int  # 0 is the lane nearest the centre line
    points: tuple[tuple[float, float], ...]

    @property
    def length(self) -> float:
        p = np.asarray(self.points)
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


@dataclass(frozen=True)
class Route:
    """Straight through-path followed by one actor.

    For vehicles ``hold`` is the stop-line arc position and ``release`` the arc
    where the far side of the junction box is reached. For pedestrians they
    bound the crosswalk: ``hold`` is the kerb where waiting happens.
    """

    kind: str
    start: tuple[float, float]
    heading: tuple[float, float]
    length: float
    hold: float
    release: float
    axis: str  # signal group that controls the hold point
    approach: str
    lane: int = -1


@dataclass(frozen=True)
class IntersectionMap:
    config: SceneConfig
    lanes: tuple[Lane, ...]
    crosswalks: tuple[tuple[tuple[float, float], ...], ...]
    sidewalks: tuple[tuple[tuple[float, float], ...], ...]
    stop_lines: dict  # approach -> arc position on that approach's inbound lanes
    routes: tuple[Route, ...]
    props: tuple[TriMesh, ...] = field(repr=False)

    def routes_of(self, kind: str) -> list[int]:
        return [i for i, r in enumerate(self.routes) if r.kind == kind]

    def to_json(self) -> str:
        """Canonical serialization (stable across runs and platforms)."""
        doc = {
            "config": asdict(self.config),
            "lanes": [asdict(lane) for lane in self.lanes],
            "crosswalks": self.crosswalks,
            "sidewalks": self.sidewalks,
            "stop_lines": self.stop_lines,
            "routes": [asdict(r) for r in self.routes],
            "props": [{"vertices": m.vertices.tolist(), "triangles": m.triangles.tolist()}
                      for m in self.props],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def box_mesh(lo, hi, subdiv: int = 1) -> TriMesh:
    """Closed axis-aligned box with each face split into ``subdiv**2`` quads."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n = int(subdiv)
    t = np.linspace(0.0, 1.0, n + 1)
    verts, tris = [], []
    offset = 0
    for axis in range(3):
        a1, a2 = [k for k in range(3) if k != axis]
        for side, val in ((0, lo[axis]), (1, hi[axis])):
            g1, g2 = np.meshgrid(lo[a1] + t * (hi[a1] - lo[a1]), lo[a2] + t * (hi[a2] - lo[a2]),
                                 indexing="ij")
            face = np.zeros((n + 1, n + 1, 3))
            face[..., axis] = val
            face[..., a1] = g1
            face[..., a2] = g2
            verts.append(face.reshape(-1, 3))
            idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1) + offset
            q00, q10, q01, q11 = idx[:-1, :-1], idx[1:, :-1], idx[:-1, 1:], idx[1:, 1:]
            first = np.stack([q00, q10, q11], axis=-1).reshape(-1, 3)
            second = np.stack([q00, q11, q01], axis=-1).reshape(-1, 3)
            # (a1, a2) is a left-handed pair for the y faces, so flip those the other way
            if (side == 0) != (axis == 1):
                first, second = first[:, ::-1], second[:, ::-1]
            tris.extend([first, second])
            offset += (n + 1) ** 2
    return TriMesh(np.concatenate(verts), np.concatenate(tris))


@dataclass(frozen=True, eq=False)
class ActorClass:
    kind: str
    lod_meshes: tuple[TriMesh, TriMesh, TriMesh]
    dimensions: tuple[float, float, float]  # (height, width, length)
    nominal_speed: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown actor kind {self.kind!r}")
        if len(self.lod_meshes) != 3:
            raise ValueError("an actor class needs exactly three LOD meshes")
        ref = self.lod_meshes[0].extent
        for mesh in self.lod_meshes[1:]:
            if np.any(np.abs(mesh.extent - ref) > 0.02 * ref):
                raise ValueError("LOD meshes must share the same bounds within 2%")


def _vehicle_meshes(height: float, width: float, length: float):
    body_top = 0.62 * height
    cabin = (np.array([-0.3 * length, -0.45 * width, body_top]),
             np.array([0.2 * length, 0.45 * width, height]))
    body = (np.array([-length / 2, -width / 2, 0.0]), np.array([length / 2, width / 2, body_top]))
    return tuple(
        TriMesh.concatenate([box_mesh(*body, subdiv=s), box_mesh(*cabin, subdiv=s)])
        for s in (4, 2, 1)
    )


def _pedestrian_meshes(height: float, width: float, length: float):
    hip, neck = 0.5 * height, 0.82 * height
    hw, hl = width / 2, length / 2

    def upper(subdiv):
        return [box_mesh([-0.3 * hl, -hw, hip], [0.3 * hl, hw, neck], subdiv),
                box_mesh([-0.25 * width, -0.25 * width, neck],
                         [0.25 * width, 0.25 * width, height], subdiv)]

    # LOD0 models two legs; coarser levels merge them with the same outer corners
    lod0 = TriMesh.concatenate([
        box_mesh([-hl, -hw, 0.0], [hl, -0.1 * hw, hip], subdiv=2),
        box_mesh([-hl, 0.1 * hw, 0.0], [hl, hw, hip], subdiv=2),
        *upper(2),
    ])
    lod1 = TriMesh.concatenate([box_mesh([-hl, -hw, 0.0], [hl, hw, hip], subdiv=2), *upper(2)])
    lod2 = TriMesh.concatenate([box_mesh([-hl, -hw, 0.0], [hl, hw, hip]), *upper(1)])
    return lod0, lod1, lod2


def make_actor_class(kind: str, dimensions: Optional[tuple[float, float, float]] = None,
                     nominal_speed: Optional[float] = None) -> ActorClass:
    if kind == VEHICLE:
        dims = dimensions or (1.5, 1.8, 4.5)
        meshes = _vehicle_meshes(*dims)
        speed = 10.0 if nominal_speed is None else nominal_speed
    elif kind == PEDESTRIAN:
        dims = dimensions or (1.8, 0.5, 0.5)
        meshes = _pedestrian_meshes(*dims)
        speed = 1.4 if nominal_speed is None else nominal_speed
    else:
        raise ValueError(f"unknown actor kind {kind!r}")
    return ActorClass(kind, meshes, tuple(float(d) for d in dims), float(speed))


def default_catalog(vehicle_speed: float = 10.0, pedestrian_speed: float = 1.4) -> dict:
    return {
        VEHICLE: make_actor_class(VEHICLE, nominal_speed=vehicle_speed),
        PEDESTRIAN: make_actor_class(PEDESTRIAN, nominal_speed=pedestrian_speed),
    }


@dataclass(frozen=True)
class Actor:
    id: int
    actor_class: ActorClass
    pose: Pose
    speed: float
    route: int
    progress: float
    active_lod: int = 0

    @property
    def kind(self) -> str:
        return self.actor_class.kind

    @property
    def mesh(self) -> TriMesh:
        return self.actor_class.lod_meshes[self.active_lod]


def select_lod(actor_position, cam_position, thresholds=(30.0, 80.0)) -> int:
    """LOD index from camera distance: 0 below ``d0``, 1 below ``d1``, else 2."""
    d0, d1 = thresholds
    if not d0 < d1:
        raise ValueError("LOD thresholds must satisfy d0 < d1")
    d = float(np.linalg.norm(np.asarray(actor_position, float) - np.asarray(cam_position, float)))
    if d < d0:
        return 0
    if d < d1:
        return 1
    return 2


def _right_of(heading):
    hx, hy = heading
    return (hy, -hx)


def _pt(x: float, y: float) -> tuple[float, float]:
    # round away float noise so the serialized map is platform independent
    return (round(x, 9) + 0.0, round(y, 9) + 0.0)


def build_intersection(cfg: SceneConfig = SceneConfig()) -> IntersectionMap:
    """Lay out lanes, crosswalks, sidewalks, stop lines and building props."""
    cfg.validate()
    hw = cfg.road_width / 2
    sw = cfg.sidewalk_width
    arm = cfg.arm_length
    lw = cfg.lane_width
    stop_offset = hw + sw  # stop lines sit on the outer crosswalk edge

    lanes: list[Lane] = []
    routes: list[Route] = []
    stop_lines = {}
    for approach in APPROACHES:
        hx, hy = APPROACH_HEADING[approach]
        rx, ry = _right_of((hx, hy))
        in_len = arm - hw
        stop_lines[approach] = round(arm - stop_offset, 9)
        for i in range(cfg.lanes_per_dir):
            off = lw * (i + 0.5)
            ox, oy = rx * off, ry * off
            start = (-hx * arm + ox, -hy * arm + oy)
            box_in = (-hx * hw + ox, -hy * hw + oy)
            lanes.append(Lane(approach, "in", i, (_pt(*start), _pt(*box_in))))
            # outbound lane on this arm carries traffic heading away, on the other side
            out_start = (-hx * hw - ox, -hy * hw - oy)
            out_end = (-hx * arm - ox, -hy * arm - oy)
            lanes.append(Lane(approach, "out", i, (_pt(*out_start), _pt(*out_end))))
            routes.append(Route(
                kind=VEHICLE, start=_pt(*start), heading=(hx, hy), length=2 * arm,
                hold=stop_lines[approach], release=in_len + 2 * hw, axis=AXIS[approach],
                approach=approach, lane=i,
            ))

    s = hw + sw / 2  # sidewalk centre line
    crosswalks = []
    for sx in (1.0, -1.0):
        crosswalks.append((_pt(s * sx, -hw), _pt(s * sx, hw)))  # across the EW road
        crosswalks.append((_pt(-hw, s * sx), _pt(hw, s * sx)))  # across the NS road
    sidewalks = []
    for qx in (1.0, -1.0):
        for qy in (1.0, -1.0):
            sidewalks.append((_pt(s * qx, arm * qy), _pt(s * qx, s * qy), _pt(arm * qx, s * qy)))

    # pedestrians walk a sidewalk line end to end, crossing one road on the way
    for line in (1.0, -1.0):
        for sign in (1.0, -1.0):
            # along x = line*s heading +-y, crossing the EW road
            routes.append(Route(
                kind=PEDESTRIAN, start=_pt(line * s, -sign * arm), heading=(0.0, sign),
                length=2 * arm, hold=arm - hw, release=arm + hw, axis="EW",
                approach="N" if sign < 0 else "S",
            ))
            routes.append(Route(
                kind=PEDESTRIAN, start=_pt(-sign * arm, line * s), heading=(sign, 0.0),
                length=2 * arm, hold=arm - hw, release=arm + hw, axis="NS",
                approach="E" if sign < 0 else "W",
            ))

    return IntersectionMap(cfg, tuple(lanes), tuple(crosswalks), tuple(sidewalks), stop_lines,
                           tuple(routes), _build_props(cfg))


def _build_props(cfg: SceneConfig) -> tuple[TriMesh, ...]:
    hw, sw = cfg.road_width / 2, cfg.sidewalk_width
    inner = hw + sw + cfg.building_setback
    props = []
    starts = []
    x = inner
    while x + cfg.block_size <= cfg.arm_length:
        starts.append(x)
        x += cfg.block_size + cfg.alley_width
    heights = (1.0, 0.6, 1.35)
    for qi, (qx, qy) in enumerate(((1, 1), (-1, 1), (-1, -1), (1, -1))):
        for i, a in enumerate(starts):
            for j, b in enumerate(starts):
                h = cfg.building_height * heights[(i + 2 * j + qi) % 3]
                xs = sorted((qx * a, qx * (a + cfg.block_size)))
                ys = sorted((qy * b, qy * (b + cfg.block_size)))
                props.append(box_mesh([xs[0], ys[0], 0.0], [xs[1], ys[1], h]))
    # signal poles on the four kerb corners
    pole = hw + sw + 0.4
    for qx, qy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        cxp, cyp = qx * pole, qy * pole
        props.append(box_mesh([cxp - 0.15, cyp - 0.15, 0.0], [cxp + 0.15, cyp + 0.15, 6.0]))
    return tuple(props)


def route_pose(route: Route, progress: float, lateral: float = 0.0) -> Pose:
    hx, hy = route.heading
    rx, ry = _right_of(route.heading)
    x = route.start[0] + hx * progress + rx * lateral
    y = route.start[1] + hy * progress + ry * lateral
    return Pose((x, y, 0.0), math.atan2(hy, hx))
