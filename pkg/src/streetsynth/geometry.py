"""Camera model, rigid transforms, projection and pixel-rectangle algebra.

Frames
------
World: x east, y north, z up; the ground plane is ``z = 0``.
Actor-local: x forward (length), y left (width), z up (height); the origin is
the centre of the bottom face.
Camera: x right, y down, z forward (the KITTI convention), so exported boxes
need no extra rotation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

# Points at or in front of this camera depth are considered behind the camera.
EPS_Z = 0.01

TWO_PI = 2.0 * math.pi


def wrap_to_pi(angle: float) -> float:
    """Wrap an angle in radians to ``[-pi, pi)``."""
    wrapped = math.fmod(angle + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    out = wrapped - math.pi
    # fmod can land exactly on +pi after the subtraction for tiny negatives
    if out >= math.pi:
        out -= TWO_PI
    return out


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    """Position of an actor's bottom-face centre plus its heading.

    ``yaw`` is measured counter-clockwise from world +x about the up axis and
    is normalized to ``[-pi, pi)`` on construction.
    """

    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "yaw", wrap_to_pi(float(self.yaw)))

    @property
    def rotation(self) -> np.ndarray:
        return yaw_matrix(self.yaw)

    def to_world(self, local_points: np.ndarray) -> np.ndarray:
        """Map ``(N, 3)`` actor-local points into the world frame."""
        return np.asarray(local_points, dtype=np.float64) @ self.rotation.T + self.position

    def to_local(self, world_points: np.ndarray) -> np.ndarray:
        return (np.asarray(world_points, dtype=np.float64) - self.position) @ self.rotation


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole camera with a rigid world-to-camera transform.

    A world point ``p`` maps to camera coordinates ``rotation @ p + translation``.
    """

    rotation: np.ndarray
    translation: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 3840
    height: int = 2160

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3).copy()
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3).copy()
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
            raise ValueError("camera rotation is not orthonormal")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be at least 1x1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def look_at(cls, eye, target, fx: float, fy: Optional[float] = None,
                resolution: tuple[int, int] = (3840, 2160), principal=None) -> "CameraModel":
        """Camera at ``eye`` whose optical axis passes through ``target``.

        The world up axis (+z) maps to image-up; the view direction must not be
        vertical.
        """
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, [0.0, 0.0, 1.0])
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise ValueError("look_at direction is parallel to the up axis")
        right /= norm
        down = np.cross(forward, right)
        rot = np.stack([right, down, forward])
        w, h = resolution
        cx, cy = principal if principal is not None else (w / 2.0, h / 2.0)
        return cls(rot, -rot @ eye, fx, fy if fy is not None else fx, cx, cy, w, h)

    @classmethod
    def from_rig(cls, height: float = 40.0, pitch_deg: float = -45.0, yaw_deg: float = 45.0,
                 target=(0.0, 0.0), focal: float = 2000.0,
                 resolution: tuple[int, int] = (3840, 2160)) -> "CameraModel":
        """Pole-mounted camera ``height`` metres up, pitched down at ``target``.

        ``yaw_deg`` is the compass heading of the optical axis, counter-clockwise
        from world +x.
        """
        if not -90.0 < pitch_deg < 0.0:
            raise ValueError("pitch_deg must lie in (-90, 0)")
        yaw = math.radians(yaw_deg)
        ground_dist = height / math.tan(-math.radians(pitch_deg))
        tx, ty = target
        eye = (tx - ground_dist * math.cos(yaw), ty - ground_dist * math.sin(yaw), height)
        return cls.look_at(eye, (tx, ty, 0.0), focal, resolution=resolution)

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def position(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.rotation

    def scaled(self, width: int, height: int) -> "CameraModel":
        """Same viewpoint rendered at another resolution."""
        sx, sy = width / self.width, height / self.height
        return CameraModel(self.rotation, self.translation, self.fx * sx, self.fy * sy,
                           self.cx * sx, self.cy * sy, width, height)

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraModel":
        return cls(d["rotation"], d["translation"], d["fx"], d["fy"], d["cx"], d["cy"],
                   d["width"], d["height"])


@dataclass(frozen=True)
class PixelRect:
    """Axis-aligned pixel rectangle in continuous coordinates."""

    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        if self.left > self.right or self.top > self.bottom:
            raise ValueError(f"malformed rect {self}")

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return self.width * self.height

    def intersect(self, other: "PixelRect") -> Optional["PixelRect"]:
        left, top = max(self.left, other.left), max(self.top, other.top)
        right, bottom = min(self.right, other.right), min(self.bottom, other.bottom)
        if left > right or top > bottom:
            return None
        return PixelRect(left, top, right, bottom)

    def contains(self, other: "PixelRect", tol: float = 0.0) -> bool:
        return (other.left >= self.left - tol and other.top >= self.top - tol
                and other.right <= self.right + tol and other.bottom <= self.bottom + tol)

    def scaled(self, sx: float, sy: float) -> "PixelRect":
        return PixelRect(self.left * sx, self.top * sy, self.right * sx, self.bottom * sy)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)


def image_rect(width: float, height: float) -> PixelRect:
    return PixelRect(0.0, 0.0, float(width), float(height))


def rect_iou(a: PixelRect, b: PixelRect) -> float:
    """Intersection over union; 0 when the union is empty."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh in actor-local (or world, for props) coordinates."""

    vertices: np.ndarray
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(verts) == 0:
            raise ValueError("mesh has no vertices")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise ValueError("triangle index out of range")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        aabb = np.stack([verts.min(axis=0), verts.max(axis=0)])
        aabb.setflags(write=False)
        object.__setattr__(self, "aabb", aabb)

    @property
    def extent(self) -> np.ndarray:
        return self.aabb[1] - self.aabb[0]

    def triangle_vertices(self) -> np.ndarray:
        """``(T, 3, 3)`` array of triangle corner positions."""
        return self.vertices[self.triangles]

    @staticmethod
    def concatenate(meshes: Sequence["TriMesh"]) -> "TriMesh":
        verts, tris, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            offset += len(m.vertices)
        return TriMesh(np.concatenate(verts), np.concatenate(tris))


class ProjectedPoint(NamedTuple):
    u: float
    v: float
    depth: float


def project_point(p, cam: CameraModel) -> Optional[ProjectedPoint]:
    """Project a world point; ``None`` when it is not in front of the near plane."""
    x, y, z = cam.world_to_camera(np.asarray(p, dtype=np.float64))
    if z <= EPS_Z:
        return None
    return ProjectedPoint(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy, float(z))


def project_camera_points(pts_cam: np.ndarray, cam: CameraModel) -> np.ndarray:
    """``(N, 3)`` camera-frame points with positive depth to ``(N, 2)`` pixels."""
    z = pts_cam[:, 2]
    return np.stack([cam.fx * pts_cam[:, 0] / z + cam.cx, cam.fy * pts_cam[:, 1] / z + cam.cy], axis=1)


def near_plane_crossings(tri_cam: np.ndarray, eps: float = EPS_Z) -> np.ndarray:
    """Points where triangle edges cross the plane ``z = eps``.

    ``tri_cam`` is ``(T, 3, 3)`` in camera coordinates. Returns ``(K, 3)``.
    """
    if len(tri_cam) == 0:
        return np.zeros((0, 3))
    a = tri_cam
    b = np.roll(tri_cam, -1, axis=1)
    za, zb = a[..., 2], b[..., 2]
    crossing = (za > eps) != (zb > eps)
    if not crossing.any():
        return np.zeros((0, 3))
    pa, pb = a[crossing], b[crossing]
    s = (eps - pa[:, 2]) / (pb[:, 2] - pa[:, 2])
    pts = pa + s[:, None] * (pb - pa)
    pts[:, 2] = eps
    return pts


def project_mesh_amodal(mesh: TriMesh, pose: Pose, cam: CameraModel) -> Optional[PixelRect]:
    """Unclipped image rectangle covering the full projection of a posed mesh.

    Triangles straddling the near plane contribute their clipped edge points;
    returns ``None`` when nothing lies in front of the camera.
    """
    verts_cam = cam.world_to_camera(pose.to_world(mesh.vertices))
    front = verts_cam[verts_cam[:, 2] > EPS_Z]
    if len(mesh.triangles):
        extra = near_plane_crossings(verts_cam[mesh.triangles])
        if len(extra):
            front = np.concatenate([front, extra])
    if len(front) == 0:
        return None
    uv = project_camera_points(front, cam)
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return PixelRect(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def alpha_angle(location_cam, rotation_y: float) -> float:
    """KITTI observation angle: heading relative to the viewing ray."""
    x, _, z = (float(c) for c in location_cam)
    if z <= 0.0:
        raise ValueError("alpha is undefined for objects behind the camera")
    return wrap_to_pi(rotation_y - math.atan2(x, z))
