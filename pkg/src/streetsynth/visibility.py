"""Pixel-accurate visibility: id/depth rasterizer, per-actor stats, ray-cast oracle.

Every pixel is sampled once at its centre ``(i + 0.5, j + 0.5)``. A pixel
belongs to a triangle when all three barycentric weights are non-negative, and
the nearest depth wins. Exactly equal depths go to the lower actor id; static
props lose such ties to any actor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _accel
from .geometry import EPS_Z, CameraModel, Pose, TriMesh

EMPTY_ID = -1
PROP_ID = -2
_PROP_KEY = np.iinfo(np.int32).max  # sorts after every actor in tie-breaks


class Placed(NamedTuple):
    """A mesh placed in the world under an actor id."""

    id: int
    mesh: TriMesh
    pose: Pose


@dataclass(frozen=True)
class Snapshot:
    """Geometry for one frame: actors (anything with ``id``, ``mesh``, ``pose``) and props.

    Prop meshes are already in world coordinates.
    """

    actors: Sequence
    props: Sequence[TriMesh] = ()


@dataclass(frozen=True, eq=False)
class IdDepthBuffer:
    width: int
    height: int
    ids: np.ndarray  # (H, W) int64 actor ids, EMPTY_ID or PROP_ID
    depth: np.ndarray  # (H, W) float64 camera depth, inf where empty

    def covered(self) -> np.ndarray:
        return self.ids != EMPTY_ID


@dataclass(frozen=True)
class VisibilityStats:
    actor_id: int
    solo_pixels: int
    visible_pixels: int
    bounds: Optional[tuple[int, int, int, int]] = None  # inclusive (x0, y0, x1, y1) of won pixels

    @property
    def visible_fraction(self) -> float:
        if self.solo_pixels == 0:
            return 0.0
        return min(1.0, self.visible_pixels / self.solo_pixels)


def _mesh_tris(mesh: TriMesh) -> np.ndarray:
    tris = mesh.__dict__.get("_tri_cache")
    if tris is None:
        tris = mesh.triangle_vertices()
        object.__setattr__(mesh, "_tri_cache", tris)
    return tris


def gather_triangles(snapshot: Snapshot, cam: CameraModel):
    """Camera-frame triangles for a snapshot.

    Returns ``(tris, key, group, ids)``: ``tris`` is ``(T, 3, 3)``; ``group`` is
    the dense actor index (ascending id order) or -1 for props; ``key`` equals
    ``group`` for actors and a maximal value for props; ``ids`` maps dense
    index to actor id.
    """
    actors = sorted(snapshot.actors, key=lambda a: a.id)
    ids = np.array([a.id for a in actors], dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("actor ids must be unique within a snapshot")
    chunks, groups = [], []
    R, t = cam.rotation, cam.translation
    for g, a in enumerate(actors):
        local = _mesh_tris(a.mesh)
        if len(local) == 0:
            continue
        pr = a.pose.rotation
        M = R @ pr
        off = R @ a.pose.position + t
        chunks.append(local @ M.T + off)
        groups.append(np.full(len(local), g, np.int32))
    for prop in snapshot.props:
        world = _mesh_tris(prop)
        if len(world) == 0:
            continue
        chunks.append(world @ R.T + t)
        groups.append(np.full(len(world), -1, np.int32))
    if not chunks:
        return np.zeros((0, 3, 3)), np.zeros(0, np.int32), np.zeros(0, np.int32), ids
    tris = np.concatenate(chunks)
    group = np.concatenate(groups)
    key = np.where(group >= 0, group, _PROP_KEY).astype(np.int32)
    return tris, key, group, ids


def clip_near(tris: np.ndarray, *attrs: np.ndarray, eps: float = EPS_Z):
    """Clip camera-frame triangles to ``z > eps``.

    A triangle with one vertex in front becomes one smaller triangle; with two
    in front it becomes a quad split into two. Per-triangle ``attrs`` are
    carried along. Returns ``(tris, *attrs)``.
    """
    if len(tris) == 0:
        return (tris, *attrs)
    inside = tris[:, :, 2] > eps
    n_in = inside.sum(axis=1)
    keep = n_in == 3
    out_tris = [tris[keep]]
    out_attrs = [[a[keep]] for a in attrs]

    one = np.nonzero(n_in == 1)[0]
    if len(one):
        lead = np.argmax(inside[one], axis=1)  # the single inside vertex
        order = (lead[:, None] + np.arange(3)) % 3
        t = tris[one[:, None], order]
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        ab = _cross_point(a, b, eps)
        ac = _cross_point(a, c, eps)
        out_tris.append(np.stack([a, ab, ac], axis=1))
        for lst, attr in zip(out_attrs, attrs):
            lst.append(attr[one])

    two = np.nonzero(n_in == 2)[0]
    if len(two):
        lead = np.argmin(inside[two], axis=1)  # the single outside vertex
        order = (lead[:, None] + np.arange(3)) % 3
        t = tris[two[:, None], order]
        o, b, c = t[:, 0], t[:, 1], t[:, 2]
        ob = _cross_point(o, b, eps)
        oc = _cross_point(o, c, eps)
        out_tris.append(np.stack([ob, b, c], axis=1))
        out_tris.append(np.stack([ob, c, oc], axis=1))
        for lst, attr in zip(out_attrs, attrs):
            lst.extend([attr[two], attr[two]])

    return (np.concatenate(out_tris), *(np.concatenate(lst) for lst in out_attrs))


def _cross_point(p: np.ndarray, q: np.ndarray, eps: float) -> np.ndarray:
    s = (eps - p[:, 2]) / (q[:, 2] - p[:, 2])
    out = p + s[:, None] * (q - p)
    out[:, 2] = eps
    return out


def _raster_py(sx, sy, sz, key, group, width, height, depth, win, solo, stamp):
    """Scan-convert projected triangles into the depth/winner buffers.

    ``sx, sy`` are ``(T, 3)`` pixel coordinates and ``sz`` camera depths.
    ``solo[g]`` counts the distinct pixels covered by group ``g`` regardless of
    occlusion; it relies on each group's triangles being contiguous.
    """
    n = sx.shape[0]
    for t in range(n):
        x0, x1, x2 = sx[t, 0], sx[t, 1], sx[t, 2]
        y0, y1, y2 = sy[t, 0], sy[t, 1], sy[t, 2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if area == 0.0 or not math.isfinite(area):
            continue
        inv_area = 1.0 / area
        i_lo = max(0, int(math.ceil(min(x0, x1, x2) - 0.5)))
        i_hi = min(width - 1, int(math.floor(max(x0, x1, x2) - 0.5)))
        j_lo = max(0, int(math.ceil(min(y0, y1, y2) - 0.5)))
        j_hi = min(height - 1, int(math.floor(max(y0, y1, y2) - 0.5)))
        if i_lo > i_hi or j_lo > j_hi:
            continue
        iz0, iz1, iz2 = 1.0 / sz[t, 0], 1.0 / sz[t, 1], 1.0 / sz[t, 2]
        # fronto-parallel faces get their exact depth so coplanar ties are exact
        flat = sz[t, 0] == sz[t, 1] and sz[t, 1] == sz[t, 2]
        k = key[t]
        g = group[t]
        for j in range(j_lo, j_hi + 1):
            py = j + 0.5
            for i in range(i_lo, i_hi + 1):
                px = i + 0.5
                w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) * inv_area
                w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) * inv_area
                w2 = ((x0 - px) * (y1 - py) - (x1 - px) * (y0 - py)) * inv_area
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                if flat:
                    z = sz[t, 0]
                else:
                    z = 1.0 / (w0 * iz0 + w1 * iz1 + w2 * iz2)
                if g >= 0 and stamp[j, i] != g:
                    stamp[j, i] = g
                    solo[g] += 1
                d = depth[j, i]
                if z < d or (z == d and k < win[j, i]):
                    depth[j, i] = z
                    win[j, i] = k


_raster_jit = _accel.njit(_raster_py)


def _raster_numpy(sx, sy, sz, key, group, width, height, depth, win, solo, stamp):
    """Vectorized twin of the compiled kernel: one numpy pass per triangle."""
    x0, x1, x2 = sx[:, 0], sx[:, 1], sx[:, 2]
    y0, y1, y2 = sy[:, 0], sy[:, 1], sy[:, 2]
    area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    with np.errstate(invalid="ignore", over="ignore"):
        i_lo = np.maximum(0, np.ceil(sx.min(axis=1) - 0.5))
        i_hi = np.minimum(width - 1, np.floor(sx.max(axis=1) - 0.5))
        j_lo = np.maximum(0, np.ceil(sy.min(axis=1) - 0.5))
        j_hi = np.minimum(height - 1, np.floor(sy.max(axis=1) - 0.5))
    live = (area != 0.0) & np.isfinite(area) & (i_lo <= i_hi) & (j_lo <= j_hi)
    for t in np.nonzero(live)[0]:
        ii = np.arange(int(i_lo[t]), int(i_hi[t]) + 1)
        jj = np.arange(int(j_lo[t]), int(j_hi[t]) + 1)
        px = ii[None, :] + 0.5
        py = jj[:, None] + 0.5
        inv_area = 1.0 / area[t]
        a0, a1, a2 = x0[t], x1[t], x2[t]
        b0, b1, b2 = y0[t], y1[t], y2[t]
        w0 = ((a1 - px) * (b2 - py) - (a2 - px) * (b1 - py)) * inv_area
        w1 = ((a2 - px) * (b0 - py) - (a0 - px) * (b2 - py)) * inv_area
        w2 = ((a0 - px) * (b1 - py) - (a1 - px) * (b0 - py)) * inv_area
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        if sz[t, 0] == sz[t, 1] == sz[t, 2]:
            z = np.full(w0.shape, sz[t, 0])
        else:
            z = 1.0 / (w0 * (1.0 / sz[t, 0]) + w1 * (1.0 / sz[t, 1]) + w2 * (1.0 / sz[t, 2]))
        rows = slice(jj[0], jj[-1] + 1)
        cols = slice(ii[0], ii[-1] + 1)
        g = group[t]
        if g >= 0:
            st = stamp[rows, cols]
            fresh = inside & (st != g)
            solo[g] += int(fresh.sum())
            st[fresh] = g
        d = depth[rows, cols]
        w = win[rows, cols]
        k = key[t]
        better = inside & ((z < d) | ((z == d) & (k < w)))
        d[better] = z[better]
        w[better] = k


def rasterize_arrays(tris: np.ndarray, key: np.ndarray, group: np.ndarray, n_groups: int,
                     cam: CameraModel, use_numba: Optional[bool] = None):
    """Rasterize camera-frame triangles at ``cam``'s resolution.

    Returns ``(depth, win, solo)`` where ``win`` holds the winning key per pixel
    (-1 where empty).
    """
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    tris, key, group = clip_near(tris, key, group)
    # clipping appends split triangles; solo counting needs groups contiguous
    order = np.argsort(np.where(group >= 0, group, np.iinfo(np.int32).max), kind="stable")
    tris, key, group = tris[order], key[order], group[order]
    W, H = cam.width, cam.height
    depth = np.full((H, W), np.inf)
    win = np.full((H, W), -1, np.int32)
    solo = np.zeros(max(n_groups, 1), np.int64)
    stamp = np.full((H, W), -1, np.int32)
    if len(tris):
        z = tris[:, :, 2]
        sx = np.ascontiguousarray(cam.fx * tris[:, :, 0] / z + cam.cx)
        sy = np.ascontiguousarray(cam.fy * tris[:, :, 1] / z + cam.cy)
        sz = np.ascontiguousarray(z)
        kernel = _raster_jit if use_numba else _raster_numpy
        kernel(sx, sy, sz, np.ascontiguousarray(key, np.int32),
               np.ascontiguousarray(group, np.int32), W, H, depth, win, solo, stamp)
    return depth, win, solo[:n_groups]


def _bounds_py(win, n, counts, x0, y0, x1, y1):
    H, W = win.shape
    for j in range(H):
        for i in range(W):
            k = win[j, i]
            if 0 <= k < n:
                counts[k] += 1
                if i < x0[k]:
                    x0[k] = i
                if i > x1[k]:
                    x1[k] = i
                if j < y0[k]:
                    y0[k] = j
                if j > y1[k]:
                    y1[k] = j


_bounds_jit = _accel.njit(_bounds_py)


def _bounds_numpy(win, n, counts, x0, y0, x1, y1):
    jj, ii = np.nonzero((win >= 0) & (win < n))
    k = win[jj, ii]
    counts += np.bincount(k, minlength=n)[:n]
    np.minimum.at(x0, k, ii)
    np.maximum.at(x1, k, ii)
    np.minimum.at(y0, k, jj)
    np.maximum.at(y1, k, jj)


def winner_bounds(win: np.ndarray, n: int, use_numba: Optional[bool] = None):
    """Per-group pixel counts and inclusive bounds of won pixels."""
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    counts = np.zeros(n, np.int64)
    big = np.iinfo(np.int64).max
    x0 = np.full(n, big, np.int64)
    y0 = np.full(n, big, np.int64)
    x1 = np.full(n, -1, np.int64)
    y1 = np.full(n, -1, np.int64)
    if n:
        (_bounds_jit if use_numba else _bounds_numpy)(win, n, counts, x0, y0, x1, y1)
    return counts, x0, y0, x1, y1


def _analysis_camera(cam: CameraModel, resolution) -> CameraModel:
    w, h = (cam.width, cam.height) if resolution is None else resolution
    if w < 1 or h < 1:
        raise ValueError("resolution must be at least 1x1")
    if (w, h) == (cam.width, cam.height):
        return cam
    return cam.scaled(int(w), int(h))


def _to_buffer(depth, win, ids) -> IdDepthBuffer:
    out = np.full(win.shape, EMPTY_ID, np.int64)
    out[win == _PROP_KEY] = PROP_ID
    actor = (win >= 0) & (win < len(ids))
    out[actor] = ids[win[actor]]
    return IdDepthBuffer(win.shape[1], win.shape[0], out, depth)


def analyze(snapshot: Snapshot, cam: CameraModel, resolution=None,
            use_numba: Optional[bool] = None) -> tuple[IdDepthBuffer, dict[int, VisibilityStats]]:
    """Rasterize once and derive per-actor statistics from the same pass."""
    acam = _analysis_camera(cam, resolution)
    tris, key, group, ids = gather_triangles(snapshot, acam)
    depth, win, solo = rasterize_arrays(tris, key, group, len(ids), acam, use_numba)
    counts, x0, y0, x1, y1 = winner_bounds(win, len(ids), use_numba)
    stats = {}
    for g, aid in enumerate(ids.tolist()):
        vis = int(counts[g])
        bounds = (int(x0[g]), int(y0[g]), int(x1[g]), int(y1[g])) if vis else None
        stats[aid] = VisibilityStats(aid, int(solo[g]), vis, bounds)
    return _to_buffer(depth, win, ids), stats


def rasterize_ids(snapshot: Snapshot, cam: CameraModel, resolution=None,
                  use_numba: Optional[bool] = None) -> IdDepthBuffer:
    return analyze(snapshot, cam, resolution, use_numba)[0]


def visibility_stats(snapshot: Snapshot, cam: CameraModel, resolution=None,
                     use_numba: Optional[bool] = None) -> dict[int, VisibilityStats]:
    """Per-actor solo and visible pixel counts keyed by actor id.

    ``solo_pixels`` is the coverage the actor would have alone in the frame,
    counted during the same pass as the full buffer.
    """
    return analyze(snapshot, cam, resolution, use_numba)[1]


def raycast_oracle(snapshot: Snapshot, cam: CameraModel, resolution=None,
                   with_solo: bool = False):
    """Reference id/depth buffer by casting one ray per pixel centre.

    Independent of the rasterizer: no clipping or projection, just
    Moller-Trumbore intersection against every triangle, keeping hits deeper
    than the near plane. With ``with_solo`` also returns the per-actor solo
    coverage counts keyed by actor id.
    """
    acam = _analysis_camera(cam, resolution)
    tris, key, group, ids = gather_triangles(snapshot, acam)
    W, H = acam.width, acam.height
    jj, ii = np.mgrid[0:H, 0:W]
    dirs = np.stack([(ii.ravel() + 0.5 - acam.cx) / acam.fx,
                     (jj.ravel() + 0.5 - acam.cy) / acam.fy,
                     np.ones(W * H)], axis=1)
    best = np.full(W * H, np.inf)
    best_key = np.full(W * H, -1, np.int64)
    solo_hit = np.zeros((len(ids), W * H), bool)
    for t in range(len(tris)):
        v0, v1, v2 = tris[t]
        e1, e2 = v1 - v0, v2 - v0
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / det
            tvec = -v0
            u = (pvec @ tvec) * inv
            qvec = np.cross(tvec, e1)
            v = (dirs @ qvec) * inv
            dist = (e2 @ qvec) * inv
        if v0[2] == v1[2] == v2[2]:
            dist = np.full(dist.shape, v0[2])
        hit = (det != 0.0) & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (dist > EPS_Z)
        if not hit.any():
            continue
        g = group[t]
        if g >= 0:
            solo_hit[g] |= hit
        k = key[t]
        better = hit & ((dist < best) | ((dist == best) & (k < best_key)))
        best[better] = dist[better]
        best_key[better] = k
    win = best_key.reshape(H, W).astype(np.int32)
    buf = _to_buffer(best.reshape(H, W), win, ids)
    if with_solo:
        return buf, {int(a): int(solo_hit[g].sum()) for g, a in enumerate(ids.tolist())}
    return buf


def oracle_visibility_stats(snapshot: Snapshot, cam: CameraModel, resolution=None):
    """Per-actor stats computed entirely from the ray-cast oracle."""
    buf, solo = raycast_oracle(snapshot, cam, resolution, with_solo=True)
    out = {}
    for aid, s in solo.items():
        out[aid] = VisibilityStats(aid, s, int(np.count_nonzero(buf.ids == aid)))
    return out
