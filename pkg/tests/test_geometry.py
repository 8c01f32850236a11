import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import axis_camera
from streetsynth.geometry import (EPS_Z, CameraModel, PixelRect, Pose, TriMesh, alpha_angle,
                                  project_mesh_amodal, project_point, rect_iou, wrap_to_pi)
from streetsynth.scene import box_mesh

angles = st.floats(-50.0, 50.0, allow_nan=False)


def test_optical_axis_maps_to_principal_point(cam):
    p = project_point((0, 0, 10), cam)
    assert (p.u, p.v, p.depth) == (1920.0, 1080.0, 10.0)


def test_lateral_offset(cam):
    p = project_point((1, 0, 10), cam)
    assert p.u == pytest.approx(2020.0) and p.v == pytest.approx(1080.0)


def test_behind_camera_is_none(cam):
    assert project_point((0, 0, -5), cam) is None
    assert project_point((0, 0, EPS_Z), cam) is None


def test_unit_cube_amodal_rect(cam):
    rect = project_mesh_amodal(box_mesh((-.5, -.5, -.5), (.5, .5, .5)), Pose((0, 0, 10)), cam)
    # oracle: brute-force projection of the 8 corners
    corners = np.array(list(itertools.product((-.5, .5), repeat=3))) + (0, 0, 10)
    u = 1920 + 1000 * corners[:, 0] / corners[:, 2]
    v = 1080 + 1000 * corners[:, 1] / corners[:, 2]
    assert rect.as_tuple() == pytest.approx((u.min(), v.min(), u.max(), v.max()), abs=1e-9)
    assert rect.as_tuple() == pytest.approx((1867.37, 1027.37, 1972.63, 1132.63), abs=0.01)


def test_mesh_behind_camera_is_none(cam):
    assert project_mesh_amodal(box_mesh((-1, -1, -1), (1, 1, 1)), Pose((0, 0, -10)), cam) is None


def test_single_vertex_is_degenerate_rect(cam):
    mesh = TriMesh(np.zeros((1, 3)), np.zeros((0, 3), np.int64))
    rect = project_mesh_amodal(mesh, Pose((0, 0, 10)), cam)
    assert rect.as_tuple() == (1920.0, 1080.0, 1920.0, 1080.0) and rect.area == 0.0


def test_near_plane_straddling_mesh_uses_clipped_edges(cam):
    # a box from z=-1 to z=1: the visible part is clipped at z=eps and becomes huge
    rect = project_mesh_amodal(box_mesh((-.5, -.5, -1), (.5, .5, 1)), Pose((0, 0, 0)), cam)
    assert rect.left == pytest.approx(1920 - 1000 * 0.5 / EPS_Z)
    assert rect.right == pytest.approx(1920 + 1000 * 0.5 / EPS_Z)


@pytest.mark.parametrize("a, b, expected", [
    ((0, 0, 2, 2), (0, 0, 2, 2), 1.0),
    ((0, 0, 2, 2), (1, 1, 3, 3), 1 / 7),
    ((0, 0, 1, 1), (2, 2, 3, 3), 0.0),
    ((0, 0, 0, 0), (0, 0, 0, 0), 0.0),
])
def test_rect_iou(a, b, expected):
    assert rect_iou(PixelRect(*a), PixelRect(*b)) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("x, z, ry, expected", [
    (0, 10, 0.3, 0.3),
    (5, 5, math.pi / 4, 0.0),
    (0, 1, 3.5, 3.5 - 2 * math.pi),
])
def test_alpha(x, z, ry, expected):
    assert alpha_angle((x, 0, z), ry) == pytest.approx(expected, abs=1e-12)


def test_alpha_behind_camera_rejected():
    with pytest.raises(ValueError):
        alpha_angle((0, 0, -1), 0.0)


@given(st.floats(-1e3, 1e3, allow_nan=False))
def test_wrap_range_and_congruence(a):
    w = wrap_to_pi(a)
    assert -math.pi <= w < math.pi
    # independent normalization via complex argument
    ref = math.atan2(math.sin(a), math.cos(a))
    assert math.isclose(math.cos(w), math.cos(ref), abs_tol=1e-9)
    assert math.isclose(math.sin(w), math.sin(ref), abs_tol=1e-9)


def test_wrap_pi_maps_to_minus_pi():
    assert wrap_to_pi(math.pi) == -math.pi


def test_world_camera_round_trip_fuzz():
    rng = np.random.default_rng(1)
    for _ in range(200):
        eye = rng.uniform(-100, 100, 3)
        eye[2] = rng.uniform(5, 80)
        target = np.append(rng.uniform(-50, 50, 2), 0.0)
        cam = CameraModel.look_at(eye, target, 1500.0)
        pts = rng.uniform(-500, 500, (50, 3))
        back = cam.camera_to_world(cam.world_to_camera(pts))
        assert np.max(np.abs(back - pts)) < 1e-9


def test_pose_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(100):
        pose = Pose(rng.uniform(-100, 100, 3), rng.uniform(-10, 10))
        pts = rng.uniform(-5, 5, (20, 3))
        assert np.allclose(pose.to_local(pose.to_world(pts)), pts, atol=1e-9)


def test_from_rig_points_at_target():
    cam = CameraModel.from_rig(40, -45, 30, (5, -3))
    assert cam.position[2] == pytest.approx(40)
    c = cam.world_to_camera((5, -3, 0))
    assert c[0] == pytest.approx(0, abs=1e-9) and c[1] == pytest.approx(0, abs=1e-9)
    assert c[2] == pytest.approx(40 * math.sqrt(2))


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraModel(np.ones((3, 3)), np.zeros(3), 1000, 1000, 10, 10, 100, 100)
    with pytest.raises(ValueError):
        CameraModel(np.eye(3), np.zeros(3), -1, 1000, 10, 10, 100, 100)
    with pytest.raises(ValueError):
        CameraModel.from_rig(pitch_deg=10)


def test_camera_dict_round_trip():
    cam = CameraModel.from_rig()
    again = CameraModel.from_dict(cam.to_dict())
    assert np.array_equal(again.rotation, cam.rotation) and again.resolution == cam.resolution


def test_scaled_camera_projects_proportionally():
    cam = CameraModel.from_rig()
    small = cam.scaled(960, 540)
    p = np.array([3.0, -4.0, 0.0])
    a, b = project_point(p, cam), project_point(p, small)
    assert b.u == pytest.approx(a.u / 4) and b.v == pytest.approx(a.v / 4)


@given(st.tuples(angles, angles, angles, angles), st.tuples(angles, angles, angles, angles))
def test_iou_symmetric_and_bounded(a, b):
    ra = PixelRect(min(a[0], a[2]), min(a[1], a[3]), max(a[0], a[2]), max(a[1], a[3]))
    rb = PixelRect(min(b[0], b[2]), min(b[1], b[3]), max(b[0], b[2]), max(b[1], b[3]))
    iou = rect_iou(ra, rb)
    assert 0.0 <= iou <= 1.0
    assert iou == pytest.approx(rect_iou(rb, ra))


@given(st.floats(-20, 20), st.floats(-20, 20), st.floats(0.5, 200), st.floats(-4, 4))
def test_amodal_rect_contains_every_vertex_projection(x, y, z, yaw):
    cam = axis_camera()
    mesh = box_mesh((-1, -2, -0.5), (1, 2, 0.5), subdiv=2)
    pose = Pose((x, y, z), yaw)
    rect = project_mesh_amodal(mesh, pose, cam)
    pts = pose.to_world(mesh.vertices)
    front = pts[pts[:, 2] > EPS_Z]
    if len(front) == 0:
        assert rect is None
        return
    u = 1920 + 1000 * front[:, 0] / front[:, 2]
    v = 1080 + 1000 * front[:, 1] / front[:, 2]
    tol = 1e-6 * max(1.0, rect.width, rect.height)
    assert rect.left <= u.min() + tol and rect.right >= u.max() - tol
    assert rect.top <= v.min() + tol and rect.bottom >= v.max() - tol
    if len(front) == len(pts):
        assert rect.as_tuple() == pytest.approx((u.min(), v.min(), u.max(), v.max()))
