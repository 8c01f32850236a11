import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streetsynth.annotate import (AnnotateConfig, CaptureSchedule, annotate_actors, bbox2d,
                                  bbox3d_kitti, capture_frame, occlusion_level, rotation_y,
                                  run_capture_session, truncation)
from streetsynth.export import frame_meta
from streetsynth.environment import EnvironmentSchedule, EnvironmentState, sun_direction
from streetsynth.geometry import CameraModel, PixelRect, Pose
from streetsynth.scene import (PEDESTRIAN, VEHICLE, Actor, ConfigError, box_mesh,
                               build_intersection, default_catalog)
from streetsynth.traffic import TrafficParams, WorldState, initial_world
from streetsynth.visibility import Snapshot, analyze

CAT = default_catalog()
ENV = EnvironmentState(12.0, "clear", sun_direction(12.0), None)
CFG = AnnotateConfig()
# level camera 5 m up looking east along world +x
CAM = CameraModel.look_at((0, 0, 5), (1, 0, 5), 2000.0)


def actor(aid, kind, x, y, yaw=0.0):
    return Actor(aid, CAT[kind], Pose((x, y, 0.0), yaw), 0.0, 0, 0.0)


def test_no_actors_no_objects():
    frame = annotate_actors([], [], CAM, ENV, CFG)
    assert frame.objects == ()


def test_world_with_zero_actors():
    imap = build_intersection()
    world = WorldState.empty(TrafficParams())
    frame = capture_frame(world, imap, CameraModel.from_rig(), ENV, CFG, CAT)
    assert frame.objects == ()


def test_unoccluded_vehicle_mid_frame():
    frame = annotate_actors([actor(1, VEHICLE, 30, 0)], [], CAM, ENV, CFG)
    (obj,) = frame.objects
    assert obj.truncation == 0.0 and obj.occlusion_level == 0 and obj.visible_fraction == 1.0
    # modal and amodal agree within one analysis pixel at camera scale
    tol = CAM.width / CFG.analysis_resolution[0]
    assert np.allclose(obj.rect_modal.as_tuple(), obj.rect_amodal.as_tuple(), atol=tol)


def test_vehicle_hidden_behind_building_dropped():
    wall = box_mesh((20, -10, 0), (22, 10, 15))
    frame = annotate_actors([actor(1, VEHICLE, 30, 0)], [wall], CAM, ENV, CFG)
    assert frame.objects == ()


def test_left_half_occluded():
    target = actor(1, VEHICLE, 30, 0, yaw=math.pi / 2)  # broadside to the camera
    # a thin screen at x=15 covering y >= 0 (image left) from the ray through the centre
    screen = box_mesh((15, 0, 0), (15.2, 10, 10))
    frame = annotate_actors([target], [screen], CAM, ENV, CFG)
    (obj,) = frame.objects
    tol = CAM.width / CFG.analysis_resolution[0]
    assert obj.rect_modal.left > obj.rect_amodal.left + 10 * tol
    assert obj.rect_modal.right == pytest.approx(obj.rect_amodal.right, abs=tol)
    assert 0.3 < obj.visible_fraction < 0.7 and obj.occlusion_level in (1, 2)


def test_partially_out_of_frame():
    frame = annotate_actors([actor(1, VEHICLE, 20, 19.5)], [], CAM, ENV, CFG)
    (obj,) = frame.objects
    assert obj.rect_amodal.left == 0.0
    assert obj.rect_unclipped.left < 0.0
    assert 0.0 < obj.truncation < 1.0


def test_bbox3d_straight_ahead():
    box = bbox3d_kitti(actor(1, VEHICLE, 20, 0), CAM)
    assert box.location == pytest.approx((0.0, 5.0, 20.0), abs=1e-9)
    assert box.rotation_y == pytest.approx(0.0, abs=1e-12)
    assert box.alpha == pytest.approx(0.0, abs=1e-12)


def test_bbox3d_alpha_zero_when_facing_along_ray():
    # X/Z = tan(pi/6); camera x is world -y
    a = actor(1, VEHICLE, 20, -20 * math.tan(math.pi / 6), yaw=-math.pi / 6)
    box = bbox3d_kitti(a, CAM)
    assert math.atan2(box.location[0], box.location[2]) == pytest.approx(math.pi / 6)
    assert box.rotation_y == pytest.approx(math.pi / 6)
    assert box.alpha == pytest.approx(0.0, abs=1e-12)


def test_pedestrian_dimensions_verbatim():
    assert bbox3d_kitti(actor(1, PEDESTRIAN, 10, 0), CAM).dimensions == (1.8, 0.5, 0.5)


def test_bbox3d_behind_camera_rejected():
    with pytest.raises(ValueError):
        bbox3d_kitti(actor(1, VEHICLE, -10, 0), CAM)


@pytest.mark.parametrize("rect, expected", [
    ((100, 100, 200, 200), 0.0),
    ((-100, 0, 100, 100), 0.5),
    ((-500, -500, -100, -100), 1.0),
    ((10, 10, 10, 50), 1.0),
])
def test_truncation(rect, expected):
    assert truncation(PixelRect(*rect), (3840, 2160)) == pytest.approx(expected)


@pytest.mark.parametrize("frac, level", [(1.0, 0), (0.9, 0), (0.7, 1), (0.5, 1), (0.2, 2),
                                          (0.0, 2)])
def test_occlusion_level(frac, level):
    assert occlusion_level(frac) == level


@given(st.floats(0, 1), st.floats(0, 1))
def test_occlusion_level_monotone(a, b):
    lo, hi = sorted((a, b))
    assert occlusion_level(hi) <= occlusion_level(lo)


@given(st.floats(-3000, 3000), st.floats(1, 2000))
def test_truncation_grows_as_rect_leaves_frame(x, w):
    r1 = PixelRect(x, 100, x + w, 300)
    r2 = PixelRect(x - 50, 100, x - 50 + w, 300)
    t1, t2 = truncation(r1, (3840, 2160)), truncation(r2, (3840, 2160))
    assert 0 <= t1 <= 1
    assert (t1 == 0) == (r1.left >= 0 and r1.right <= 3840)
    if r1.left < 0 and r2.right > 0:
        assert t2 > t1


@given(st.floats(-10, 10))
def test_rotation_y_range(yaw):
    ry = rotation_y(yaw, CameraModel.from_rig())
    assert -math.pi <= ry < math.pi


def test_bbox2d_modes():
    a = actor(1, VEHICLE, 30, 0)
    _, stats = analyze(Snapshot([a]), CAM, CFG.analysis_resolution)
    amodal = bbox2d(a, stats[1], CAM, "amodal")
    modal = bbox2d(a, stats[1], CAM, "modal", CFG.analysis_resolution)
    assert amodal.contains(modal, tol=1e-9)
    with pytest.raises(ValueError):
        bbox2d(a, stats[1], CAM, "tight")


def test_min_visible_filter():
    target = actor(1, VEHICLE, 30, 0, yaw=math.pi / 2)
    # rays to the vehicle cross x=15 at half their y, so this hides y < 1.6 at x=30
    screen = box_mesh((15, -10, 0), (15.2, 0.8, 10))
    cfg_strict = AnnotateConfig(min_visible=0.5)
    cfg_loose = AnnotateConfig(min_visible=0.0, min_pixels=0)
    loose = annotate_actors([target], [screen], CAM, ENV, cfg_loose).objects
    assert len(loose) == 1 and loose[0].visible_fraction < 0.5
    assert annotate_actors([target], [screen], CAM, ENV, cfg_strict).objects == ()


def test_visibility_culling():
    env = EnvironmentState(12.0, "dust", sun_direction(12.0), 80.0)
    far = actor(1, VEHICLE, 100, 0, yaw=math.pi / 2)
    assert len(annotate_actors([far], [], CAM, env, CFG).objects) == 1
    culled = AnnotateConfig(visibility_culling=True)
    assert annotate_actors([far], [], CAM, env, culled).objects == ()


def test_lod_refreshed_from_camera_distance():
    frame = annotate_actors([actor(1, VEHICLE, 20, 0), actor(2, VEHICLE, 60, 3),
                             actor(3, VEHICLE, 120, -5)], [], CAM, ENV, CFG)
    assert [o.lod for o in frame.objects] == [0, 1, 2]


def test_capture_schedule_times():
    assert CaptureSchedule(3.0, 10).capture_times() == [3.0 * k for k in range(10)]
    assert CaptureSchedule(3.0, 8000).capture_times()[-1] == 23997.0
    with pytest.raises(ConfigError):
        CaptureSchedule(-1.0, 10).validate()


def _session(seed, frames=6, jobs=1):
    imap = build_intersection()
    params = TrafficParams()
    t_rng, e_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    world = initial_world(imap, params, t_rng, CAT)
    return list(run_capture_session(world, imap, CameraModel.from_rig(), CaptureSchedule(3.0, frames),
                                    EnvironmentSchedule(), AnnotateConfig(), t_rng, e_rng, CAT,
                                    jobs=jobs))


def _dump(frames):
    return [json.dumps(frame_meta(f), sort_keys=True) for f in frames]


def test_session_deterministic_and_timed():
    a, b = _session(5), _session(5)
    assert [f.time for f in a] == [0.0, 3.0, 6.0, 9.0, 12.0, 15.0]
    assert _dump(a) == _dump(b)
    assert any(f.objects for f in a)


def test_parallel_session_matches_serial():
    assert _dump(_session(8, frames=4, jobs=2)) == _dump(_session(8, frames=4, jobs=1))


@given(st.floats(-5000, 5000), st.floats(-5000, 5000), st.floats(1, 4000), st.floats(1, 4000))
def test_truncation_matches_area_oracle(x, y, w, h):
    r = PixelRect(x, y, x + w, y + h)
    ix = max(0.0, min(r.right, 3840) - max(r.left, 0))
    iy = max(0.0, min(r.bottom, 2160) - max(r.top, 0))
    assert truncation(r, (3840, 2160)) == pytest.approx(1 - ix * iy / (w * h), abs=1e-9)
