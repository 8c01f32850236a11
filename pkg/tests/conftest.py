import sys

import numpy as np
import pytest
from hypothesis import settings

from streetsynth.geometry import CameraModel, Pose
from streetsynth.scene import box_mesh
from streetsynth.visibility import Placed

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


def axis_camera(width=3840, height=2160, f=1000.0, cx=None, cy=None):
    """Camera at the world origin looking down +z (world frame == camera frame)."""
    return CameraModel(np.eye(3), np.zeros(3), f, f,
                       width / 2 if cx is None else cx, height / 2 if cy is None else cy,
                       width, height)


def cube(aid, center, size=1.0):
    h = size / 2
    return Placed(aid, box_mesh((-h, -h, -h), (h, h, h)), Pose(center))


@pytest.fixture
def cam():
    return axis_camera()


def random_annotation(rng, resolution=(3840, 2160)):
    """An ObjectAnnotation with random but internally consistent fields."""
    from streetsynth.annotate import Box3D, ObjectAnnotation, occlusion_level
    from streetsynth.geometry import PixelRect, image_rect, wrap_to_pi

    W, H = resolution
    x0, x1 = np.sort(rng.uniform(-0.2 * W, 1.2 * W, 2))
    y0, y1 = np.sort(rng.uniform(-0.2 * H, 1.2 * H, 2))
    unclipped = PixelRect(x0, y0, x1 + 1.0, y1 + 1.0)
    amodal = unclipped.intersect(image_rect(W, H)) or PixelRect(0, 0, 1, 1)
    modal = PixelRect(amodal.left + rng.uniform(0, 0.5) * amodal.width, amodal.top,
                      amodal.right, amodal.bottom)
    kind = "vehicle" if rng.random() < 0.5 else "pedestrian"
    frac = float(rng.uniform(0.05, 1.0))
    ry = wrap_to_pi(float(rng.uniform(-10, 10)))
    loc = (float(rng.uniform(-50, 50)), float(rng.uniform(-5, 40)), float(rng.uniform(0.5, 150)))
    box = Box3D(loc, (float(rng.uniform(0.5, 4)), float(rng.uniform(0.3, 3)),
                      float(rng.uniform(0.3, 6))), ry,
                wrap_to_pi(ry - float(np.arctan2(loc[0], loc[2]))))
    return ObjectAnnotation(int(rng.integers(0, 10 ** 6)), kind, modal, amodal, unclipped, box,
                            float(rng.uniform(0, 1)), occlusion_level(frac), frac,
                            int(rng.integers(0, 3)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        ok, line = mod.RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key} {line}")
