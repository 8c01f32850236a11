"""Compare the numba kernels against their numpy / plain-Python fallbacks.

Usage: python3 benchmarks/bench_raster.py [--frames N] [--steps N]

Times the id/depth rasterizer on real capture snapshots at the default
analysis resolution, and the traffic integrator on the default scene. Both
paths are checked to give identical results before timing.
"""
import argparse
import time

import numpy as np

from streetsynth import _accel
from streetsynth.config import RunConfig
from streetsynth.scene import build_intersection, default_catalog
from streetsynth.traffic import initial_world, spawn_despawn, step
from streetsynth.visibility import Snapshot, analyze


def _snapshots(cfg, n):
    imap = build_intersection(cfg.scene)
    catalog = default_catalog()
    rng, _ = cfg.rngs()
    world = initial_world(imap, cfg.traffic, rng, catalog)
    snaps = []
    for _ in range(n):
        for _ in range(60):
            world = spawn_despawn(step(world, imap, None, catalog), imap, rng, catalog=catalog)
        snaps.append(Snapshot(world.actors(imap, catalog), imap.props))
    return imap, catalog, world, snaps


def bench_raster(cam, snaps, res):
    out = {}
    for label, flag in (("numba", True), ("numpy", False)):
        analyze(snaps[0], cam, res, use_numba=flag)  # warm-up / compile
        t0 = time.perf_counter()
        results = [analyze(s, cam, res, use_numba=flag) for s in snaps]
        out[label] = ((time.perf_counter() - t0) / len(snaps), results)
    for (bn, _), (bp, _) in zip(out["numba"][1], out["numpy"][1]):
        assert np.array_equal(bn.ids, bp.ids), "raster paths disagree"
    return out["numba"][0], out["numpy"][0]


def bench_traffic(imap, catalog, world, steps):
    times = {}
    finals = {}
    for label, flag in (("numba", True), ("numpy", False)):
        _accel.USE_NUMBA = flag
        w = step(world, imap, None, catalog)  # warm-up / compile
        t0 = time.perf_counter()
        w = world
        for _ in range(steps):
            w = step(w, imap, None, catalog)
        times[label] = (time.perf_counter() - t0) / steps
        finals[label] = w.to_bytes()
    _accel.USE_NUMBA = True
    assert finals["numba"] == finals["numpy"], "traffic paths disagree"
    return times["numba"], times["numpy"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=10)
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()
    cfg = RunConfig()
    res = cfg.capture.analysis_resolution
    imap, catalog, world, snaps = _snapshots(cfg, args.frames)
    cam = cfg.camera.build()
    jit, py = bench_raster(cam, snaps, res)
    print(f"raster {res[0]}x{res[1]}: numba {jit * 1e3:8.2f} ms/frame   "
          f"numpy {py * 1e3:8.2f} ms/frame   speedup {py / jit:5.1f}x")
    jit, py = bench_traffic(imap, catalog, world, args.steps)
    print(f"traffic step ({len(world)} actors): numba {jit * 1e6:8.1f} us   "
          f"python {py * 1e6:8.1f} us   speedup {py / jit:5.1f}x")


if __name__ == "__main__":
    main()
