"""Command-line entry point: ``generate``, ``eval`` and ``inspect``.

Exit codes: 0 success, 2 validation or usage error, 3 I/O error. Results go to
stdout, progress and diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .annotate import run_capture_session
from .config import RunConfig, load_config
from .evalkit import EvalInputError, evaluate_dirs, label_dir, write_report
from .export import SUBDIRS, ExportError, LabelParseError, load_manifest, stem, write_dataset
from .scene import ConfigError, build_intersection, default_catalog
from .traffic import initial_world

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors already; keep messages on stderr
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def generate(cfg: RunConfig, out: Path | str, jobs: int = 1, progress=None) -> dict:
    """Run one full capture session for ``cfg`` and write it under ``out``."""
    imap = build_intersection(cfg.scene)
    catalog = default_catalog(cfg.traffic.vehicle_speed, cfg.traffic.pedestrian_speed)
    traffic_rng, env_rng = cfg.rngs()
    world = initial_world(imap, cfg.traffic, traffic_rng, catalog)
    frames = run_capture_session(
        world, imap, cfg.camera.build(), cfg.capture.schedule(), cfg.environment,
        cfg.annotate_config(keep_buffer=cfg.export.images), traffic_rng, env_rng, catalog,
        jobs=jobs,
    )
    return write_dataset(frames, out, cfg.export, cfg.to_dict(), cfg.seed, progress)


def cmd_generate(args) -> int:
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.frames).validate()
    except ConfigError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read config: {exc}")
    jobs = default_jobs() if args.jobs is None else args.jobs
    if jobs < 1:
        return _fail(EXIT_USAGE, "--jobs must be >= 1")
    total = cfg.capture.total_frames
    step = max(1, total // 20)

    def progress(n):
        if not args.quiet and (n % step == 0 or n == total):
            print(f"[{n}/{total}] frames written", file=sys.stderr)

    t0 = time.perf_counter()
    try:
        manifest = generate(cfg, args.out, jobs, progress)
    except (ExportError, OSError) as exc:
        return _fail(EXIT_IO, str(exc))
    elapsed = time.perf_counter() - t0
    fps = manifest["frames"] / elapsed if elapsed > 0 else float("inf")
    print(f"frames: {manifest['frames']}")
    print(f"frames/sec: {fps:.2f}")
    print(f"output: {Path(args.out).resolve()}")
    return EXIT_OK


def _resolution(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return w, h


def cmd_eval(args) -> int:
    gt_dir, pred_dir = label_dir(args.gt), label_dir(args.pred)
    for name, d in (("--gt", gt_dir), ("--pred", pred_dir)):
        if not d.is_dir():
            return _fail(EXIT_USAGE, f"{name} directory not found: {d}")
    gt_stems = {p.stem for p in gt_dir.glob("*.txt")}
    pred_stems = {p.stem for p in pred_dir.glob("*.txt")}
    extra = sorted(pred_stems - gt_stems)
    # an empty prediction directory means "no detections", not misaligned stems
    missing = sorted(gt_stems - pred_stems) if pred_stems else []
    if extra or missing:
        if missing:
            print("missing predictions for: " + " ".join(missing), file=sys.stderr)
        if extra:
            print("predictions without ground truth: " + " ".join(extra), file=sys.stderr)
        return _fail(EXIT_USAGE, "stem mismatch between --gt and --pred")
    try:
        report = evaluate_dirs(gt_dir, pred_dir, args.res)
    except (LabelParseError, EvalInputError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    print(report.table())
    if args.report:
        try:
            write_report(report, args.report)
        except OSError as exc:
            return _fail(EXIT_IO, f"cannot write report: {exc}")
    return EXIT_OK


def _frame_table(meta: dict) -> list[str]:
    rows = [f"frame {meta['stem']}  t={meta['time']:.1f}s  "
            f"weather={meta['environment']['weather']}  "
            f"hour={meta['environment']['time_of_day']:.2f}",
            f"{'id':>5} {'class':<10} {'occ':>3} {'trunc':>5} {'vis':>5}  amodal box"]
    for o in meta["objects"]:
        box = " ".join(f"{v:.1f}" for v in o["rect_amodal"])
        rows.append(f"{o['actor_id']:>5} {o['class']:<10} {o['occlusion_level']:>3} "
                    f"{o['truncation']:>5.2f} {o['visible_fraction']:>5.2f}  {box}")
    rows.append(f"objects: {len(meta['objects'])}")
    return rows


def cmd_inspect(args) -> int:
    root = Path(args.dataset)
    try:
        manifest = load_manifest(root)
    except FileNotFoundError:
        return _fail(EXIT_USAGE, f"no manifest.json in {root}")
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(EXIT_IO, f"cannot read manifest: {exc}")
    print(f"frames: {manifest['frames']}")
    print(f"seed: {manifest['seed']}")
    print(f"complete: {str(manifest['complete']).lower()}")
    for kind, n in sorted(manifest["boxes"].items()):
        print(f"boxes {kind}: {n}")
    print("conditions: " + " ".join(f"{w}={len(s)}" for w, s in manifest["conditions"].items()))
    if args.frame is None:
        return EXIT_OK
    if not 0 <= args.frame < manifest["frames"]:
        return _fail(EXIT_USAGE, f"frame {args.frame} out of range [0, {manifest['frames']})")
    s = stem(args.frame)
    try:
        with open(root / SUBDIRS["meta"] / f"{s}.json", encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        return _fail(EXIT_IO, f"cannot read frame metadata: {exc}")
    print("\n".join(_frame_table(meta)))
    image = root / SUBDIRS["images"] / f"{s}.ppm"
    if "images" in manifest.get("layout", {}) and image.exists():
        print(f"image: {image}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="streetsynth", description="Synthetic intersection dataset generator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate and write a labelled dataset")
    g.add_argument("config", nargs="?", help="JSON run config (defaults when omitted)")
    g.add_argument("--seed", type=int)
    g.add_argument("--frames", type=int)
    g.add_argument("--out", default="dataset")
    g.add_argument("--jobs", type=int, help="capture workers (default: available cores)")
    g.add_argument("--quiet", action="store_true", help="suppress progress output")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("eval", help="AP@0.5 / mAP@0.5 of predictions against labels")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", required=True)
    e.add_argument("--res", type=_resolution, default=(3840, 2160), help="image size WxH")
    e.add_argument("--report", help="write the JSON report here")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="summarize a generated dataset")
    i.add_argument("dataset")
    i.add_argument("--frame", type=int)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
