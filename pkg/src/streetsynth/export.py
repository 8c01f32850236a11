"""Label files, per-frame metadata, dataset manifest and debug images.

Layout under the dataset root::

    labels_kitti/NNNNNN.txt   15-field KITTI object lines
    labels_yolo/NNNNNN.txt    5-field normalized YOLO lines
    meta/NNNNNN.json          capture time, environment, camera, per-object extras
    images/NNNNNN.ppm         optional flat-shaded id render (binary P6)
    manifest.json             run summary; written first as incomplete, finalized last

All text is UTF-8 with LF line endings and carries no timestamps, so a run is
reproducible byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .annotate import FrameAnnotation, ObjectAnnotation
from .environment import WEATHERS, EnvironmentState
from .geometry import PixelRect
from .scene import PEDESTRIAN, VEHICLE
from .visibility import EMPTY_ID, PROP_ID, IdDepthBuffer

FORMAT_VERSION = 1

YOLO_CLASS_ID = {PEDESTRIAN: 0, VEHICLE: 1}
KITTI_TYPE = {PEDESTRIAN: "Pedestrian", VEHICLE: "Car"}
CLASS_FROM_YOLO = {v: k for k, v in YOLO_CLASS_ID.items()}
CLASS_FROM_KITTI = {v: k for k, v in KITTI_TYPE.items()}

SUBDIRS = {"kitti": "labels_kitti", "yolo": "labels_yolo", "meta": "meta", "images": "images"}


class LabelParseError(ValueError):
    """Malformed label line; carries the 1-based line number and 0-based field index."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[int] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


class ExportError(OSError):
    pass


def stem(index: int) -> str:
    return f"{index:06d}"


def class_map() -> dict:
    return {kind: {"yolo_id": YOLO_CLASS_ID[kind], "kitti_type": KITTI_TYPE[kind]}
            for kind in (PEDESTRIAN, VEHICLE)}


def _f2(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _f6(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


@dataclass(frozen=True)
class KittiLabel:
    type: str
    truncated: float
    occluded: int
    alpha: float
    bbox: tuple[float, float, float, float]
    dimensions: tuple[float, float, float]  # h, w, l
    location: tuple[float, float, float]
    rotation_y: float

    @classmethod
    def from_annotation(cls, obj: ObjectAnnotation) -> "KittiLabel":
        b = obj.box3d
        return cls(KITTI_TYPE[obj.kind], obj.truncation, obj.occlusion_level, b.alpha,
                   obj.rect_amodal.as_tuple(), b.dimensions, b.location, b.rotation_y)

    def format(self) -> str:
        fields = [self.type, _f2(self.truncated), str(int(self.occluded)), _f2(self.alpha)]
        fields += [_f2(v) for v in self.bbox]
        fields += [_f2(v) for v in self.dimensions]
        fields += [_f2(v) for v in self.location]
        fields.append(_f2(self.rotation_y))
        return " ".join(fields)


def write_kitti_line(obj: ObjectAnnotation | KittiLabel) -> str:
    """One KITTI object line (no terminator) using the clipped amodal box."""
    label = obj if isinstance(obj, KittiLabel) else KittiLabel.from_annotation(obj)
    return label.format()


def _number(tok: str, line: Optional[int], idx: int) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise LabelParseError(f"non-numeric value {tok!r}", line, idx) from None
    if not math.isfinite(val):
        raise LabelParseError(f"non-finite value {tok!r}", line, idx)
    return val


def parse_kitti_line(text: str, line: Optional[int] = None) -> KittiLabel:
    toks = text.split()
    if len(toks) != 15:
        raise LabelParseError(f"expected 15 fields, got {len(toks)}", line)
    if toks[0] not in CLASS_FROM_KITTI:
        raise LabelParseError(f"unknown type {toks[0]!r}", line, 0)
    vals = [_number(t, line, i) for i, t in enumerate(toks[1:], start=1)]
    truncated = vals[0]
    if not 0.0 <= truncated <= 1.0:
        raise LabelParseError("truncated outside [0, 1]", line, 1)
    occ = vals[1]
    if occ != int(occ) or not 0 <= occ <= 3:
        raise LabelParseError("occluded must be an integer in 0..3", line, 2)
    l, t, r, b = vals[3:7]
    if l > r or t > b:
        raise LabelParseError("bbox corners out of order", line, 4)
    return KittiLabel(toks[0], truncated, int(occ), vals[2], (l, t, r, b), tuple(vals[7:10]),
                      tuple(vals[10:13]), vals[13])


@dataclass(frozen=True)
class YoloLabel:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float
    confidence: Optional[float] = None

    def format(self) -> str:
        fields = [str(self.class_id), _f6(self.cx), _f6(self.cy), _f6(self.w), _f6(self.h)]
        if self.confidence is not None:
            fields.append(_f6(self.confidence))
        return " ".join(fields)

    def to_rect(self, resolution: tuple[int, int]) -> PixelRect:
        W, H = resolution
        return PixelRect((self.cx - self.w / 2) * W, (self.cy - self.h / 2) * H,
                         (self.cx + self.w / 2) * W, (self.cy + self.h / 2) * H)


def yolo_label(kind: str, rect: PixelRect, resolution: tuple[int, int]) -> Optional[YoloLabel]:
    W, H = resolution
    if rect.area <= 0.0:
        return None
    if rect.left < 0 or rect.top < 0 or rect.right > W or rect.bottom > H:
        raise ValueError(f"rect {rect} extends outside the {W}x{H} image")

    def unit(x):
        return min(1.0, max(0.0, x))

    return YoloLabel(YOLO_CLASS_ID[kind], unit((rect.left + rect.right) / 2 / W),
                     unit((rect.top + rect.bottom) / 2 / H), unit(rect.width / W),
                     unit(rect.height / H))


def write_yolo_line(obj: ObjectAnnotation, resolution: tuple[int, int]) -> Optional[str]:
    """Normalized ``class cx cy w h`` line, or ``None`` for a zero-area box."""
    label = yolo_label(obj.kind, obj.rect_amodal, resolution)
    return None if label is None else label.format()


def parse_yolo_line(text: str, line: Optional[int] = None,
                    with_confidence: Optional[bool] = False) -> YoloLabel:
    """Parse a YOLO line.

    ``with_confidence``: ``False`` requires 5 fields, ``True`` requires 6, and
    ``None`` accepts either (a missing confidence reads as 1.0).
    """
    toks = text.split()
    allowed = {False: (5,), True: (6,), None: (5, 6)}[with_confidence]
    if len(toks) not in allowed:
        want = " or ".join(str(n) for n in allowed)
        raise LabelParseError(f"expected {want} fields, got {len(toks)}", line)
    cls_val = _number(toks[0], line, 0)
    if cls_val != int(cls_val) or int(cls_val) not in CLASS_FROM_YOLO:
        raise LabelParseError(f"unknown class id {toks[0]!r}", line, 0)
    vals = [_number(t, line, i) for i, t in enumerate(toks[1:], start=1)]
    for i, v in enumerate(vals, start=1):
        if not 0.0 <= v <= 1.0:
            raise LabelParseError(f"value {v} outside [0, 1]", line, i)
    conf = vals[4] if len(vals) == 5 else (1.0 if with_confidence is None else None)
    return YoloLabel(int(cls_val), vals[0], vals[1], vals[2], vals[3], conf)


def read_label_file(path: Path, parser, **kw) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            if raw.strip():
                try:
                    out.append(parser(raw, line=n, **kw))
                except LabelParseError as exc:
                    raise LabelParseError(f"{path}: {exc}") from None
    return out


# --- debug renderer -----------------------------------------------------

BACKDROP = {
    "clear": (118, 124, 112), "rain": (84, 90, 96), "snow": (196, 200, 206),
    "dust": (150, 126, 92), "heatwave": (168, 148, 110), "night": (22, 24, 34),
}
CLASS_COLOR = {PEDESTRIAN: (230, 60, 50), VEHICLE: (40, 110, 230)}
PROP_COLOR = (150, 150, 150)
NIGHT_DIM = 0.45


def render_debug_image(buffer: IdDepthBuffer, env: EnvironmentState,
                       kinds: Optional[Mapping[int, str]] = None) -> bytes:
    """Binary PPM of the id buffer: class colours, depth shading, weather backdrop."""
    kinds = kinds or {}
    H, W = buffer.height, buffer.width
    img = np.empty((H, W, 3), np.float64)
    img[:] = BACKDROP.get(env.weather, BACKDROP["clear"])
    covered = buffer.ids != EMPTY_ID
    if covered.any():
        d = buffer.depth[covered]
        lo, hi = float(d.min()), float(d.max())
        shade = np.ones(H * W).reshape(H, W)
        if hi > lo:
            shade[covered] = 1.0 - 0.5 * (buffer.depth[covered] - lo) / (hi - lo)
        colors = np.zeros((H, W, 3))
        colors[buffer.ids == PROP_ID] = PROP_COLOR
        for aid in np.unique(buffer.ids[buffer.ids >= 0]).tolist():
            colors[buffer.ids == aid] = CLASS_COLOR.get(kinds.get(aid, VEHICLE), CLASS_COLOR[VEHICLE])
        if env.weather == "night":
            colors *= NIGHT_DIM
        img[covered] = colors[covered] * shade[covered][:, None]
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (W, H) + pixels.tobytes()


# --- dataset writer -----------------------------------------------------

@dataclass(frozen=True)
class ExportOptions:
    kitti: bool = True
    yolo: bool = True
    images: bool = False

    def validate(self, prefix: str = "export") -> None:
        from .scene import ConfigError
        if not (self.kitti or self.yolo):
            raise ConfigError(prefix, "enable at least one label format")


def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def frame_meta(frame: FrameAnnotation) -> dict:
    return {
        "frame": frame.index,
        "stem": stem(frame.index),
        "time": frame.time,
        "environment": frame.environment.to_dict(),
        "camera": frame.camera.to_dict(),
        "objects": [o.to_dict() for o in frame.objects],
    }


def write_frame(root: Path, frame: FrameAnnotation, options: ExportOptions) -> dict:
    """Write one frame's files; returns the per-class box counts."""
    s = stem(frame.index)
    res = frame.camera.resolution
    if options.kitti:
        lines = [write_kitti_line(o) for o in frame.objects]
        _write_text(root / SUBDIRS["kitti"] / f"{s}.txt", "".join(f"{x}\n" for x in lines))
    if options.yolo:
        lines = [x for x in (write_yolo_line(o, res) for o in frame.objects) if x is not None]
        _write_text(root / SUBDIRS["yolo"] / f"{s}.txt", "".join(f"{x}\n" for x in lines))
    _write_text(root / SUBDIRS["meta"] / f"{s}.json", _dump_json(frame_meta(frame)))
    if options.images and frame.buffer is not None:
        path = root / SUBDIRS["images"] / f"{s}.ppm"
        try:
            path.write_bytes(render_debug_image(frame.buffer, frame.environment, frame.kinds))
        except OSError as exc:
            raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    counts = {PEDESTRIAN: 0, VEHICLE: 0}
    for o in frame.objects:
        counts[o.kind] += 1
    return counts


def prepare_layout(root: Path, options: ExportOptions) -> None:
    wanted = ["meta"] + [k for k in ("kitti", "yolo", "images") if getattr(options, k)]
    for key in wanted:
        path = root / SUBDIRS[key]
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ExportError(f"cannot create {path}: {exc.strerror or exc}") from exc
        if not os.access(path, os.W_OK):
            raise ExportError(f"cannot write to {path}: permission denied")


def write_dataset(frames: Iterable[FrameAnnotation], root: Path | str, options: ExportOptions,
                  config: Optional[Mapping] = None, seed: Optional[int] = None,
                  progress=None) -> dict:
    """Serialize a frame stream and return the finalized manifest.

    The manifest is written as incomplete before the first frame, so an
    interrupted run is recognisable, and rewritten once every frame is on disk.
    """
    root = Path(root)
    prepare_layout(root, options)
    config = dict(config or {})
    manifest = {
        "format_version": FORMAT_VERSION,
        "complete": False,
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
        "class_map": class_map(),
        "layout": {k: v for k, v in SUBDIRS.items()
                   if k == "meta" or getattr(options, k, False)},
        "frames": 0,
        "stems": [],
        "capture_times": [],
        "boxes": {PEDESTRIAN: 0, VEHICLE: 0},
        "conditions": {w: [] for w in WEATHERS},
    }
    _write_text(root / "manifest.json", _dump_json(manifest))
    for frame in frames:
        counts = write_frame(root, frame, options)
        s = stem(frame.index)
        manifest["frames"] += 1
        manifest["stems"].append(s)
        manifest["capture_times"].append(frame.time)
        for kind, n in counts.items():
            manifest["boxes"][kind] += n
        manifest["conditions"].setdefault(frame.environment.weather, []).append(s)
        if progress is not None:
            progress(manifest["frames"])
    manifest["complete"] = True
    _write_text(root / "manifest.json", _dump_json(manifest))
    return manifest


def load_manifest(root: Path | str) -> dict:
    with open(Path(root) / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)
