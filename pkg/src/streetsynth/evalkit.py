"""AP@0.5 / mAP@0.5 for two-class detection, pooled over all frames.

Predictions are matched greedily in descending confidence (ties keep input
order) to the unmatched ground-truth box of highest IoU, provided that IoU is
at least the threshold. AP is the area under the precision envelope
(all-points interpolation); mAP is the plain mean over classes that have
ground truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .export import CLASS_FROM_YOLO, YOLO_CLASS_ID, parse_yolo_line, read_label_file
from .geometry import PixelRect, rect_iou


class EvalInputError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    stem: str
    class_id: int
    rect: PixelRect
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


def match_detections(gt: Sequence[PixelRect], preds: Sequence[Detection],
                     iou_thr: float = 0.5) -> tuple[list[bool], int, list[tuple[int, int, float]]]:
    """Match one frame's predictions of one class against its ground truth.

    Returns ``(flags, n_missed, pairs)`` where ``flags[i]`` tells whether
    ``preds[i]`` is a true positive and ``pairs`` lists ``(pred, gt, iou)``.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i].confidence)
    taken = [False] * len(gt)
    flags = [False] * len(preds)
    pairs = []
    for i in order:
        best, best_iou = -1, iou_thr
        for j, g in enumerate(gt):
            if taken[j]:
                continue
            iou = rect_iou(preds[i].rect, g)
            if iou >= best_iou and (best < 0 or iou > best_iou):
                best, best_iou = j, iou
        if best >= 0:
            taken[best] = True
            flags[i] = True
            pairs.append((i, best, best_iou))
    return flags, taken.count(False), pairs


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    """All-points interpolated AP from TP flags sorted by descending confidence."""
    if n_gt <= 0:
        return 0.0
    tp = np.asarray(flags, dtype=bool)
    if tp.size == 0:
        return 0.0
    ctp = np.cumsum(tp)
    precision = ctp / np.arange(1, tp.size + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # recall rises by exactly 1/n_gt at each true positive
    return float(envelope[tp].sum() / n_gt)


@dataclass
class ClassResult:
    class_id: int
    ap: Optional[float]  # None when the class has no ground truth and no predictions
    tp: int = 0
    fp: int = 0
    fn: int = 0
    n_gt: int = 0


@dataclass
class EvalReport:
    per_class: dict[int, ClassResult]
    map50: float
    pairs: list = field(default_factory=list)

    def ap_percent(self, class_id: int) -> Optional[float]:
        ap = self.per_class[class_id].ap
        return None if ap is None else 100.0 * ap

    @property
    def map_percent(self) -> float:
        return 100.0 * self.map50

    def to_dict(self) -> dict:
        classes = {}
        for cid, r in sorted(self.per_class.items()):
            classes[CLASS_FROM_YOLO.get(cid, str(cid))] = {
                "class_id": cid,
                "ap50": None if r.ap is None else round(100.0 * r.ap, 1),
                "ap50_raw": r.ap,
                "tp": r.tp, "fp": r.fp, "fn": r.fn, "n_gt": r.n_gt,
            }
        return {
            "map50": round(self.map_percent, 1),
            "map50_raw": self.map50,
            "classes": classes,
            "matches": [list(p) for p in self.pairs],
        }

    def table(self) -> str:
        rows = []
        for cid, r in sorted(self.per_class.items()):
            name = CLASS_FROM_YOLO.get(cid, str(cid)).capitalize()
            ap = "n/a" if r.ap is None else f"{100.0 * r.ap:.1f}"
            rows.append(f"{name} AP@0.5: {ap}")
        rows.append(f"mAP@0.5: {self.map_percent:.1f}")
        return "\n".join(rows)


def class_mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values)) if values else 0.0


def map_at_50(gt: Mapping[str, Sequence[tuple[int, PixelRect]]],
              preds: Mapping[str, Sequence[Detection]],
              class_ids: Sequence[int] = tuple(sorted(CLASS_FROM_YOLO)),
              iou_thr: float = 0.5) -> EvalReport:
    """Dataset-level AP per class and their mean.

    ``gt`` maps frame stem to ``(class_id, rect)`` pairs; ``preds`` maps stem to
    detections. Frames are visited in sorted stem order, which fixes the order
    of equal-confidence predictions across frames.
    """
    unknown = sorted(set(preds) - set(gt))
    if unknown:
        raise EvalInputError("predictions reference unknown frames: " + ", ".join(unknown))
    per_class = {}
    pairs = []
    for cid in class_ids:
        scored: list[tuple[float, bool]] = []
        n_gt = fn = 0
        for s in sorted(gt):
            g = [r for c, r in gt[s] if c == cid]
            p = [d for d in preds.get(s, ()) if d.class_id == cid]
            flags, missed, frame_pairs = match_detections(g, p, iou_thr)
            n_gt += len(g)
            fn += missed
            scored.extend((d.confidence, f) for d, f in zip(p, flags))
            pairs.extend((s, cid, p[i].confidence, j, iou) for i, j, iou in frame_pairs)
        order = sorted(range(len(scored)), key=lambda i: -scored[i][0])
        flags = [scored[i][1] for i in order]
        tp = sum(flags)
        if n_gt == 0 and not flags:
            ap = None
        else:
            ap = average_precision(flags, n_gt)
        per_class[cid] = ClassResult(cid, ap, tp, len(flags) - tp, fn, n_gt)
    present = [r.ap for r in per_class.values() if r.n_gt > 0]
    return EvalReport(per_class, class_mean(present), pairs)


def load_predictions(path: Path | str, resolution: tuple[int, int],
                     stem: Optional[str] = None) -> list[Detection]:
    """Read an extended-YOLO file (``class cx cy w h conf``) into pixel-space detections.

    Plain 5-field lines are accepted with confidence 1.0 so a label directory
    can be scored against itself.
    """
    path = Path(path)
    stem = path.stem if stem is None else stem
    labels = read_label_file(path, parse_yolo_line, with_confidence=None)
    return [Detection(stem, lab.class_id, lab.to_rect(resolution), lab.confidence) for lab in labels]


def load_ground_truth(path: Path | str, resolution: tuple[int, int]) -> list[tuple[int, PixelRect]]:
    labels = read_label_file(Path(path), parse_yolo_line, with_confidence=False)
    return [(lab.class_id, lab.to_rect(resolution)) for lab in labels]


def label_dir(path: Path | str) -> Path:
    """Accept either a dataset root or a directory of YOLO label files."""
    path = Path(path)
    if (path / "labels_yolo").is_dir():
        return path / "labels_yolo"
    return path


def evaluate_dirs(gt_dir: Path | str, pred_dir: Path | str,
                  resolution: tuple[int, int]) -> EvalReport:
    gt_dir, pred_dir = label_dir(gt_dir), label_dir(pred_dir)
    gt = {p.stem: load_ground_truth(p, resolution) for p in sorted(gt_dir.glob("*.txt"))}
    preds = {p.stem: load_predictions(p, resolution) for p in sorted(pred_dir.glob("*.txt"))}
    return map_at_50(gt, preds)


def write_report(report: EvalReport, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


__all__ = [
    "Detection", "EvalReport", "EvalInputError", "ClassResult", "YOLO_CLASS_ID",
    "average_precision", "class_mean", "evaluate_dirs", "load_ground_truth",
    "load_predictions", "map_at_50", "match_detections", "write_report",
]
