from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streetsynth.evalkit import (Detection, EvalInputError, average_precision, class_mean,
                                 load_predictions, map_at_50, match_detections)
from streetsynth.export import LabelParseError
from streetsynth.geometry import PixelRect


def pr_oracle(flags, n_gt):
    """AP from an explicit PR curve in exact arithmetic.

    Each prefix of the ranked list gives a (recall, precision) point; the
    interpolated precision at a recall level is the best precision at any
    point with recall at least that level; AP sums it over the recall steps.
    """
    points = []
    tp = 0
    for k, f in enumerate(flags, start=1):
        tp += f
        points.append((Fraction(tp, n_gt), Fraction(tp, k)))
    ap, prev = Fraction(0), Fraction(0)
    for r, _ in points:
        if r > prev:
            ap += (r - prev) * max(p for rr, p in points if rr >= r)
            prev = r
    return ap


def R(*a):
    return PixelRect(*a)


def det(rect, conf, cid=0, stem="000000"):
    return Detection(stem, cid, R(*rect), conf)


def test_fixture_ap():
    flags = [True, False, True]
    assert average_precision(flags, 2) == pytest.approx(5 / 6, abs=1e-12)
    assert float(pr_oracle(flags, 2)) == pytest.approx(0.8333333333, abs=1e-9)


@given(st.lists(st.booleans(), max_size=40), st.integers(0, 10))
def test_ap_matches_oracle(flags, extra):
    n_gt = sum(flags) + extra
    if n_gt == 0:
        assert average_precision(flags, n_gt) == 0.0
        return
    assert average_precision(flags, n_gt) == pytest.approx(float(pr_oracle(flags, n_gt)), abs=1e-12)


def test_ap_edge_cases():
    assert average_precision([True], 1) == 1.0
    assert average_precision([], 3) == 0.0


def test_single_match():
    flags, missed, _ = match_detections([R(0, 0, 10, 10)], [det((0, 0, 10, 9), 0.5)])
    assert flags == [True] and missed == 0


def test_duplicate_detection_is_fp():
    gt = [R(0, 0, 10, 10)]
    preds = [det((0, 0, 10, 9), 0.4), det((0, 0, 10, 10), 0.9)]
    flags, missed, _ = match_detections(gt, preds)
    assert flags == [False, True] and missed == 0


def test_iou_threshold_inclusive():
    gt = [R(0, 0, 100, 10)]
    # IoU 0.49 and exactly 0.5
    assert match_detections(gt, [det((0, 0, 49, 10), 1.0)])[0] == [False]
    assert match_detections(gt, [det((0, 0, 50, 10), 1.0)])[0] == [True]


def test_prefers_highest_iou_gt():
    gt = [R(0, 0, 10, 10), R(2, 0, 12, 10)]
    flags, _, pairs = match_detections(gt, [det((2, 0, 12, 10), 1.0)])
    assert pairs[0][1] == 1


def test_perfect_detector():
    gt = {f"{i:06d}": [(i % 2, R(10 * i, 0, 10 * i + 8, 8)), (0, R(0, 50, 20, 80))]
          for i in range(5)}
    preds = {s: [Detection(s, c, r, 1.0) for c, r in v] for s, v in gt.items()}
    rep = map_at_50(gt, preds)
    assert rep.map_percent == 100.0
    assert all(rep.ap_percent(c) == 100.0 for c in (0, 1))


def test_no_predictions():
    gt = {"000000": [(0, R(0, 0, 5, 5)), (1, R(10, 10, 20, 20))]}
    rep = map_at_50(gt, {})
    assert rep.ap_percent(0) == 0.0 and rep.map50 == 0.0


def test_unknown_stem_rejected():
    with pytest.raises(EvalInputError, match="000009"):
        map_at_50({"000000": []}, {"000009": []})


def test_class_without_gt_excluded_from_mean():
    gt = {"000000": [(0, R(0, 0, 5, 5))]}
    preds = {"000000": [Detection("000000", 0, R(0, 0, 5, 5), 0.9),
                        Detection("000000", 1, R(50, 50, 60, 60), 0.9)]}
    rep = map_at_50(gt, preds)
    assert rep.map50 == 1.0 and rep.per_class[1].fp == 1


@pytest.mark.parametrize("ped, veh, published", [
    (24.8, 86.9, 55.8), (14.9, 75.4, 45.1), (24.0, 81.8, 52.9), (47.5, 85.7, 66.6),
])
def test_table_rows(ped, veh, published):
    assert class_mean([ped, veh]) == pytest.approx(published, abs=0.1)


def test_pooled_across_frames():
    # TP (0.9) in frame 0, FP (0.8) in frame 1, TP (0.7) in frame 1 -> fixture AP
    gt = {"000000": [(0, R(0, 0, 10, 10))], "000001": [(0, R(0, 0, 10, 10))]}
    preds = {"000000": [Detection("000000", 0, R(0, 0, 10, 10), 0.9)],
             "000001": [Detection("000001", 0, R(50, 50, 60, 60), 0.8),
                        Detection("000001", 0, R(0, 0, 10, 10), 0.7)]}
    assert map_at_50(gt, preds, class_ids=(0,)).per_class[0].ap == pytest.approx(5 / 6)


def test_load_predictions(tmp_path):
    p = tmp_path / "000003.txt"
    p.write_text("1 0.5 0.5 0.5 0.5 0.90\n")
    (d,) = load_predictions(p, (3840, 2160))
    assert d.stem == "000003" and d.class_id == 1 and d.confidence == 0.9
    assert d.rect.as_tuple() == (960, 540, 2880, 1620)


def test_load_predictions_bad_conf(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("1 0.5 0.5 0.5 0.5 1.2\n")
    with pytest.raises(LabelParseError):
        load_predictions(p, (3840, 2160))


def test_load_predictions_empty(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("")
    assert load_predictions(p, (3840, 2160)) == []


def test_detection_confidence_checked():
    with pytest.raises(ValueError):
        Detection("a", 0, R(0, 0, 1, 1), 1.5)


def test_report_table_format():
    gt = {"000000": [(0, R(0, 0, 5, 5)), (1, R(10, 10, 20, 20))]}
    rep = map_at_50(gt, {"000000": [Detection("000000", 1, R(10, 10, 20, 20), 0.5)]})
    assert rep.table().splitlines() == [
        "Pedestrian AP@0.5: 0.0", "Vehicle AP@0.5: 100.0", "mAP@0.5: 50.0"]
    d = rep.to_dict()
    assert d["map50"] == 50.0 and d["classes"]["vehicle"]["tp"] == 1


def test_ap_invariant_to_frame_split():
    rng = np.random.default_rng(0)
    boxes = [R(x, 0, x + 10, 10) for x in range(0, 500, 20)]
    conf = rng.uniform(0, 1, len(boxes))
    keep = rng.random(len(boxes)) < 0.7
    one = {"000000": [(0, b) for b in boxes]}
    p_one = {"000000": [Detection("000000", 0, b, float(c)) for b, c, k in zip(boxes, conf, keep) if k]}
    split = {f"{i:06d}": [(0, b)] for i, b in enumerate(boxes)}
    p_split = {f"{i:06d}": [Detection(f"{i:06d}", 0, b, float(c))]
               for i, (b, c, k) in enumerate(zip(boxes, conf, keep)) if k}
    assert map_at_50(one, p_one).map50 == pytest.approx(map_at_50(split, p_split).map50)
