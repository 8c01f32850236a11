import json

import pytest

from streetsynth.cli import main
from streetsynth.export import load_manifest

FAST = {"capture": {"analysis_resolution": [240, 135]}}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds") / "data"
    assert main(["generate", "--frames", "10", "--seed", "3", "--out", str(out), "--quiet",
                 "--jobs", "1"]) == 0
    return out


def test_generate_default_config(dataset):
    manifest = load_manifest(dataset)
    assert manifest["frames"] == 10 and manifest["complete"]
    assert manifest["config"]["capture"]["total_frames"] == 10  # effective config
    assert manifest["config"]["seed"] == 3
    assert len(list((dataset / "labels_yolo").glob("*.txt"))) == 10


def test_generate_reports_rate_and_path(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(FAST))
    code, out, err = run(capsys, "generate", cfg, "--frames", 3, "--out", tmp_path / "o", "--jobs", 1)
    assert code == 0
    assert "frames/sec:" in out and str((tmp_path / "o").resolve()) in out
    assert "[3/3]" in err and "[3/3]" not in out


def test_generate_twice_identical(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(FAST))
    for name in ("a", "b"):
        assert run(capsys, "generate", cfg, "--seed", 42, "--frames", 4, "--out",
                   tmp_path / name, "--quiet", "--jobs", 1)[0] == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_generate_bad_period(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"capture": {"period": -1}}))
    code, _, err = run(capsys, "generate", cfg, "--out", tmp_path / "o")
    assert code == 2 and "capture.period" in err


def test_generate_bad_frames_override(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--frames", 0, "--out", tmp_path / "o")
    assert code == 2 and "capture.total_frames" in err


def test_generate_io_error(tmp_path, capsys):
    blocker = tmp_path / "f"
    blocker.write_text("")
    code, _, err = run(capsys, "generate", "--frames", 1, "--out", blocker / "x", "--quiet")
    assert code == 3 and str(blocker) in err


def test_generate_missing_config(tmp_path, capsys):
    assert run(capsys, "generate", tmp_path / "nope.json")[0] == 3


def test_eval_against_itself(dataset, tmp_path, capsys):
    report = tmp_path / "r.json"
    code, out, _ = run(capsys, "eval", "--gt", dataset, "--pred", dataset / "labels_yolo",
                       "--report", report)
    assert code == 0 and "mAP@0.5: 100.0" in out
    assert json.loads(report.read_text())["map50"] == 100.0


def test_eval_empty_predictions(dataset, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code, out, _ = run(capsys, "eval", "--gt", dataset, "--pred", empty)
    assert code == 0
    assert "Pedestrian AP@0.5: 0.0" in out and "Vehicle AP@0.5: 0.0" in out


def test_eval_stem_mismatch(dataset, tmp_path, capsys):
    pred = tmp_path / "p"
    pred.mkdir()
    (pred / "000001.txt").write_text("")
    code, _, err = run(capsys, "eval", "--gt", dataset, "--pred", pred)
    assert code == 2 and "000000" in err and "000009" in err


def _write_fixture(root, n_gt, n_tp, cls):
    """n_gt boxes of one class, the first n_tp detected exactly."""
    gt, pred = root / "gt", root / "pred"
    gt.mkdir(exist_ok=True)
    pred.mkdir(exist_ok=True)
    for i in range(n_gt):
        s = f"{cls}{i:05d}"
        (gt / f"{s}.txt").write_text(f"{cls} 0.5 0.5 0.1 0.1\n")
        (pred / f"{s}.txt").write_text(f"{cls} 0.5 0.5 0.1 0.1 0.9\n" if i < n_tp else "")
    return gt, pred


def test_eval_table_row(tmp_path, capsys):
    # AP = 19/40 = 47.5 for pedestrians and 857/1000 = 85.7 for vehicles
    _write_fixture(tmp_path, 40, 19, 0)
    gt, pred = _write_fixture(tmp_path, 1000, 857, 1)
    code, out, _ = run(capsys, "eval", "--gt", gt, "--pred", pred)
    assert code == 0
    assert out.splitlines() == ["Pedestrian AP@0.5: 47.5", "Vehicle AP@0.5: 85.7", "mAP@0.5: 66.6"]


def test_eval_bad_resolution(dataset, capsys):
    with pytest.raises(SystemExit) as err:
        main(["eval", "--gt", str(dataset), "--pred", str(dataset), "--res", "big"])
    assert err.value.code == 2


def test_eval_missing_dir(tmp_path, capsys):
    assert run(capsys, "eval", "--gt", tmp_path / "x", "--pred", tmp_path / "y")[0] == 2


def test_inspect_summary(dataset, capsys):
    code, out, _ = run(capsys, "inspect", dataset)
    manifest = load_manifest(dataset)
    assert code == 0 and "frames: 10" in out.splitlines()
    assert f"boxes vehicle: {manifest['boxes']['vehicle']}" in out
    assert "seed: 3" in out and "conditions:" in out


def test_inspect_frame(dataset, capsys):
    code, out, _ = run(capsys, "inspect", dataset, "--frame", 3)
    assert code == 0 and "frame 000003" in out and "objects:" in out


def test_inspect_frame_out_of_range(dataset, capsys):
    assert run(capsys, "inspect", dataset, "--frame", 99)[0] == 2


def test_inspect_missing_manifest(tmp_path, capsys):
    assert run(capsys, "inspect", tmp_path)[0] == 2


def test_inspect_reports_image(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({**FAST, "export": {"images": True}}))
    assert run(capsys, "generate", cfg, "--frames", 2, "--out", tmp_path / "o", "--quiet")[0] == 0
    code, out, _ = run(capsys, "inspect", tmp_path / "o", "--frame", 1)
    assert code == 0 and "000001.ppm" in out


def test_no_subcommand(capsys):
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
