import io
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from detrefine.cli import main
from detrefine.config import ConfigError, config_from_dict, load_config
from detrefine.core import BoundingBox, Detection, FrameSet
from detrefine.harness import generate, rider_scenario
from detrefine.io import ParseError, parse_detections, parse_ground_truth, serialize_detections
from detrefine.pipeline import run_pipeline


def test_parse_example():
    res = parse_detections(["7,42,100,200,50,80,2,0.95"])
    assert res.errors == []
    (d,) = res.videos[7].frames[42]
    assert d.box == BoundingBox(100, 200, 50, 80) and d.label == 2 and d.confidence == 0.95


@pytest.mark.parametrize("line", [
    "7,42,100,200,-5,80,2,0.95",
    "7,42,100,200,5,80,10,0.95",
    "7,42,100,200,5,80,2,1.5",
    "7,42,100,200,5,80,2",
    "7,x,100,200,5,80,2,0.5",
])
def test_parse_rejects(line):
    res = parse_detections(["1,0,0,0,1,1,1,0.5", line])
    assert len(res.errors) == 1 and res.errors[0].lineno == 2
    assert len(res.videos[1]) == 1
    with pytest.raises(ParseError):
        parse_detections([line], strict=True)


def test_ground_truth_parse():
    gts, errors = parse_ground_truth(["1,3,10,10,20,20,9", "bad"])
    assert len(gts) == 1 and gts[0].label == 9 and len(errors) == 1


def dump(videos):
    buf = io.StringIO()
    serialize_detections(videos, buf)
    return buf.getvalue()


num = st.one_of(st.integers(0, 2000), st.floats(0, 2000, allow_nan=False))
det_line = st.builds(
    lambda v, f, l, t, w, h, c, p: f"{v},{f},{l},{t},{w},{h},{c},{p}",
    st.integers(0, 3), st.integers(0, 20), num, num,
    st.floats(0.5, 300), st.floats(0.5, 300), st.integers(1, 9), st.floats(0, 1))


@settings(max_examples=200, deadline=None)
@given(st.lists(det_line, max_size=20))
def test_round_trip(lines):
    once = dump(parse_detections(lines, strict=True).videos)
    twice = dump(parse_detections(once.splitlines(), strict=True).videos)
    assert once == twice
    assert sorted(parse_detections(once.splitlines()).videos) == sorted(parse_detections(lines).videos)


def test_config_defaults_and_overrides(tmp_path, monkeypatch):
    cfg = load_config(None)
    assert cfg.refine.theta0 == 0.3 and cfg.tracker.max_age == 10 and cfg.top_k == 100
    p = tmp_path / "c.yaml"
    p.write_text("profile: default\nrefine: {lambda: 0.2}\neval: {top_k: 50}\n")
    monkeypatch.setenv("DETREFINE_CONFIG", str(p))
    cfg = load_config(None)
    assert cfg.refine.penalty == 0.2 and cfg.top_k == 50
    with pytest.raises(ConfigError):
        config_from_dict({"refine": {"bogus": 1}})
    with pytest.raises(ConfigError):
        config_from_dict({"profile": "other"})
    with pytest.raises(FileNotFoundError):
        load_config(str(tmp_path / "missing.yaml"))


@pytest.fixture
def rider_files(tmp_path):
    fs, gts, _ = generate(rider_scenario(1, num_riders=3, num_frames=8))
    fs.video_id = 1
    det = tmp_path / "det.txt"
    gt = tmp_path / "gt.txt"
    assert main(["synth", "--config", str(_rider_cfg(tmp_path)), "-o", str(det), "--gt", str(gt)]) == 0
    return det, gt


def _rider_cfg(tmp_path):
    p = tmp_path / "riders.yaml"
    p.write_text("scenario: {kind: riders, seed: 1, num_riders: 3, num_frames: 8}\n")
    return p


def test_pipeline_all_off_is_identity(rider_files, tmp_path):
    det, _ = rider_files
    out = tmp_path / "out.txt"
    assert main(["pipeline", str(det), "--disable-al", "--disable-ce", "-o", str(out)]) == 0
    assert out.read_text() == det.read_text()


def test_pipeline_uniform_tracks_unchanged(rider_files, tmp_path):
    det, _ = rider_files
    out, journal = tmp_path / "out.txt", tmp_path / "j.txt"
    assert main(["pipeline", str(det), "--disable-ce", "-o", str(out), "--journal", str(journal)]) == 0
    assert out.read_text() == det.read_text()
    assert journal.read_text() == ""


def test_expand_fifteen_per_pair(tmp_path):
    det = tmp_path / "d.txt"
    det.write_text("1,0,100,120,40,60,1,0.9\n1,0,105,100,30,40,2,0.95\n")
    out = tmp_path / "o.txt"
    assert main(["expand", str(det), "-o", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 15
    assert main(["expand", str(det), "-o", str(out), "--top-k", "3"]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_eval_and_records(rider_files, tmp_path, capsys):
    det, gt = rider_files
    rec = tmp_path / "rec.txt"
    assert main(["eval", str(det), str(gt), "--records", str(rec)]) == 0
    assert "mAP@50" in capsys.readouterr().out
    aps = dict(line.split(",") for line in rec.read_text().splitlines())
    assert float(aps["1"]) == 1.0 and float(aps["9"]) == 0.0


def test_track_and_refine_commands(rider_files, tmp_path):
    det, _ = rider_files
    out = tmp_path / "t.txt"
    assert main(["track", str(det), "-o", str(out)]) == 0
    ids = {line.split(",")[2] for line in out.read_text().splitlines()}
    assert len(ids) == 6
    assert main(["refine", str(det), "-o", str(out), "--journal", str(tmp_path / "j")]) == 0


def test_fuse_command(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.write_text("1,0,10,10,20,20,2,0.6\n")
    b.write_text("1,0,10,10,20,20,2,0.8\n")
    out = tmp_path / "o"
    assert main(["fuse", str(a), str(b), "-o", str(out)]) == 0
    assert out.read_text() == "1,0,10,10,20,20,2,0.7\n"
    assert main(["fuse", str(a), str(b), "--weights", "1"]) == 1


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad"
    bad.write_text("1,0,0,0,-1,1,1,0.5\n")
    assert main(["expand", str(bad), "--strict", "-o", str(tmp_path / "o")]) == 1
    assert main(["expand", str(bad), "-o", str(tmp_path / "o")]) == 0
    assert main(["expand", str(tmp_path / "missing")]) == 2
    cfg = tmp_path / "c.yaml"
    cfg.write_text("tracker: {nope: 1}\n")
    assert main(["expand", str(bad), "--config", str(cfg)]) == 1


def test_console_script_runs(tmp_path):
    det = tmp_path / "d.txt"
    det.write_text("1,0,100,120,40,60,1,0.9\n")
    proc = subprocess.run([sys.executable, "-m", "detrefine.cli", "expand", str(det)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and len(proc.stdout.splitlines()) == 9


def test_jobs_byte_identical(tmp_path):
    videos = {}
    for vid in (1, 2, 3):
        fs, _, _ = generate(rider_scenario(vid, num_riders=2, num_frames=6))
        videos[vid] = FrameSet(vid, fs.frames)
    cfg = load_config(None)
    a = dump(run_pipeline(cfg, videos, jobs=1).videos)
    b = dump(run_pipeline(cfg, videos, jobs=3).videos)
    assert a == b
