import subprocess
import sys

import pytest

from flowtrack.cli import main


@pytest.fixture
def bundle(tmp_path):
    out = tmp_path / "seq"
    assert main(["synth", "--scenario", "pan", "--frames", "30", "--objects", "6", "--seed", "7",
                 "--out-dir", str(out)]) == 0
    return out


def test_synth_is_deterministic(tmp_path, bundle):
    other = tmp_path / "again"
    assert main(["synth", "--scenario", "pan", "--frames", "30", "--objects", "6", "--seed", "7",
                 "--out-dir", str(other)]) == 0
    files = sorted(p.relative_to(bundle) for p in bundle.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(other) for p in other.rglob("*") if p.is_file())
    for f in files:
        assert (bundle / f).read_bytes() == (other / f).read_bytes()


def test_track_and_eval(tmp_path, bundle, capsys):
    res = tmp_path / "r.txt"
    assert main(["track", "--detections", str(bundle / "det.txt"), "--format", "visdrone",
                 "--output", str(res), "--motion-mode", "flow", "--flow-dir", str(bundle / "flow"),
                 "--embeddings", str(bundle / "embeddings.csv")]) == 0
    assert res.read_text()
    rep = tmp_path / "m.txt"
    assert main(["eval", "--gt", str(bundle / "gt.txt"), "--format", "visdrone", "--results", str(res),
                 "--report", str(rep)]) == 0
    kv = dict(line.split("=") for line in rep.read_text().splitlines())
    assert float(kv["MOTA"]) > 0.8
    assert "IDF1" in capsys.readouterr().out


def test_eval_perfect(tmp_path, bundle, capsys):
    # ground truth written as results scores 100 %
    lines = [l.rsplit(",", 2)[0] + ",-1,-1\n" for l in (bundle / "gt.txt").read_text().splitlines()]
    res = tmp_path / "perfect.txt"
    res.write_text("".join(lines))
    assert main(["eval", "--gt", str(bundle / "gt.txt"), "--format", "visdrone", "--results", str(res)]) == 0
    out = capsys.readouterr().out
    assert "100.0" in out


def test_eval_metrics_filter(tmp_path, bundle, capsys):
    res = tmp_path / "r.txt"
    main(["track", "--detections", str(bundle / "det.txt"), "--format", "visdrone", "--output", str(res)])
    capsys.readouterr()
    assert main(["eval", "--gt", str(bundle / "gt.txt"), "--format", "visdrone", "--results", str(res),
                 "--metrics", "ap"]) == 0
    out = capsys.readouterr().out
    assert "AP" in out and "MOTA" not in out and "IDF1" not in out


def test_missing_flow_dir_is_usage_error(bundle, tmp_path):
    assert main(["track", "--detections", str(bundle / "det.txt"), "--output", str(tmp_path / "r.txt"),
                 "--motion-mode", "flow"]) == 2
    assert not (tmp_path / "r.txt").exists()


def test_mismatched_lengths_exit_1(tmp_path, bundle):
    res = tmp_path / "r.txt"
    res.write_text("99,1,0,0,10,10,1,1,-1,-1\n")
    assert main(["eval", "--gt", str(bundle / "gt.txt"), "--format", "visdrone", "--results", str(res)]) == 1


def test_empty_gt_exit_1(tmp_path):
    gt = tmp_path / "gt.txt"
    gt.write_text("")
    res = tmp_path / "r.txt"
    res.write_text("1,1,0,0,10,10,1,1,-1,-1\n")
    assert main(["eval", "--gt", str(gt), "--results", str(res)]) == 1


def test_bad_arguments_exit_2(tmp_path):
    assert main(["synth", "--scenario", "foggy", "--out-dir", str(tmp_path / "x")]) == 2
    assert main(["synth", "--scenario", "crowded", "--objects", "2", "--out-dir", str(tmp_path / "x")]) == 2
    assert main(["eval", "--gt", "a", "--results", "b", "--metrics", "hota"]) == 2
    assert main([]) == 2


def test_missing_input_exit_1(tmp_path):
    assert main(["track", "--detections", str(tmp_path / "none.txt"), "--output", str(tmp_path / "r.txt")]) == 1


def test_synth_refuses_to_clobber_foreign_dir(tmp_path):
    d = tmp_path / "keep"
    d.mkdir()
    (d / "precious.txt").write_text("x")
    assert main(["synth", "--out-dir", str(d)]) == 1
    assert (d / "precious.txt").exists()


def test_multi_sequence_jobs(tmp_path, bundle):
    other = tmp_path / "seq2"
    main(["synth", "--scenario", "static", "--frames", "10", "--out-dir", str(other)])
    out = tmp_path / "res"
    assert main(["track", "--detections", str(bundle / "det.txt"), str(other / "det.txt"),
                 "--format", "visdrone", "--output", str(out), "--jobs", "2"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["seq2_det.txt", "seq_det.txt"]
    assert main(["track", "--detections", str(bundle / "det.txt"), str(other / "det.txt"),
                 "--output", str(out), "--embeddings", "only_one.csv"]) == 2


def test_ablate(tmp_path, capsys):
    rep = tmp_path / "ab.txt"
    assert main(["ablate", "--scenario", "pan", "--seed", "7", "--frames", "40", "--report", str(rep)]) == 0
    out = capsys.readouterr().out
    assert out.count("[ok]") + out.count("[MOTA DROP]") == 4
    assert rep.read_text().count("[") == 5


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "flowtrack", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "track" in r.stdout
