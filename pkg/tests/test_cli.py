import subprocess
import sys

import numpy as np
import pytest

from handpose import calib
from handpose.cli import main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("ds")
    assert main(["gen-synth", "--n", "16", "--seed", "2", "--out", str(d), "--absent-fraction", "0.25"]) == 0
    return d


def test_gen_synth_writes_manifest(dataset):
    assert (dataset / "manifest.jsonl").exists()
    assert len(list((dataset / "images").iterdir())) == 16


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["gen-synth", "--n", "3"]) == 2
    assert main(["gen-synth", "--n", "3", "--out", "x", "--se", "1"]) == 2  # no abbreviations
    assert main(["eval", "--manifest", "m", "--out", "o"]) == 2  # --params is required


def test_runtime_errors_exit_1(tmp_path, capsys):
    assert main(["detect", "--manifest", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) == 1
    (tmp_path / "bad.jsonl").write_text('{"format": "handpose-manifest"}\n')
    assert main(["detect", "--manifest", str(tmp_path / "bad.jsonl"), "--out", str(tmp_path)]) == 1
    assert "FormatError" in capsys.readouterr().err


def test_encode_decode(tmp_path):
    (tmp_path / "j.txt").write_text("3 4\n10 1\n")
    assert main(["encode", "--joints", str(tmp_path / "j.txt"), "--width", "16", "--height", "12",
                 "--out", str(tmp_path / "h.npy")]) == 0
    assert np.load(tmp_path / "h.npy").shape == (2, 12, 16)
    assert main(["decode", "--heatmaps", str(tmp_path / "h.npy"), "--out", str(tmp_path / "o.txt")]) == 0
    assert (tmp_path / "o.txt").read_text() == "3 4\n10 1\n"


def test_train_eval_and_zero_epoch_identity(dataset, tmp_path):
    m = str(dataset / "manifest.jsonl")
    ck = tmp_path / "a.ckpt"
    assert main(["train", "--manifest", m, "--out", str(ck), "--epochs", "1", "--input-res", "16",
                 "--base-channels", "2", "--variant", "multi"]) == 0
    assert main(["train", "--manifest", m, "--out", str(tmp_path / "b.ckpt"), "--epochs", "0",
                 "--params", str(ck)]) == 0
    assert (tmp_path / "b.ckpt").read_bytes() == ck.read_bytes()
    assert main(["eval", "--manifest", m, "--params", str(ck), "--out", str(tmp_path / "ev"), "--split", ""]) == 0
    lines = (tmp_path / "ev" / "pck.csv").read_text().splitlines()
    assert lines[0] == "threshold,fraction" and len(lines) == 22
    assert (tmp_path / "ev" / "pck.svg").read_text().startswith("<svg")
    assert main(["eval", "--manifest", m, "--params", str(ck), "--out", str(tmp_path / "ev"),
                 "--variant", "single-scale"]) == 1
    assert main(["train", "--manifest", m, "--out", str(tmp_path / "c.ckpt"), "--epochs", "0",
                 "--params", str(ck), "--variant", "multi+skeleton"]) == 1


def test_detect_outputs(dataset, tmp_path):
    assert main(["detect", "--manifest", str(dataset / "manifest.jsonl"), "--out", str(tmp_path),
                 "--presence-count", "30", "--skeleton-noise"]) == 0
    assert (tmp_path / "decisions.csv").read_text().count("\n") == 17
    assert (tmp_path / "report.csv").read_text().startswith("metric,value\nmean_iou,")
    assert (tmp_path / "sweep.csv").read_text().startswith("presence_count,auc\n50,")


def test_calibrate_project_sync(tmp_path):
    r = np.random.default_rng(0)
    K = calib.Intrinsics(400, 400, 160, 120)
    e = calib.Extrinsics(calib.rodrigues([0.1, -0.2, 0.05]), np.array([0.1, 0.0, 5.0]))
    p = r.uniform(-1, 1, (10, 3))
    uv = calib.project_points(p, K, e)
    (tmp_path / "k.txt").write_text("400 400 160 120\n")
    np.savetxt(tmp_path / "c.txt", np.c_[p, uv], fmt="%.17g")
    np.savetxt(tmp_path / "p.txt", p, fmt="%.17g")
    assert main(["calibrate", "--correspondences", str(tmp_path / "c.txt"), "--intrinsics", str(tmp_path / "k.txt"),
                 "--out", str(tmp_path / "e.txt")]) == 0
    est = calib.read_extrinsics(tmp_path / "e.txt")
    assert np.linalg.norm(est.t - e.t) < 1e-6
    assert main(["project", "--points", str(tmp_path / "p.txt"), "--intrinsics", str(tmp_path / "k.txt"),
                 "--extrinsics", str(tmp_path / "e.txt"), "--out", str(tmp_path / "uv.txt")]) == 0
    np.testing.assert_allclose(np.loadtxt(tmp_path / "uv.txt"), uv, atol=1e-6)
    (tmp_path / "a.txt").write_text("0.0 a0\n1.0 a1\n")
    (tmp_path / "b.txt").write_text("0.05 b0\n2.0 b1\n")
    assert main(["sync", "--a", str(tmp_path / "a.txt"), "--b", str(tmp_path / "b.txt"), "--tolerance", "0.1",
                 "--out", str(tmp_path / "s.csv")]) == 0
    assert (tmp_path / "s.csv").read_text() == "a_timestamp,a_id,b_timestamp,b_id\n0.0,a0,0.05,b0\n"
    (tmp_path / "a.txt").write_text("zero a0\n")
    assert main(["sync", "--a", str(tmp_path / "a.txt"), "--b", str(tmp_path / "b.txt"), "--tolerance", "0.1",
                 "--out", str(tmp_path / "s.csv")]) == 1


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "handpose.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "gen-synth" in out.stdout
