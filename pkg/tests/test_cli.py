import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from bifid.cli import main
from bifid.dataset import Dataset, load_csv, save_csv
from bifid.synthetic import canonical_clusters


def _digest(d: Path) -> dict:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("inputs")
    p = canonical_clusters()
    save_csv(p.low, d / "low.csv")
    save_csv(p.high, d / "high.csv")
    save_csv(p.low, d / "same.csv")
    return d


def _pipeline(inputs, out, *extra):
    base = ["--out", str(out)]
    assert main(["graph", "--low", str(inputs / "low.csv"), "--self-tuned", "7", "-N", "3", "-K", "9", *base]) == 0
    assert main(["select", "-N", "3", *base]) == 0
    assert main(["fuse", "--high", str(inputs / "high.csv"), "--omega", "1e-8", "-K", "9", *base, *extra]) == 0


def test_graph_zero_mode(inputs, tmp_path):
    assert main(["graph", "--low", str(inputs / "low.csv"), "--self-tuned", "7", "-N", "3", "--out", str(tmp_path)]) == 0
    g = json.loads((tmp_path / "graph.json").read_text())
    assert abs(g["lambda_1"]) <= 1e-8 and g["n_modes"] == 9


def test_missing_file(tmp_path, capsys):
    assert main(["graph", "--low", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert "file not found" in capsys.readouterr().err


def test_select_needs_positive_n(inputs, tmp_path, capsys):
    main(["graph", "--low", str(inputs / "low.csv"), "--self-tuned", "7", "-N", "3", "--out", str(tmp_path)])
    assert main(["select", "-N", "0", "--out", str(tmp_path)]) == 2
    assert main(["select", "-N", "50", "--out", str(tmp_path)]) == 2
    assert "bifid:" in capsys.readouterr().err


def test_pipeline_and_determinism(inputs, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(inputs, a)
    _pipeline(inputs, b)
    assert _digest(a) == _digest(b)
    acquire = (a / "acquire.csv").read_text().splitlines()
    assert len(acquire) == 4
    fuse = json.loads((a / "fuse.json").read_text())
    assert fuse["converged"] and fuse["K"] == 9


def test_report_after_pipeline(inputs, tmp_path):
    _pipeline(inputs, tmp_path)
    rc = main([
        "report", "--approx", str(tmp_path / "bi.csv"), "--truth", str(inputs / "high.csv"),
        "--low", str(inputs / "low.csv"), "--selection", str(tmp_path), "--out", str(tmp_path / "r"),
    ])
    assert rc == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["n_validation"] == 297
    assert all(c["factor"] >= 10 for c in rep["components"])
    bi, low, high = (load_csv(f).points for f in (tmp_path / "bi.csv", inputs / "low.csv", inputs / "high.csv"))
    ratio = np.linalg.norm(bi - high, axis=1).mean() / np.linalg.norm(low - high, axis=1).mean()
    assert 1 / ratio >= 20


def test_identity_report(inputs, tmp_path):
    rc = main(["report", "--approx", str(inputs / "high.csv"), "--truth", str(inputs / "high.csv"), "--out", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert all(c["bi"] == 0.0 for c in rep["components"])


def test_report_dimension_mismatch(inputs, tmp_path):
    one = Dataset(np.ones((300, 1)))
    save_csv(one, tmp_path / "one.csv")
    rc = main(["report", "--approx", str(tmp_path / "one.csv"), "--truth", str(inputs / "high.csv"), "--out", str(tmp_path)])
    assert rc == 3


def test_displacement_free_fuse(inputs, tmp_path):
    out = tmp_path / "o"
    main(["graph", "--low", str(inputs / "low.csv"), "--self-tuned", "7", "-N", "3", "--out", str(out)])
    main(["select", "-N", "3", "--out", str(out)])
    assert main(["fuse", "--high", str(inputs / "same.csv"), "--out", str(out)]) == 0
    bi = load_csv(out / "bi.csv")
    low = load_csv(inputs / "low.csv")
    assert np.allclose(bi.points, low.points, rtol=0, atol=1e-10)


def test_fuse_row_mismatch(inputs, tmp_path):
    out = tmp_path / "o"
    main(["graph", "--low", str(inputs / "low.csv"), "--self-tuned", "7", "-N", "3", "--out", str(out)])
    main(["select", "-N", "3", "--out", str(out)])
    short = Dataset(np.ones((5, 2)))
    save_csv(short, tmp_path / "short.csv")
    assert main(["fuse", "--high", str(tmp_path / "short.csv"), "--out", str(out)]) == 3


def test_lcurve_interior(inputs, tmp_path):
    _pipeline(inputs, tmp_path)
    assert main(["lcurve", "--high", str(inputs / "high.csv"), "--lcurve", "-4", "0", "-K", "9", "--out", str(tmp_path)]) == 0
    d = json.loads((tmp_path / "lcurve.json").read_text())
    assert 0 < d["elbow_index"] < d["n_points"] - 1
    assert 1e-4 < d["omega_star"] < 1.0


def test_config_file(inputs, tmp_path):
    cfg = {"low": str(inputs / "low.csv"), "out": str(tmp_path / "c"), "kernel": {"mode": "self_tuned"}, "n_select": 3}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    assert main(["graph", "--config", str(tmp_path / "cfg.json")]) == 0
    (tmp_path / "bad.json").write_text(json.dumps({"bogus": 1}))
    assert main(["graph", "--config", str(tmp_path / "bad.json"), "--low", str(inputs / "low.csv"), "--out", str(tmp_path)]) == 2


def test_unknown_demo(tmp_path):
    assert main(["demo", "nope", "--out", str(tmp_path)]) == 2


def test_demo_canonical(tmp_path):
    assert main(["demo", "canonical", "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["distance_ratio"] <= 0.05
    for name in ("eigenfunctions.csv", "influence.csv", "low.csv", "high.csv", "bi.csv", "report.md", "trace.csv"):
        assert (tmp_path / name).exists()


def test_study_small(inputs, tmp_path):
    rc = main([
        "study", "--low", str(inputs / "low.csv"), "--high", str(inputs / "high.csv"), "--self-tuned", "7",
        "-N", "3", "-K", "9", "--omega", "1e-8", "--trials", "3", "--out", str(tmp_path),
    ])
    assert rc == 0
    d = json.loads((tmp_path / "study.json").read_text())
    assert d["n_trials"] == 3 and len(d["M"]) == 2


def test_console_script_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "bifid.cli", "demo", "nope", "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 2 and "unknown demo" in r.stderr
