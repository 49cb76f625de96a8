import csv
import json

import numpy as np
import pytest

from maqm.cli import main


def test_herald_stats_cli(tmp_path, capsys):
    assert main(["herald-stats", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["g_c"] == pytest.approx(25, abs=1e-3)
    assert (tmp_path / "herald.csv").exists()
    assert (tmp_path / "metadata.json").exists()
    assert json.loads(capsys.readouterr().out)["kind"] == "herald-stats"


def test_seed_and_shots_flags(tmp_path):
    assert main(["repeater", "--shots", "50", "--seed", "0x10", "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "summary.json").read_text())
    assert s["shots"] == 50 and s["seed"] == 16
    rows = list(csv.DictReader(open(tmp_path / "shots.csv", newline="")))
    assert len(rows) == 50 and all(r["seed"] == "16" for r in rows)
    events = json.loads((tmp_path / "events.json").read_text())
    assert set(events[0]) == {"shot", "time", "kind", "cells", "outcome"}


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "stirap", "pulse": {"bogus": 1}}))
    assert main(["stirap", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    cfg.write_text("{not json")
    assert main(["stirap", "--config", str(cfg)]) == 2
    cfg.write_text(json.dumps({"kind": "raqm"}))
    assert main(["stirap", "--config", str(cfg)]) == 2
    assert main(["stirap", "--config", str(tmp_path / "missing.json")]) == 2
    assert "config error" in capsys.readouterr().err


def test_bad_seed_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["stirap", "--seed", "-3"])
    assert e.value.code == 2


def test_runtime_error_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "repeater", "node": {"p_S": 1e-7, "max_trials": 2}}))
    assert main(["repeater", "--config", str(cfg), "--shots", "5", "--out", str(tmp_path / "o")]) == 3
    cfg.write_text(json.dumps({"kind": "herald-stats", "source": {"target_g_c": 1.5}}))
    assert main(["herald-stats", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_sweep_cli(tmp_path):
    rc = main(["sweep", "--kind", "herald-stats", "--param", "source.target_g_c", "--values", "10,25",
               "--out", str(tmp_path)])
    assert rc == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv", newline="")))
    assert [float(r["fidelity_bound_target"]) for r in rows] == pytest.approx([0.8636, 0.9423], abs=1e-4)
    assert main(["sweep", "--kind", "stirap", "--param", "pulse.sigma", "--values", "",
                 "--out", str(tmp_path / "e")]) == 0
    assert main(["sweep", "--kind", "stirap", "--param", "nope.x", "--values", "1"]) == 2


def test_fit_cli(tmp_path, capsys):
    t = np.linspace(0, 2e-3, 8)
    y = 0.1 * np.exp(-t / 1e-3)
    pts = tmp_path / "p.csv"
    with open(pts, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value", "sigma"])
        w.writerows(zip(t, y, 0.01 * y))
    assert main(["fit", str(pts), "--out", str(tmp_path / "fit.json")]) == 0
    r = json.loads((tmp_path / "fit.json").read_text())
    assert r["tau"] == pytest.approx(1e-3, rel=1e-6)
    capsys.readouterr()
    pts.write_text("t,value,sigma\n0,0.1,0.01\n")
    assert main(["fit", str(pts)]) == 3
    pts.write_text("a,b\n1,2\n")
    assert main(["fit", str(pts)]) == 2


def test_json_format_flag(tmp_path):
    assert main(["stirap", "--format", "json", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trajectory.json").exists() and not (tmp_path / "trajectory.csv").exists()


def test_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MAQM_WORKERS", "many")
    assert main(["repeater", "--shots", "10", "--out", str(tmp_path)]) == 2
