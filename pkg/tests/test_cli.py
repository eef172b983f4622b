import json

import pytest

from maxboltz.cli import EXIT_CONFIG, EXIT_OK, config_hash, main, run

MIN_CONFIG = {"seed": 7, "method": "wild", "kernel": {"family": "constant"}, "datum": {"type": "gaussian"},
              "times": [1.0], "samples": 2000}


def _read(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_minimal_config_writes_trajectory_and_moments(tmp_path):
    assert run(MIN_CONFIG, tmp_path) == EXIT_OK
    assert (tmp_path / "ensemble_000.csv").exists()
    assert (tmp_path / "moments.csv").read_text().startswith("t,mean_x")
    report = json.loads((tmp_path / "trajectory.json").read_text())
    assert report["seed"] == 7 and report["config_hash"] == config_hash(report["config"])


def test_very_weak_cutoff_config_exits_2(tmp_path, capsys):
    cfg = dict(MIN_CONFIG, kernel={"family": "powerlaw", "alpha": 3})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "very weak cutoff" in capsys.readouterr().err


def test_schema_violation_exits_2(tmp_path):
    cfg = {k: v for k, v in MIN_CONFIG.items() if k != "seed"}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    path.write_text(json.dumps(dict(MIN_CONFIG, method="dsmc")))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_same_seed_byte_identical(tmp_path):
    args = ["simulate", "--t", "0,0.5", "--n-samples", "500", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert _read(tmp_path / "a") == _read(tmp_path / "b")
    assert main(["simulate", "--t", "0,0.5", "--n-samples", "500", "--seed", "4", "--out", str(tmp_path / "c")]) == 0
    assert _read(tmp_path / "a")["ensemble_001.csv"] != _read(tmp_path / "c")["ensemble_001.csv"]


def test_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXBOLTZ_SEED", "3")
    assert main(["simulate", "--t", "0.5", "--n-samples", "300", "--out", str(tmp_path / "a")]) == EXIT_OK
    monkeypatch.delenv("MAXBOLTZ_SEED")
    assert main(["simulate", "--t", "0.5", "--n-samples", "300", "--seed", "3", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/ensemble_000.csv").read_bytes() == (tmp_path / "b/ensemble_000.csv").read_bytes()


def test_singular_kernel_needs_level(tmp_path):
    assert main(["simulate", "--t", "1", "--kernel", "powerlaw:2.5", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_trajectory_pipeline(tmp_path):
    traj = tmp_path / "traj"
    assert main(["simulate", "--method", "kac", "--kernel", "powerlaw:2.5", "--level", "16", "--t", "0,0.1,0.2",
                 "--n-samples", "4000", "--out", str(traj)]) == EXIT_OK
    assert main(["verify-weakform", "--traj", str(traj), "--kernel", "powerlaw:2.5", "--level", "16",
                 "--psi", "cos:1,0,0", "--pairs", "1000", "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "residuals.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("psi,t,residual")
    assert main(["gfunction", "--init", "sphere", "--out", str(tmp_path / "g")]) == EXIT_OK
    sph = tmp_path / "sph"
    assert main(["simulate", "--init", "sphere", "--t", "0,1", "--n-samples", "1000", "--out", str(sph)]) == 0
    assert main(["gfunction", "--certify", str(sph), "--g", str(tmp_path / "g/g.json"), "--out", str(sph)]) == 0


@pytest.mark.parametrize("args,files", [
    (["mckean", "--t", "1", "--rho", "0.5,1", "--u", "0,0,1;1,0,0", "--samples", "2000"], ["mckean.csv"]),
    (["mckean", "--t", "1", "--report", "second-moment", "--samples", "2000"], ["mckean_second_moment.csv"]),
    (["spectral", "--t-end", "0.5", "--nodes", "64"], ["spectral.csv", "spectral.json"]),
    (["arkeryd", "--levels", "4,16,64", "--t", "0.25", "--samples", "4000", "--engine", "kac"],
     ["arkeryd.json", "certificates.csv", "trend.csv"]),
    (["morimoto", "--mode", "diverge", "--eps-list", "1e-2,1e-3"], ["morimoto.csv"]),
    (["morimoto", "--mode", "bound", "--trials", "20"], ["morimoto.csv"]),
    (["verify-bounds", "--grid", "100", "--points", "20"], ["bounds.csv"]),
    (["suite", "--only", "4"], ["suite.csv", "suite.json"]),
])
def test_subcommands(tmp_path, args, files):
    assert main(args + ["--out", str(tmp_path)]) == EXIT_OK
    for f in files:
        assert (tmp_path / f).stat().st_size > 0


def test_suite_rejects_unknown_check(tmp_path):
    assert main(["suite", "--only", "99", "--out", str(tmp_path)]) == EXIT_CONFIG
