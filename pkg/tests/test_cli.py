import json
import subprocess
import sys

import pytest

from gicar_dpp.cli import main


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    summary = json.loads(captured.out) if captured.out.strip() else None
    return code, summary, captured.err


def test_kernel_trace_and_files(tmp_path, capsys):
    code, summary, _ = run(["kernel", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert summary["trace"] == pytest.approx(2.0, abs=1e-8)
    assert summary["projector_residual"] <= 1e-10
    assert {p.name for p in tmp_path.iterdir()} == {"kernel.csv", "correlations.csv", "summary.json"}
    lines = (tmp_path / "kernel.csv").read_text().splitlines()
    assert lines[0] == "# schema_version=1" and lines[2] == "x,y,K"
    report = json.loads((tmp_path / "summary.json").read_text())
    assert report["schema_version"] == 1 and report["config"]["seed"] == 0


def test_kernel_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["kernel", "--set", "family=\"meixner\"", "--set", 'params={"beta": 1.5, "xi": 0.3}', "--seed", "4"]
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b)], capsys)[0] == 0
    for name in ("kernel.csv", "correlations.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_kernel_bad_pair_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"family": "askey_lesky", "params": {"u": 1.0, "u'": 1.0, "w": 3.5, "w'": 3.6}, "window": {"lo": -20, "hi": 20}}))
    code, _, err = run(["kernel", "--config", str(cfg)], capsys)
    assert code == 2 and "error" in err


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 3, "seed": 9}))
    code, summary, _ = run(["kernel", "--config", str(cfg), "--set", "N=1", "--out", str(tmp_path / "o")], capsys)
    assert code == 0 and summary["trace"] == pytest.approx(1.0, abs=1e-8)
    report = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert report["config"]["N"] == 1 and report["config"]["seed"] == 9
    run(["kernel", "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "p")], capsys)
    assert json.loads((tmp_path / "p" / "summary.json").read_text())["config"]["seed"] == 2


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("[1, 2]")
    assert run(["kernel", "--config", str(cfg)], capsys)[0] == 2
    assert run(["kernel", "--config", str(tmp_path / "missing.json")], capsys)[0] == 2
    assert run(["kernel", "--set", "N=\"two\""], capsys)[0] == 2
    assert run(["kernel", "--seed", "-1"], capsys)[0] == 2


def test_evolve_identity(capsys):
    code, summary, _ = run(["evolve", "--set", "t=0"], capsys)
    assert code == 0
    assert summary["max_offdiag"] == 0.0 and summary["row_sum_deviation"] <= 1e-12


def test_evolve_report(tmp_path, capsys):
    code, summary, _ = run(["evolve", "--set", "t=0.5", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert summary["min_entry"] >= -1e-12 and summary["row_sum_deviation"] <= 1e-8
    assert summary["max_eigen_residual"] <= 1e-7
    header = (tmp_path / "transition.csv").read_text().splitlines()[2]
    assert header == "source,target,P"


def test_evolve_negative_time(capsys):
    assert run(["evolve", "--set", "t=-1"], capsys)[0] == 2


def test_evolve_truncation_exit_3(capsys):
    code, _, err = run(["evolve", "--set", 'params={"mu": 3.0}', "--set", 'window={"size": 8}', "--set", "t=1"], capsys)
    assert code == 3 and "window" in err


def test_evolve_monte_carlo(tmp_path, capsys):
    args = ["evolve", "--set", "t=0.3", "--set", "start=[0, 1]", "--mc", "100000", "--seed", "5", "--out", str(tmp_path)]
    code, summary, _ = run(args, capsys)
    assert code == 0
    mc = json.loads((tmp_path / "monte_carlo.json").read_text())
    assert all("z" in e for e in mc["entries"])
    assert summary["mc_compared"] >= 5 and summary["mc_max_abs_z"] <= 4.0


def test_verify_car_default(tmp_path, capsys):
    code, summary, _ = run(["verify-car", "--out", str(tmp_path)], capsys)
    assert code == 0 and summary["passed"]
    assert max(v for k, v in summary["residuals"].items()) <= 1e-11
    again = run(["verify-car"], capsys)[1]
    assert again["residuals"] == summary["residuals"]


def test_verify_car_ceiling(capsys):
    assert run(["verify-car", "--set", "modes=9"], capsys)[0] == 2


def test_verify_car_failure_exit_1(capsys):
    code, summary, _ = run(["verify-car", "--set", "tolerance=1e-30", "--set", "samples=5"], capsys)
    assert code == 1 and summary["status"] == "fail"


def test_zmeasure_command(tmp_path, capsys):
    code, summary, _ = run(["zmeasure", "--set", "trials=200", "--set", "t=0", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert summary["partial_mass"] >= 1 - 1e-6
    assert summary["q_eigen_residual"] <= 1e-8
    assert summary["q_row_sum_deviation"] <= 1e-12
    assert summary["kernel_max_difference"] <= summary["tail_bound"] + 1e-10
    assert summary["jump"]["point_mass"]
    assert (tmp_path / "mass.csv").exists() and (tmp_path / "jump_law.csv").exists()


def test_zmeasure_bad_params(capsys):
    assert run(["zmeasure", "--set", "z=1.5", "--set", "zp=2.5"], capsys)[0] == 2


def test_sample_json(tmp_path, capsys):
    code, _, _ = run(["sample", "--format", "json", "--seed", "3", "--out", str(tmp_path)], capsys)
    assert code == 0
    body = json.loads((tmp_path / "samples.json").read_text())
    assert body["columns"] == ["draw", "points"] and len(body["rows"]) == 10
    assert all(len(r[1]) == 2 for r in body["rows"])


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("DPP_THREADS", "lots")
    code = main(["evolve", "--set", "t=0.1", "--mc", "10"])
    capsys.readouterr()
    assert code == 2


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "gicar_dpp", "kernel", "--set", "N=1"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["status"] == "pass"
