import json
import subprocess
import sys

import pytest

from switchcert import cli
from switchcert.config import bundled_config


def run(*args):
    return subprocess.run([sys.executable, "-m", "switchcert.cli", *args], capture_output=True, text=True)


def write_cfg(tmp_path, cfg, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


class TestCheck:
    def test_sec4(self, tmp_path, capsys):
        assert cli.main(["check", "--config", "sec4", "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "certificate.json").read_text())
        assert rep["lhs"] == pytest.approx(-0.0069, abs=5e-4)
        assert set(rep) == {"lhs", "feasible", "terms", "delta_min", "Delta_max"}

    def test_ex33(self, capsys):
        assert cli.main(["check", "--config", "ex33"]) == 0

    def test_raised_rho(self, tmp_path, capsys):
        d = bundled_config("sec4").to_dict()
        d["budget"]["rho_U"]["3"] = 0.4
        assert cli.main(["check", "--config", write_cfg(tmp_path, d)]) == 1

    def test_parse_error(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{")
        assert cli.main(["check", "--config", str(p)]) == 2
        assert cli.main(["check", "--config", str(tmp_path / "missing.json")]) == 2

    def test_usage_error(self):
        assert run("check").returncode == 2


class TestFindRho:
    def test_floors(self, tmp_path, capsys):
        fl = tmp_path / "f.json"
        fl.write_text(json.dumps({"rho_U": {"3": 0.1, "4": 0.1}, "rho_plus": {"4->1": 0.1}}))
        assert cli.main(["find-rho", "--config", "sec4", "--floors", str(fl), "--out", str(tmp_path)]) == 0
        assert cli.main(["check", "--config", str(tmp_path / "config.json")]) == 0

    def test_no_floors(self, tmp_path, capsys):
        assert cli.main(["find-rho", "--config", "sec4", "--out", str(tmp_path)]) == 0
        b = json.loads((tmp_path / "config.json").read_text())["budget"]
        assert all(v == 0 for v in b["rho_U"].values())

    def test_infeasible(self, tmp_path, capsys):
        fl = tmp_path / "f.json"
        fl.write_text(json.dumps({"rho_U": {"3": 0.45, "4": 0.45}}))
        assert cli.main(["find-rho", "--config", "sec4", "--floors", str(fl)]) == 1
        assert "smallest attainable lhs" in capsys.readouterr().err


class TestGen:
    def test_sec4(self, tmp_path, capsys):
        assert cli.main(["gen", "--config", "sec4", "--n", "10", "--out", str(tmp_path)]) == 0
        reports = sorted(tmp_path.glob("*.membership.json"))
        assert len(reports) == 10
        assert all(json.loads(r.read_text())["in_class"] for r in reports)

    def test_zero(self, tmp_path, capsys):
        assert cli.main(["gen", "--config", "sec4", "--n", "0", "--out", str(tmp_path)]) == 0
        assert not list(tmp_path.iterdir())

    def test_deterministic(self, tmp_path, capsys):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert cli.main(["gen", "--config", "ex32", "--n", "100", "--seed", "42", "--out", str(d)]) == 0
        for f in a.iterdir():
            assert f.read_bytes() == (b / f.name).read_bytes()

    def test_failure(self, tmp_path, capsys):
        d = bundled_config("ex32").to_dict()
        d["generator"]["horizon"] = 25.0
        d["generator"]["max_restarts"] = 2
        assert cli.main(["gen", "--config", write_cfg(tmp_path, d), "--n", "1"]) == 1


class TestSimulate:
    def test_pipeline(self, tmp_path, capsys):
        sig = tmp_path / "sig"
        assert cli.main(["gen", "--config", "sec4", "--n", "2", "--out", str(sig)]) == 0
        out = tmp_path / "sim"
        assert cli.main(["simulate", "--config", "sec4", "--signals", str(sig), "--out", str(out)]) == 0
        summary = json.loads((out / "simulation.json").read_text())
        assert len(summary["runs"]) == 20 and summary["all_dominated"]
        assert summary["max_norm"] < 50
        norms = (out / "norms.csv").read_text().splitlines()
        assert norms[0] == "run,t,norm"
        assert [float(x) for x in norms[1].split(",")[1:]]
        env = (out / "envelope_s000_x00.csv").read_text().splitlines()
        assert all(line.endswith(",1") for line in env[1:])

    def test_deterministic(self, tmp_path, capsys):
        for d in ("a", "b"):
            assert cli.main(["simulate", "--config", "sec4", "--n", "1", "--seed", "3", "--out", str(tmp_path / d)]) == 0
        for f in (tmp_path / "a").iterdir():
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_zero_state(self, tmp_path, capsys):
        d = bundled_config("sec4").to_dict()
        d["simulation"]["x0_box"] = [0.0, 0.0]
        d["simulation"]["input_range"] = [0.0, 0.0]
        d["simulation"]["n_initial"] = 1
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", write_cfg(tmp_path, d), "--n", "1", "--out", str(out)]) == 0
        rows = (out / "traj_s000_x00.csv").read_text().splitlines()[1:]
        assert all(r.split(",")[1:4] == ["0.0", "0.0", "0.0"] for r in rows)

    def test_divergence_exit(self, tmp_path, capsys):
        d = bundled_config("sec4").to_dict()
        d["simulation"]["family"]["a"] = {k: [9.0, 9.0] for k in "1234"}
        assert cli.main(["simulate", "--config", write_cfg(tmp_path, d), "--n", "1"]) == 1
        assert "diverged" in capsys.readouterr().err

    def test_calibrates_without_gamma(self, tmp_path, capsys):
        d = bundled_config("sec4").to_dict()
        del d["gamma"]
        d["simulation"]["n_initial"] = 1
        out = tmp_path / "o"
        assert cli.main(["simulate", "--config", write_cfg(tmp_path, d), "--n", "1", "--out", str(out)]) == 0
        assert json.loads((out / "simulation.json").read_text())["gains"]["k2"] > 0


def test_reproduce_paper(tmp_path):
    r = run("reproduce-paper", "--out", str(tmp_path))
    assert r.returncode == 0, r.stdout + r.stderr
    assert "FAIL" not in r.stdout and r.stdout.count("PASS") == 5


def test_threads_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SWITCHCERT_THREADS", "1")
    assert cli._workers() == 1
    monkeypatch.setenv("SWITCHCERT_THREADS", "oops")
    assert cli._workers() >= 1
