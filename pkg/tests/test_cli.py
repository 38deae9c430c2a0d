import json
import subprocess
import sys

import pytest

from mmot_ggr.cli import ConfigError, build_config, main, validate_config

BASE = {"system": "system1", "K0": 6, "levels": 1, "n_starts": 3, "seed": 1}


def write_config(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**BASE, **kw}))
    return path


def test_validate_fills_defaults():
    cfg = validate_config({"system": "system2", "K0": 12})
    assert cfg["levels"] == 4 and cfg["n_starts"] == 200 and cfg["seed"] == 0
    assert cfg["sigma"] == 1e-3 and cfg["threads"] == 1 and cfg["overrides"] == {}


def test_validate_reports_every_problem():
    with pytest.raises(ConfigError) as info:
        validate_config({"system": "system1", "K0": 1, "n_starts": 0, "sigma": -1, "colour": "red",
                         "overrides": {"beta": {"x": 1.0}, "gamma": {}}})
    problems = info.value.problems
    assert {"K0", "n_starts", "sigma", "colour", "overrides.beta.x", "overrides.gamma"} <= set(problems)


def test_expression_density_needs_domain_and_n():
    with pytest.raises(ConfigError) as info:
        validate_config({"system": "exp(-x**2)", "K0": 8})
    assert {"domain", "N"} <= set(info.value.problems)
    cfg = validate_config({"system": "exp(-x**2)", "K0": 8, "domain": [[-2, 2]], "N": 3})
    gcfg = build_config(cfg)
    assert gcfg.spec.electron_count == 3 and gcfg.spec.dimension == 1


def test_build_config_applies_overrides():
    cfg = validate_config({**BASE, "overrides": {"sigma": {"1": 1e-5}, "beta": {"0": 3.0}}, "cost": "point"})
    gcfg = build_config(cfg)
    assert gcfg.sigma == {1: 1e-5} and gcfg.beta == {0: 3.0} and gcfg.cost == "point"
    assert gcfg.multistart.n_starts == 3 and gcfg.multistart.seed == 1


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "--out", str(out), "--emit-maps", "--emit-traces"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [lvl["K"] for lvl in report["levels"]] == [6, 12]
    assert report["config"]["system"] == "system1" and "threads" not in report["config"]
    assert "time" not in report["levels"][0]
    for name in ("timings.json", "maps.csv", "trace.csv", "level_0/plan.bin", "level_1/mesh.json"):
        assert (out / name).exists()


def test_command_line_overrides(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["--config", str(cfg), "--out", str(out), "--levels", "0", "--seed", "7"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["levels"]) == 1 and report["config"]["seed"] == 7


def test_determinism_across_runs_and_threads(tmp_path):
    cfg = write_config(tmp_path, n_starts=6)
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        assert main(["--config", str(cfg), "--out", str(tmp_path / name), "--threads", threads]) == 0
        outs.append((tmp_path / name / "report.json").read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_resume_gives_identical_report(tmp_path):
    cfg = write_config(tmp_path, levels=2)
    full = tmp_path / "full"
    assert main(["--config", str(cfg), "--out", str(full)]) == 0
    part = tmp_path / "part"
    assert main(["--config", str(cfg), "--out", str(part), "--levels", "1"]) == 0
    assert main(["--config", str(cfg), "--out", str(part), "--resume"]) == 0
    assert (full / "report.json").read_bytes() == (part / "report.json").read_bytes()


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, K0=0)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "K0" in err["details"]


def test_missing_file_and_bad_json(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["--config", str(bad)]) == 2


def test_missing_out(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg)]) == 2
    assert "out" in json.loads(capsys.readouterr().err)["details"]


def test_bad_expression(tmp_path, capsys):
    cfg = write_config(tmp_path, system="exp(-x**2", domain=[[0, 1]], N=3)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_run_failure_exit_code(tmp_path, capsys, monkeypatch):
    import mmot_ggr.ggr as ggr_mod

    def broken(*args, **kwargs):
        raise RuntimeError("synthetic")

    monkeypatch.setattr(ggr_mod, "multistart_solve", broken)
    cfg = write_config(tmp_path)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "run"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mmot_ggr.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--config" in proc.stdout


def test_shipped_configs_validate():
    from importlib import resources
    names = [p.name for p in resources.files("mmot_ggr").joinpath("configs").iterdir() if p.name.endswith(".json")]
    assert "system1.json" in names
    for name in names:
        raw = json.loads(resources.files("mmot_ggr").joinpath("configs", name).read_text())
        gcfg = build_config(validate_config(raw))
        assert gcfg.spec.name == raw["system"]
