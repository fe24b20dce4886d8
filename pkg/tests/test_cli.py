import json
from pathlib import Path

import pytest

from neutronk import models
from neutronk.cli import main
from neutronk.config import dump_config, load_config_file

DEMO_CONFIGS = sorted((Path(__file__).parents[1] / "demos" / "configs").glob("*.toml"))


@pytest.fixture
def slab_cfg(tmp_path):
    p = tmp_path / "slab.toml"
    p.write_text(dump_config(models.standard_slab(), oracle={"n_x": 60, "n_mu": 8}))
    return p


@pytest.fixture
def hetero_cfg(tmp_path):
    p = tmp_path / "het.toml"
    p.write_text(dump_config(models.heterogeneous_box(), run={"population": 300, "inactive": 2,
                                                               "active": 5}))
    return p


def read_result(out):
    return json.loads((out / "results.jsonl").read_text().splitlines()[0])


def test_keff_power_writes_manifest(slab_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["keff", "--config", str(slab_cfg), "--method", "power", "--population", "500",
                 "--inactive", "3", "--active", "10", "--seed", "7", "--out-dir", str(out)])
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 7 and man["command"] == "keff"
    files = {o["file"] for o in man["outputs"]}
    assert {"results.jsonl", "cycles.csv", "phi.csv", "eta.csv"} <= files
    rec = read_result(out)
    assert rec["method"] == "census-ratio" and rec["std_error"] > 0
    assert "+-" in capsys.readouterr().out


def test_keff_superhistory_records_L(slab_cfg, tmp_path):
    out = tmp_path / "sh"
    assert main(["keff", "--config", str(slab_cfg), "--method", "superhistory", "--L", "10",
                 "--population", "300", "--active", "4", "--seed", "1", "--out-dir", str(out)]) == 0
    rec = read_result(out)
    assert rec["method"] == "superhistory" and rec["L"] == 10 and rec["extras"]["L"] == 10


@pytest.mark.parametrize("method, tag", [("log-growth", "log-growth"), ("lambda", "time-lambda"),
                                         ("collision", "collision")])
def test_keff_other_methods(slab_cfg, tmp_path, method, tag):
    out = tmp_path / method
    assert main(["keff", "--config", str(slab_cfg), "--method", method, "--histories", "2000",
                 "--population", "300", "--inactive", "2", "--active", "5", "--nmax-generations", "4",
                 "--t-max", "3", "--seed", "2", "--out-dir", str(out)]) == 0
    assert read_result(out)["method"] == tag


def test_run_section_supplies_defaults(hetero_cfg, tmp_path):
    out = tmp_path / "het"
    assert main(["keff", "--config", str(hetero_cfg), "--seed", "3", "--out-dir", str(out)]) == 0
    rec = read_result(out)
    assert rec["population"] == 300 and rec["n_active"] == 5 and rec["n_inactive"] == 2


def test_same_seed_different_workers_identical(hetero_cfg, tmp_path):
    outs = []
    for w in (1, 3):
        out = tmp_path / f"w{w}"
        assert main(["keff", "--config", str(hetero_cfg), "--seed", "11", "--workers", str(w),
                     "--out-dir", str(out)]) == 0
        outs.append(out)
    for name in ("results.jsonl", "cycles.csv", "phi.csv", "eta.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_seed_from_environment(hetero_cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("KEFF_SEED", "123")
    out = tmp_path / "env"
    assert main(["keff", "--config", str(hetero_cfg), "--out-dir", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 123


def test_rerun_reproduces(hetero_cfg, tmp_path, capsys):
    out = tmp_path / "orig"
    assert main(["keff", "--config", str(hetero_cfg), "--seed", "5", "--out-dir", str(out)]) == 0
    assert main(["rerun", str(out / "manifest.json"), "--workers", "2",
                 "--out-dir", str(tmp_path / "again")]) == 0
    assert "bit for bit" in capsys.readouterr().out


def test_report_writes_png(hetero_cfg, tmp_path):
    out = tmp_path / "rep"
    assert main(["keff", "--config", str(hetero_cfg), "--seed", "5", "--out-dir", str(out)]) == 0
    assert main(["report", "--out-dir", str(out)]) == 0
    assert (out / "convergence.png").stat().st_size > 0
    assert main(["report", "--out-dir", str(tmp_path / "nothing")]) == 2


def test_oracle_and_tune(slab_cfg, tmp_path, capsys):
    out = tmp_path / "or"
    assert main(["oracle", "--config", str(slab_cfg), "--nx", "80", "--nmu", "8", "--out-dir", str(out)]) == 0
    assert "oracle k" in capsys.readouterr().out
    assert (out / "oracle.csv").exists()
    out2 = tmp_path / "tuned"
    assert main(["oracle", "--config", str(slab_cfg), "--tune", "1.0", "--out-dir", str(out2)]) == 0
    rec = read_result(out2)
    assert abs(rec["value"] - 1.0) <= 1e-3
    assert load_config_file(out2 / "tuned.toml").oracle["n_x"] == 60


def test_oracle_missing_config(tmp_path, capsys):
    assert main(["oracle", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "error" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    good = tmp_path / "good.toml"
    good.write_text(dump_config(models.homogeneous_box()))
    assert main(["validate", "--config", str(good), "--require", "h3star,h4"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "H1 ✓ H2 ✓ H3* ✓ H4 ✓ (N_max=3)"
    nofis = tmp_path / "nofis.toml"
    nofis.write_text(dump_config(models.homogeneous_box(sigma_f=0.0)))
    assert main(["validate", "--config", str(nofis), "--require", "h3star"]) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text(good.read_text() + "\n[extra]\nkey = 1\n")
    assert main(["validate", "--config", str(bad)]) == 2
    assert main(["validate", "--config", str(good), "--require", "h9"]) == 2


def test_assumption_failure_exit_code(tmp_path):
    p = tmp_path / "h4.toml"
    text = dump_config(models.homogeneous_box()).replace("n_max = 3", "n_max = 1")
    p.write_text(text)
    assert main(["validate", "--config", str(p)]) == 1


def test_usage_errors():
    assert main([]) == 2
    assert main(["keff"]) == 2
    assert main(["keff", "--config", "x.toml", "--method", "bogus"]) == 2


@pytest.mark.parametrize("path", DEMO_CONFIGS, ids=lambda p: p.name)
def test_demo_configs_load(path):
    assert load_config_file(path).model.report.h4
