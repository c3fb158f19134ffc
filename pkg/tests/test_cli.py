import csv
import json

import numpy as np
import pytest

from gaitforge import cli, config, fixtures
from gaitforge.errors import ConfigError
from gaitforge.synth_model import generate_kinematics


def write_config(path, **sections):
    doc = {"seed": 7, **sections}
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Ingest and fit the bundled fixture once for the module."""
    d = tmp_path_factory.mktemp("cli")
    src = d / "gait.csv"
    src.write_bytes(fixtures.fixture_bytes())
    assert cli.main(["ingest", "--input", str(src), "--out", str(d / "profiles.json")]) == 0
    assert cli.main(["fit", "--profiles", str(d / "profiles.json"), "--out", str(d / "model.json")]) == 0
    cfg = write_config(d / "cfg.json", eval={"speeds": [1.0, 1.5], "episodes_per_speed": 1, "max_steps": 300},
                       chirp={"episodes": 1},
                       trpo={"epochs": 1, "steps_per_epoch": 100})
    return d, cfg


# ---- config

def test_config_defaults_and_override():
    cfg = config.validate({"seed": 3})
    assert cfg["seed"] == 3 and cfg["trpo"]["profile"] == "desk"
    assert config.validate({"seed": 3}, seed_override="11")["seed"] == 11
    tc = config.train_config(cfg)
    assert (tc.epochs, tc.steps_per_epoch, tc.period) == (200, 2000, 40)


@pytest.mark.parametrize("doc", [
    {},
    {"seed": -1},
    {"seed": 1.5},
    {"seed": 1, "trpo": {"epochz": 3}},
    {"seed": 1, "optics": {}},
    {"seed": 1, "vail": {"lam": 2.0}},
    {"seed": 1, "vail": {"lam": "half"}},
    {"seed": 1, "curriculum": {"kind": "spiral"}},
    {"seed": 1, "chirp": {"amplitude": 1.0}},
])
def test_config_rejects(doc):
    with pytest.raises(ConfigError):
        config.validate(doc)


def test_config_env_seed(tmp_path):
    p = write_config(tmp_path / "c.json")
    assert config.load(p, env={config.SEED_ENV: "42"})["seed"] == 42
    with pytest.raises(ConfigError):
        config.load(p, env={config.SEED_ENV: "x"})
    with pytest.raises(ConfigError):
        config.load(tmp_path / "missing.json", env={})


# ---- commands

def test_ingest_rerun_byte_identical(pipeline, tmp_path):
    d, _ = pipeline
    out = tmp_path / "again.json"
    assert cli.main(["ingest", "--input", str(d / "gait.csv"), "--out", str(out)]) == 0
    assert out.read_bytes() == (d / "profiles.json").read_bytes()
    manifest = json.loads((tmp_path / "again.json.manifest.json").read_text())
    assert manifest["command"] == "ingest"


def test_exit_codes(pipeline, tmp_path):
    assert cli.main(["ingest", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "x.json")]) == 2
    assert cli.main(["bogus"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,gait,file\n1,2,3,4\n")
    assert cli.main(["ingest", "--input", str(bad), "--out", str(tmp_path / "x.json")]) == 3


def test_fit_writes_quality(pipeline):
    d, _ = pipeline
    q = json.loads((d / "model_fit_quality.json").read_text())
    assert q["r2"] > 0.9


def test_synth_matches_library(pipeline, tmp_path, base):
    d, _ = pipeline
    assert cli.main(["synth", "--model", str(d / "model.json"), "--speed", "1.25", "--speed", "0.9",
                     "--out", str(tmp_path)]) == 0
    from gaitforge.synth_model import SpeedLinearModel

    model = SpeedLinearModel.from_json((d / "model.json").read_text())
    rows = np.loadtxt(tmp_path / "cycle_1.25.csv", delimiter=",", skiprows=1)
    expected = np.degrees(generate_kinematics(model, base, 1.25).angles)
    np.testing.assert_allclose(rows[:, 1:4].T, expected, atol=1e-9)
    assert (tmp_path / "cycle_0.90.csv").is_file()


def test_train_eval_report(pipeline, tmp_path):
    d, cfg = pipeline
    model = str(d / "model.json")
    assert cli.main(["train", "--config", str(cfg), "--model", model, "--out", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "train_log.csv").is_file()
    assert cli.main(["eval", "--config", str(cfg), "--model", model,
                     "--checkpoint", str(tmp_path / "run" / "checkpoint"), "--out", str(tmp_path / "ev_pol")]) == 0
    assert cli.main(["eval", "--config", str(cfg), "--model", model, "--oracle",
                     "--out", str(tmp_path / "ev_oracle"), "--plots"]) == 0
    assert (tmp_path / "ev_oracle" / "plots" / "speed_tracking.svg").is_file()

    out = tmp_path / "report.csv"
    assert cli.main(["report", "--runs", str(tmp_path / "ev_pol"), str(tmp_path / "ev_oracle"),
                     "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    oracle = json.loads((tmp_path / "ev_oracle" / "metrics.json").read_text())
    by_run = {r["run"]: r for r in rows}
    assert float(by_run["ev_oracle"]["speed_rmse"]) == oracle["speed"]["rmse"]
    assert by_run["ev_oracle"]["best"] == "*"
    assert by_run["ev_oracle"]["seed"] == "7"

    assert cli.main(["chirp", "--config", str(cfg), "--model", model, "--oracle",
                     "--out", str(tmp_path / "ch")]) == 0
    assert cli.main(["report", "--runs", str(tmp_path / "ev_oracle"), str(tmp_path / "ch"),
                     "--out", str(tmp_path / "mixed.csv")]) == 2
