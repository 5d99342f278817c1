import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from uvmsid.cli import EXIT_DATA, EXIT_USAGE, main
from uvmsid.io import (
    read_final_params,
    read_json,
    read_parameter_trace,
    read_telemetry,
    read_truth_sidecar,
    write_final_params,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def make_config(tmp_path, **overrides):
    cfg = {
        "model": str(CONFIGS / "uvms_4dof.yaml"),
        "schedule": str(CONFIGS / "schedule_40s.yaml"),
        "seed": 3,
        "out": str(tmp_path / "out"),
        "dt": 0.02,
        "duration": 3.0,
        "mode": "lumped",
        "estimator": {"q0": 1.0},
    }
    cfg.update(overrides)
    path = tmp_path / "run.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(cfg, f)
    return path


@pytest.fixture(scope="module")
def sim_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = make_config(tmp, duration=4.0)
    rc = main(["simulate", "--config", str(cfg)])
    assert rc == 0
    out = tmp / "out"
    return cfg, out


def test_simulate_record_count_and_sidecar(sim_run):
    _, out = sim_run
    data = read_telemetry(out / "telemetry.jsonl")
    assert len(data) == 200  # 4 s at 50 Hz
    ts, pis = read_truth_sidecar(out / "truth.jsonl")
    assert pis.shape == (200, 75)
    manifest = read_json(out / "manifest.json")
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 3
    assert "config_hash" in manifest


def test_simulate_zero_duration(tmp_path):
    cfg = make_config(tmp_path, duration=0.0)
    rc = main(["simulate", "--config", str(cfg)])
    assert rc == 0
    data = read_telemetry(tmp_path / "out" / "telemetry.jsonl")
    assert len(data) == 0


def test_simulate_byte_identical_for_same_seed(tmp_path):
    cfg = make_config(tmp_path, duration=2.0)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "telemetry.jsonl").read_bytes()
    b = (tmp_path / "b" / "telemetry.jsonl").read_bytes()
    assert a == b
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "c"),
                 "--seed", "4"]) == 0
    c = (tmp_path / "c" / "telemetry.jsonl").read_bytes()
    assert a != c


def test_identify_then_evaluate_round_trip(sim_run, tmp_path):
    cfg, out = sim_run
    rc = main(["identify", "--config", str(cfg), "--data", str(out / "telemetry.jsonl"),
               "--out", str(tmp_path / "id")])
    assert rc == 0
    ts, pis, statuses = read_parameter_trace(tmp_path / "id" / "params_trace.csv")
    assert pis.shape == (200, 75)
    assert all(s == "optimal" for s in statuses)
    summary = read_json(tmp_path / "id" / "summary.json")
    assert summary["median_solve_time_s"] < 0.5
    pi, sigma, n_links = read_final_params(tmp_path / "id" / "final_params.json")
    assert pi.size == 75 and sigma.shape == (75, 75) and n_links == 4

    rc = main(["evaluate", "--config", str(cfg), "--data", str(out / "telemetry.jsonl"),
               "--params", str(tmp_path / "id" / "final_params.json"),
               "--out", str(tmp_path / "ev")])
    assert rc == 0
    metrics = read_json(tmp_path / "ev" / "metrics.json")
    for name in ("surge", "sway", "heave", "roll", "pitch", "yaw",
                 "joint1", "joint2", "joint3", "joint4"):
        assert name in metrics
        assert set(metrics[name]) == {"r2", "slope", "mse", "mae", "rmse"}
    bands = (tmp_path / "ev" / "bands_joint1.csv").read_text().splitlines()
    assert bands[0] == "t,tau_pred,tau_meas,lo,hi"
    assert len(bands) == 201


def test_evaluate_with_truth_params_reaches_r2_one(sim_run, tmp_path):
    cfg, out = sim_run
    from uvmsid.harness import default_model
    from uvmsid.model import parameters_from_model

    truth = parameters_from_model(default_model())
    params_path = tmp_path / "truth_params.json"
    write_final_params(params_path, truth.values, None, 4)
    rc = main(["evaluate", "--config", str(cfg), "--data", str(out / "telemetry.jsonl"),
               "--params", str(params_path), "--out", str(tmp_path / "ev2")])
    assert rc == 0
    metrics = read_json(tmp_path / "ev2" / "metrics.json")
    for entry in metrics.values():
        assert entry["r2"] == pytest.approx(1.0, abs=1e-9)


def test_evaluate_outputs_recompute_identically(sim_run, tmp_path):
    cfg, out = sim_run
    from uvmsid.harness import default_model
    from uvmsid.model import parameters_from_model

    truth = parameters_from_model(default_model())
    params_path = tmp_path / "p.json"
    write_final_params(params_path, truth.values, None, 4)
    for sub in ("r1", "r2"):
        assert main(["evaluate", "--config", str(cfg),
                     "--data", str(out / "telemetry.jsonl"),
                     "--params", str(params_path),
                     "--out", str(tmp_path / sub)]) == 0
    a = (tmp_path / "r1" / "metrics.json").read_bytes()
    b = (tmp_path / "r2" / "metrics.json").read_bytes()
    assert a == b
    pa = (tmp_path / "r1" / "parity.csv").read_bytes()
    pb = (tmp_path / "r2" / "parity.csv").read_bytes()
    assert pa == pb


def test_compare_identical_params_zero_deltas(sim_run, tmp_path):
    cfg, out = sim_run
    rc = main(["identify", "--config", str(cfg), "--data", str(out / "telemetry.jsonl"),
               "--out", str(tmp_path / "idc")])
    assert rc == 0
    rc = main(["compare", "--config", str(cfg), "--data", str(out / "telemetry.jsonl"),
               "--fixed", str(tmp_path / "idc" / "final_params.json"),
               "--trace", str(tmp_path / "idc" / "params_trace.csv"),
               "--out", str(tmp_path / "cmp")])
    assert rc == 0
    comparison = read_json(tmp_path / "cmp" / "comparison.json")
    assert set(comparison) == {"surge", "sway", "heave", "roll", "pitch", "yaw",
                               "joint1", "joint2", "joint3", "joint4"}
    for deltas in comparison.values():
        assert set(deltas) == {"mae_delta", "rmse_delta", "signed_error_delta"}


def test_empty_log_is_data_error(tmp_path):
    cfg = make_config(tmp_path)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    rc = main(["identify", "--config", str(cfg), "--data", str(empty),
               "--out", str(tmp_path / "x")])
    assert rc == EXIT_DATA


def test_schema_violation_reports_line(tmp_path, capsys):
    cfg = make_config(tmp_path)
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"t": 0.0, "eta": [0,0,0,0,0,0]}\n')
    rc = main(["identify", "--config", str(cfg), "--data", str(bad),
               "--out", str(tmp_path / "x")])
    assert rc == EXIT_DATA
    err = capsys.readouterr().err
    assert "line 1" in err


def test_missing_config_is_usage_error(tmp_path):
    rc = main(["simulate", "--config", str(tmp_path / "nope.yaml")])
    assert rc == EXIT_USAGE


def test_trials_fan_out(tmp_path):
    cfg = make_config(tmp_path, duration=1.0)
    rc = main(["simulate", "--config", str(cfg), "--trials", "2"])
    assert rc == 0
    out = tmp_path / "out"
    assert (out / "telemetry_seed0003.jsonl").exists()
    assert (out / "telemetry_seed0004.jsonl").exists()
