"""Batch command-line entry points: simulate, identify, evaluate, compare.

Every command reads a run configuration, applies flag overrides, writes its
outputs plus a manifest into the output directory, and is deterministic for a
fixed (config, seed). Exit codes: 0 success, 1 usage or configuration error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dynamics import DynamicsError
from .estimator import ConfigError, EstimatorConfig
from .harness import (
    CorruptionSpec,
    TruthEvent,
    channel_names,
    compare_models,
    compute_metrics,
    default_schedule,
    default_stage_schedule,
    evaluate_parameters,
    predict_measurements,
    perturb_parameters,
    run_identification,
    run_trials,
    synthesize_dataset,
)
from .io import (
    SchemaError,
    read_final_params,
    read_json,
    read_parameter_trace,
    read_schedule,
    read_telemetry,
    write_final_params,
    write_json,
    write_parameter_trace,
    write_solve_time_trace,
    write_telemetry,
    write_truth_sidecar,
    write_uncertainty_trace,
)
from .model import ParameterVector, load_model, parameters_from_model
from .uncertainty import estimate_noise_covariance, propagate_torque_cov

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


@dataclass
class RunConfig:
    model_path: str
    schedule_path: str | None = None
    seed: int = 0
    out: str = "runs/out"
    dt: float = 0.02
    duration: float = 40.0
    mode: str = "lumped"
    corruption: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    initial_perturbation: float = 0.5
    events: list = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path) as f:
            doc = yaml.safe_load(f) or {}
        if "model" not in doc:
            raise ConfigError("run config needs a 'model' path")
        base = Path(path).parent
        model_path = str((base / doc["model"]).resolve())
        schedule_path = doc.get("schedule")
        if schedule_path is not None:
            schedule_path = str((base / schedule_path).resolve())
        return cls(
            model_path=model_path,
            schedule_path=schedule_path,
            seed=int(doc.get("seed", 0)),
            out=str(doc.get("out", "runs/out")),
            dt=float(doc.get("dt", 0.02)),
            duration=float(doc.get("duration", 40.0)),
            mode=str(doc.get("mode", "lumped")),
            corruption=doc.get("corruption") or {},
            estimator=doc.get("estimator") or {},
            initial_perturbation=float(doc.get("initial_perturbation", 0.5)),
            events=doc.get("events") or [],
        )

    def as_dict(self) -> dict:
        return {
            "model_path": self.model_path,
            "schedule_path": self.schedule_path,
            "seed": self.seed,
            "out": self.out,
            "dt": self.dt,
            "duration": self.duration,
            "mode": self.mode,
            "corruption": self.corruption,
            "estimator": self.estimator,
            "initial_perturbation": self.initial_perturbation,
            "events": self.events,
        }


def _config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.as_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_manifest(out: Path, command: str, cfg: RunConfig, outputs: list[str]) -> None:
    write_json(
        out / "manifest.json",
        {
            "command": command,
            "config": cfg.as_dict(),
            "config_hash": _config_hash(cfg),
            "seed": cfg.seed,
            "outputs": sorted(outputs),
            "version": __version__,
        },
    )


def _estimator_config(cfg: RunConfig, model, stage_schedule) -> EstimatorConfig:
    overrides = dict(cfg.estimator)
    scope = overrides.pop("huber_scope", "block")
    return EstimatorConfig(
        horizon=int(overrides.pop("horizon", 50)),
        alpha=float(overrides.pop("alpha", 0.05)),
        rho=float(overrides.pop("rho", 1.0)),
        q0=float(overrides.pop("q0", 10.0)),
        psd_margin=float(overrides.pop("psd_margin", 1e-8)),
        huber_scope=scope,
        stage_schedule=stage_schedule,
        w_bounds=model.bounds,
        **overrides,
    )


def _load_inputs(cfg: RunConfig, mode: str | None = None):
    model = load_model(cfg.model_path, mode="full_hydro")
    if cfg.schedule_path is None:
        excitation = default_schedule(model.n_links, cfg.duration)
        stages = default_stage_schedule(model.n_links, cfg.duration)
    else:
        excitation, stages = read_schedule(cfg.schedule_path)
    return model, excitation, stages


def _simulate_one(seed: int, cfg: RunConfig, model, excitation):
    corruption = None
    if cfg.corruption:
        corruption = CorruptionSpec(
            noise_std=float(cfg.corruption.get("noise_std", 0.0)),
            outlier_rate=float(cfg.corruption.get("outlier_rate", 0.0)),
            outlier_gain=float(cfg.corruption.get("outlier_gain", 1.0)),
            seed=seed,
        )
    events = tuple(
        TruthEvent(float(ev["time"]), {int(k): float(v) for k, v in ev["scale"].items()})
        for ev in cfg.events
    )
    return synthesize_dataset(
        model, excitation, mode=cfg.mode, corruption=corruption, dt=cfg.dt,
        duration=cfg.duration, seed=seed, events=events,
    )


def cmd_simulate(cfg: RunConfig, trials: int, jobs: int) -> int:
    model, excitation, _ = _load_inputs(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + i for i in range(max(trials, 1))]
    outputs = []
    for seed in seeds:
        data = _simulate_one(seed, cfg, model, excitation)
        suffix = "" if len(seeds) == 1 else f"_seed{seed:04d}"
        tele = out / f"telemetry{suffix}.jsonl"
        truth = out / f"truth{suffix}.jsonl"
        write_telemetry(tele, data)
        if data.pi_true is not None:
            write_truth_sidecar(truth, data)
            outputs.append(truth.name)
        outputs.append(tele.name)
        print(f"wrote {tele} ({len(data)} records)")
    _write_manifest(out, "simulate", cfg, outputs)
    return EXIT_OK


def cmd_identify(cfg: RunConfig, data_path: str, initial_path: str | None) -> int:
    model, _, stages = _load_inputs(cfg)
    data = read_telemetry(data_path)
    if len(data) == 0:
        print("error: no samples in the telemetry log", file=sys.stderr)
        return EXIT_DATA
    if data.n_links != model.n_links:
        print("error: telemetry joint count does not match the model", file=sys.stderr)
        return EXIT_DATA
    lumped = parameters_from_model(model)
    if initial_path is not None:
        pi0_vals, _, _ = read_final_params(initial_path)
        pi0 = ParameterVector(pi0_vals, model.n_links)
    else:
        pi0 = perturb_parameters(lumped, cfg.initial_perturbation, seed=cfg.seed)
    est_cfg = _estimator_config(cfg, model, stages)
    est = run_identification(model, data, pi0, est_cfg)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_parameter_trace(out / "params_trace.csv", est.trace)
    write_uncertainty_trace(out / "uncertainty_trace.csv", est.trace)
    write_solve_time_trace(out / "solve_times.csv", est.trace)
    write_final_params(out / "final_params.json", est.state.pi.values,
                       est.state.sigma, model.n_links)
    solve_times = np.array([r.solve_time_s for r in est.trace])
    summary = {
        "samples": len(est.trace),
        "median_solve_time_s": float(np.median(solve_times)),
        "p90_solve_time_s": float(np.percentile(solve_times, 90)),
        "p99_solve_time_s": float(np.percentile(solve_times, 99)),
        "held_steps": sum(1 for r in est.trace if r.status.startswith("held")),
        "diagnostics": est.diagnostics,
    }
    write_json(out / "summary.json", summary)
    _write_manifest(out, "identify", cfg, [
        "params_trace.csv", "uncertainty_trace.csv", "solve_times.csv",
        "final_params.json", "summary.json",
    ])
    print(f"identified {len(est.trace)} samples; "
          f"median solve {summary['median_solve_time_s'] * 1e3:.1f} ms")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, data_path: str, params_path: str) -> int:
    model, _, _ = _load_inputs(cfg)
    data = read_telemetry(data_path)
    if len(data) == 0:
        print("error: no samples in the telemetry log", file=sys.stderr)
        return EXIT_DATA
    pi_vals, sigma, n_links = read_final_params(params_path)
    if pi_vals.size != model.n_params:
        print("error: channel count mismatch between params and model", file=sys.stderr)
        return EXIT_DATA
    if data.n_links != model.n_links:
        print("error: telemetry joint count does not match the model", file=sys.stderr)
        return EXIT_DATA

    names = channel_names(model.n_links)
    predicted = predict_measurements(model, data, pi_vals)
    measured = data.measurement_matrix()
    report = compute_metrics(predicted, measured, names)

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "metrics.json", report.as_dict())

    with open(out / "parity.csv", "w") as f:
        f.write("channel,t,measured,predicted\n")
        for i, name in enumerate(names):
            for k in range(len(data)):
                f.write(f"{name},{float(data.t[k])!r},{measured[k, i]!r},{predicted[k, i]!r}\n")

    residuals = measured - predicted
    window = max(2, int(round(5.0 / max(cfg.dt, 1e-9))))
    noise_cov = estimate_noise_covariance(residuals, window)
    outputs = ["metrics.json", "parity.csv"]
    from scipy.special import ndtri

    z = float(ndtri(0.975))
    for i, name in enumerate(names):
        band_path = out / f"bands_{name}.csv"
        with open(band_path, "w") as f:
            f.write("t,tau_pred,tau_meas,lo,hi\n")
            for k in range(len(data)):
                if sigma is not None:
                    from .regressor import system_regressor

                    Y = system_regressor(model, data.state(k)).assembled
                    var = propagate_torque_cov(Y[i:i + 1], sigma,
                                               noise_cov[i:i + 1, i:i + 1])[0, 0]
                else:
                    var = noise_cov[i, i]
                half = z * np.sqrt(max(var, 0.0))
                f.write(
                    f"{float(data.t[k])!r},{predicted[k, i]!r},{measured[k, i]!r},"
                    f"{predicted[k, i] - half!r},{predicted[k, i] + half!r}\n"
                )
        outputs.append(band_path.name)
    _write_manifest(out, "evaluate", cfg, outputs)
    print(f"metrics written for {len(names)} channels")
    return EXIT_OK


def cmd_compare(cfg: RunConfig, data_path: str, fixed_path: str, trace_path: str) -> int:
    model, _, _ = _load_inputs(cfg)
    data = read_telemetry(data_path)
    if len(data) == 0:
        print("error: no samples in the telemetry log", file=sys.stderr)
        return EXIT_DATA
    pi_fixed, _, _ = read_final_params(fixed_path)
    ts, pis, _ = read_parameter_trace(trace_path)
    if pis.shape[1] != model.n_params or pi_fixed.size != model.n_params:
        print("error: parameter dimensions do not match the model", file=sys.stderr)
        return EXIT_DATA
    # align the trace with the dataset timestamps
    idx = np.searchsorted(ts, data.t, side="right") - 1
    idx = np.clip(idx, 0, len(ts) - 1)
    trace_matrix = pis[idx]
    deltas = compare_models(model, data, pi_fixed, trace_matrix)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "comparison.json", deltas)
    _write_manifest(out, "compare", cfg, ["comparison.json"])
    print("comparison written")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uvmsid",
        description="Synthesis, online identification, and evaluation of coupled "
                    "vehicle-manipulator dynamics models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--config", required=True, help="run configuration YAML")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--jobs", type=int, default=1)

    def add_estimator_flags(p):
        p.add_argument("--horizon", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--rho", type=float, default=None)
        p.add_argument("--q0", type=float, default=None)
        p.add_argument("--huber-scope", choices=["full", "block", "element"], default=None)

    p_sim = sub.add_parser("simulate", help="synthesize a telemetry log and truth sidecar")
    add_shared(p_sim)
    p_sim.add_argument("--trials", type=int, default=1)
    p_sim.add_argument("--duration", type=float, default=None)

    p_id = sub.add_parser("identify", help="run the online estimator over a log")
    add_shared(p_id)
    add_estimator_flags(p_id)
    p_id.add_argument("--data", required=True)
    p_id.add_argument("--initial", default=None, help="initial parameter JSON")

    p_ev = sub.add_parser("evaluate", help="fit metrics, parity and prediction bands")
    add_shared(p_ev)
    p_ev.add_argument("--data", required=True)
    p_ev.add_argument("--params", required=True)

    p_cmp = sub.add_parser("compare", help="fixed-vs-adaptive prediction comparison")
    add_shared(p_cmp)
    p_cmp.add_argument("--data", required=True)
    p_cmp.add_argument("--fixed", required=True)
    p_cmp.add_argument("--trace", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
    except (OSError, yaml.YAMLError, ConfigError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if getattr(args, "duration", None) is not None:
        cfg.duration = args.duration
    for key in ("horizon", "alpha", "rho", "q0"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.estimator[key] = value
    if getattr(args, "huber_scope", None) is not None:
        cfg.estimator["huber_scope"] = args.huber_scope

    try:
        if args.command == "simulate":
            return cmd_simulate(cfg, args.trials, args.jobs)
        if args.command == "identify":
            return cmd_identify(cfg, args.data, args.initial)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.data, args.params)
        if args.command == "compare":
            return cmd_compare(cfg, args.data, args.fixed, args.trace)
        parser.error(f"unknown command {args.command}")
    except SchemaError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DynamicsError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
