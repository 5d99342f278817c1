"""File formats: telemetry logs, ground-truth sidecars, traces, and reports.

Telemetry is line-delimited JSON, one object per sample. Traces are plain
CSV. All floats are written with full repr so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .estimator import TraceRow
from .harness import Telemetry

__all__ = [
    "SchemaError",
    "write_telemetry",
    "read_telemetry",
    "write_truth_sidecar",
    "read_truth_sidecar",
    "write_parameter_trace",
    "read_parameter_trace",
    "write_uncertainty_trace",
    "write_solve_time_trace",
    "write_final_params",
    "read_final_params",
    "write_json",
    "read_json",
]


class SchemaError(ValueError):
    """A data file does not match the expected record layout."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values).ravel()]


def write_telemetry(path: str | Path, data: Telemetry) -> None:
    with open(path, "w") as f:
        for k in range(len(data)):
            record = {
                "t": float(data.t[k]),
                "eta": _floats(data.eta[k]),
                "nu": _floats(data.nu[k]),
                "nu_dot": _floats(data.nu_dot[k]),
                "mu": _floats(data.mu[k]),
                "mu_dot": _floats(data.mu_dot[k]),
                "mu_ddot": _floats(data.mu_ddot[k]),
                "tau_v": _floats(data.tau_v[k]),
                "tau_m": _floats(data.tau_m[k]),
            }
            if data.tau_mv is not None:
                record["tau_mv"] = _floats(data.tau_mv[k])
            f.write(json.dumps(record, separators=(",", ":")) + "\n")


_REQUIRED_KEYS = ("t", "eta", "nu", "nu_dot", "mu", "mu_dot", "mu_ddot", "tau_v", "tau_m")


def read_telemetry(path: str | Path) -> Telemetry:
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON ({exc.msg})", lineno) from exc
            for key in _REQUIRED_KEYS:
                if key not in obj:
                    raise SchemaError(f"missing key {key!r}", lineno)
            records.append(obj)
    if not records:
        return Telemetry(
            t=np.zeros(0), eta=np.zeros((0, 6)), nu=np.zeros((0, 6)),
            nu_dot=np.zeros((0, 6)), mu=np.zeros((0, 0)), mu_dot=np.zeros((0, 0)),
            mu_ddot=np.zeros((0, 0)), tau_v=np.zeros((0, 6)), tau_m=np.zeros((0, 0)),
        )
    n = len(records[0]["mu"])
    for lineno, obj in enumerate(records, start=1):
        if len(obj["mu"]) != n or len(obj["tau_m"]) != n:
            raise SchemaError("inconsistent joint count", lineno)
        for key, width in (("eta", 6), ("nu", 6), ("nu_dot", 6), ("tau_v", 6)):
            if len(obj[key]) != width:
                raise SchemaError(f"{key} must have 6 entries", lineno)
    has_mv = all("tau_mv" in obj for obj in records)
    return Telemetry(
        t=np.array([o["t"] for o in records], dtype=float),
        eta=np.array([o["eta"] for o in records], dtype=float),
        nu=np.array([o["nu"] for o in records], dtype=float),
        nu_dot=np.array([o["nu_dot"] for o in records], dtype=float),
        mu=np.array([o["mu"] for o in records], dtype=float),
        mu_dot=np.array([o["mu_dot"] for o in records], dtype=float),
        mu_ddot=np.array([o["mu_ddot"] for o in records], dtype=float),
        tau_v=np.array([o["tau_v"] for o in records], dtype=float),
        tau_m=np.array([o["tau_m"] for o in records], dtype=float),
        tau_mv=np.array([o["tau_mv"] for o in records], dtype=float) if has_mv else None,
    )


def write_truth_sidecar(path: str | Path, data: Telemetry) -> None:
    if data.pi_true is None:
        raise ValueError("dataset carries no ground-truth parameters")
    with open(path, "w") as f:
        for k in range(len(data)):
            f.write(
                json.dumps(
                    {"t": float(data.t[k]), "pi_true": _floats(data.pi_true[k])},
                    separators=(",", ":"),
                )
                + "\n"
            )


def read_truth_sidecar(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    ts, pis = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "t" not in obj or "pi_true" not in obj:
                raise SchemaError("missing t / pi_true", lineno)
            ts.append(float(obj["t"]))
            pis.append(obj["pi_true"])
    return np.asarray(ts), np.asarray(pis, dtype=float)


def write_parameter_trace(path: str | Path, trace: list[TraceRow]) -> None:
    if not trace:
        raise ValueError("empty trace")
    dim = trace[0].pi.size
    header = ["t"] + [f"pi_{i}" for i in range(dim)] + [
        "stage", "solve_time_s", "status", "objective",
    ]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in trace:
            cells = [repr(float(row.t))]
            cells += [repr(float(v)) for v in row.pi]
            cells += [str(row.stage), repr(float(row.solve_time_s)), row.status,
                      repr(float(row.objective))]
            f.write(",".join(cells) + "\n")


def read_parameter_trace(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Returns (times, parameter matrix, statuses)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        dim = sum(1 for h in header if h.startswith("pi_"))
        ts, pis, statuses = [], [], []
        for line in f:
            cells = line.rstrip("\n").split(",")
            if len(cells) != len(header):
                raise SchemaError("trace row width mismatch")
            ts.append(float(cells[0]))
            pis.append([float(c) for c in cells[1:1 + dim]])
            statuses.append(cells[1 + dim + 2])
    return np.asarray(ts), np.asarray(pis), statuses


def write_uncertainty_trace(path: str | Path, trace: list[TraceRow]) -> None:
    if not trace:
        raise ValueError("empty trace")
    dim = trace[0].sigma_diag_sqrt.size
    header = ["t"] + [f"sigma_{i}" for i in range(dim)]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in trace:
            cells = [repr(float(row.t))] + [repr(float(v)) for v in row.sigma_diag_sqrt]
            f.write(",".join(cells) + "\n")


def write_solve_time_trace(path: str | Path, trace: list[TraceRow]) -> None:
    with open(path, "w") as f:
        f.write("t,solve_time_s\n")
        for row in trace:
            f.write(f"{float(row.t)!r},{float(row.solve_time_s)!r}\n")


def write_final_params(path: str | Path, pi: np.ndarray, sigma: np.ndarray | None,
                       n_links: int) -> None:
    doc = {"n_links": n_links, "pi": _floats(pi)}
    if sigma is not None:
        doc["sigma"] = [_floats(row) for row in np.asarray(sigma)]
    with open(path, "w") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")


def read_final_params(path: str | Path) -> tuple[np.ndarray, np.ndarray | None, int]:
    with open(path) as f:
        doc = json.load(f)
    if "pi" not in doc:
        raise SchemaError("parameter file needs a 'pi' entry")
    pi = np.asarray(doc["pi"], dtype=float)
    sigma = np.asarray(doc["sigma"], dtype=float) if "sigma" in doc else None
    return pi, sigma, int(doc.get("n_links", 0))


def write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Schedule files
# ---------------------------------------------------------------------------


def _waveform_to_dict(w) -> dict:
    return {"kind": w.kind, "amplitude": float(w.amplitude),
            "band": [float(w.band[0]), float(w.band[1])]}


def _waveform_from_dict(d):
    from .harness import Waveform

    return Waveform(d["kind"], float(d["amplitude"]),
                    (float(d["band"][0]), float(d["band"][1])))


def write_schedule(path: str | Path, excitation, stages=None) -> None:
    import yaml

    doc: dict = {
        "excitation": {
            "envelope": float(excitation.envelope),
            "ambient": {
                "joint": _waveform_to_dict(excitation.joint_ambient),
                "vehicle_linear": _waveform_to_dict(excitation.vehicle_linear_ambient),
                "vehicle_angular": _waveform_to_dict(excitation.vehicle_angular_ambient),
            },
            "stages": [
                {
                    "window": [float(st.t_start), float(st.t_end)],
                    "vehicle_dofs": list(st.vehicle_dofs),
                    "joints": list(st.joints),
                    "waveform": _waveform_to_dict(st.waveform),
                    "label": st.label,
                }
                for st in excitation.stages
            ],
        }
    }
    if stages is not None:
        doc["estimator_stages"] = [
            {
                "window": [float(st.t_start), float(st.t_end)],
                "params": list(st.active_params),
                "rows": list(st.active_rows),
                "label": st.label,
            }
            for st in stages.stages
        ]
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=False)


def read_schedule(path: str | Path):
    """Returns (ExcitationSchedule, StageSchedule | None)."""
    import yaml

    from .estimator import Stage, StageSchedule
    from .harness import ExcitationSchedule, ExcitationStage

    with open(path) as f:
        doc = yaml.safe_load(f)
    exc = doc["excitation"]
    ambient = exc.get("ambient", {})
    kwargs = {}
    if "joint" in ambient:
        kwargs["joint_ambient"] = _waveform_from_dict(ambient["joint"])
    if "vehicle_linear" in ambient:
        kwargs["vehicle_linear_ambient"] = _waveform_from_dict(ambient["vehicle_linear"])
    if "vehicle_angular" in ambient:
        kwargs["vehicle_angular_ambient"] = _waveform_from_dict(ambient["vehicle_angular"])
    if "envelope" in exc:
        kwargs["envelope"] = float(exc["envelope"])
    excitation = ExcitationSchedule(
        stages=tuple(
            ExcitationStage(
                t_start=float(st["window"][0]),
                t_end=float(st["window"][1]),
                vehicle_dofs=tuple(int(d) for d in st.get("vehicle_dofs", [])),
                joints=tuple(int(j) for j in st.get("joints", [])),
                waveform=_waveform_from_dict(st["waveform"]),
                label=st.get("label", ""),
            )
            for st in exc.get("stages", [])
        ),
        **kwargs,
    )
    stage_schedule = None
    if "estimator_stages" in doc:
        stage_schedule = StageSchedule(
            tuple(
                Stage(
                    t_start=float(st["window"][0]),
                    t_end=float(st["window"][1]),
                    active_params=tuple(int(p) for p in st["params"]),
                    active_rows=tuple(int(r) for r in st["rows"]),
                    label=st.get("label", ""),
                )
                for st in doc["estimator_stages"]
            )
        )
    return excitation, stage_schedule
