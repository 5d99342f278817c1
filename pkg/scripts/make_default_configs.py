#!/usr/bin/env python3
"""Regenerate the reference model, schedule, and run configuration files."""

from pathlib import Path

import yaml

from uvmsid.harness import default_model, default_schedule, default_stage_schedule
from uvmsid.io import write_schedule
from uvmsid.model import save_model

ROOT = Path(__file__).resolve().parent.parent / "configs"


def main():
    ROOT.mkdir(exist_ok=True)
    model = default_model()
    save_model(ROOT / "uvms_4dof.yaml", model)
    write_schedule(
        ROOT / "schedule_40s.yaml",
        default_schedule(4, 40.0),
        default_stage_schedule(4, 40.0),
    )
    run_cfg = {
        "model": "uvms_4dof.yaml",
        "schedule": "schedule_40s.yaml",
        "seed": 0,
        "out": "runs/demo",
        "dt": 0.02,
        "duration": 40.0,
        "mode": "lumped",
        "corruption": {"noise_std": 0.02},
        "estimator": {"horizon": 50, "alpha": 0.05, "rho": 1.0, "q0": 10.0},
        "initial_perturbation": 0.5,
    }
    with open(ROOT / "run_demo.yaml", "w") as f:
        yaml.safe_dump(run_cfg, f, sort_keys=False)
    print(f"wrote {ROOT}/uvms_4dof.yaml, schedule_40s.yaml, run_demo.yaml")


if __name__ == "__main__":
    main()
