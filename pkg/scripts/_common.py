"""Shared helpers for the experiment scripts."""
import argparse
import os
from pathlib import Path

from ci_robust.harness.config import ExperimentConfig, load_config
from ci_robust.harness.runner import run_experiment

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def parser(description):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--jobs", type=int, default=int(os.environ.get("CI_ROBUST_JOBS", "1")))
    p.add_argument("--seed", type=int, help="override every config's base seed")
    return p


def run_config(name, out: Path, jobs=1, seed=None, tag=None, models=None, experiment=None):
    """Run ``configs/<name>.cfg`` with optional overrides; write CSV, JSON and
    the resolved config under ``out`` and return the report."""
    cfg = load_config(CONFIGS / f"{name}.cfg")
    d = cfg.to_dict()
    if seed is not None:
        d["experiment"]["base_seed"] = seed
    d["models"].update(models or {})
    d["experiment"].update(experiment or {})
    cfg = ExperimentConfig.from_dict(d)
    report = run_experiment(cfg, jobs=jobs)
    stem = tag or name
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / f"{stem}.json").write_text(report.to_json(), encoding="utf-8")
    (out / f"{stem}.resolved.cfg").write_text(cfg.to_text(), encoding="utf-8")
    print(f"== {stem}")
    print(report.to_csv(), end="")
    return report
