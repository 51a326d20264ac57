"""Pipeline commands: train skills, fit their outcome models, train tasks.

Artifacts live under the config's out_dir:

    out_dir/
      skills/<skill>/   policy.hlse, meta.json, models.hlse, dataset.csv,
                        fit_report.json, log.csv
      runs/<task>_<method>_<skillset>_seed<N>/  log.csv, record.json,
                                                policy.hlse
      report/           written by the report command
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import envs
from .baselines import her_baseline_train, pas_train
from .config import ExperimentConfig, config_hash
from .lookahead import herlase_train
from .skill_models import (
    SkillBundle,
    bundle_from_training,
    collect_skill_data,
    train_dynamics,
    train_success,
)
from .training import TrainResult, train_policy, write_log_csv


@dataclass
class RunRecord:
    config_hash: str
    task: str
    method: str
    skill_set: str
    seed: int
    epochs_configured: int
    epochs_ran: int
    early_stopped: bool
    success_per_epoch: list[float]
    seconds_per_episode: float
    total_seconds: float
    branching: int
    log_csv: str
    policy: str

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "RunRecord":
        return cls(**json.loads(Path(path).read_text()))


def skill_dir(cfg: ExperimentConfig, skill: str) -> Path:
    return Path(cfg.out_dir) / "skills" / skill


def run_dir(cfg: ExperimentConfig, seed: int) -> Path:
    name = f"{cfg.task}_{cfg.method}_{cfg.skill_set}_seed{seed}"
    return Path(cfg.out_dir) / "runs" / name


def cmd_train_skills(cfg: ExperimentConfig, echo=print) -> dict[str, Path]:
    """Train every skill in the configured skill set; returns artifact dirs."""
    out: dict[str, Path] = {}
    train_cfg = cfg.skill_train_config()
    for skill in cfg.skills:
        task = cfg.make_task(skill)
        result = train_policy(task, train_cfg, cfg.skills_seed)
        directory = skill_dir(cfg, skill)
        bundle = bundle_from_training(skill, result.ac, task.max_skill_steps)
        bundle.save(directory)
        write_log_csv(directory / "log.csv", result.logs)
        meta = json.loads((directory / "meta.json").read_text())
        meta["config_hash"] = config_hash(cfg)
        meta["seed"] = cfg.skills_seed
        meta["epochs_ran"] = len(result.logs)
        meta["early_stopped"] = result.early_stopped
        meta["final_success"] = result.logs[-1].success_rate if result.logs else 0.0
        (directory / "meta.json").write_text(json.dumps(meta, indent=2))
        echo(
            f"skill {skill}: success {meta['final_success']:.2f} "
            f"after {meta['epochs_ran']} epochs -> {directory}"
        )
        out[skill] = directory
    return out


def cmd_fit_models(cfg: ExperimentConfig, echo=print) -> dict[str, dict]:
    """Collect rollouts and fit dynamics + success models for each skill."""
    reports: dict[str, dict] = {}
    host = cfg.make_task("pick_and_move")
    for skill in cfg.skills:
        directory = skill_dir(cfg, skill)
        if not (directory / "policy.hlse").exists():
            raise FileNotFoundError(
                f"no trained policy for skill {skill!r} under {directory}; "
                "run train-skills first"
            )
        bundle = SkillBundle.load(directory)
        seed = int(np.random.SeedSequence([cfg.skills_seed, hash(skill) % 2**31]).entropy % 2**32)
        ds = collect_skill_data(
            bundle.actor, bundle.space, cfg.models.episodes_per_skill, seed,
            cfg=cfg.models, host=host,
        )
        ds.save_csv(directory / "dataset.csv")
        dynamics, dyn_report = train_dynamics(ds, cfg.models, seed=cfg.skills_seed)
        success, succ_report = train_success(ds, cfg.models, seed=cfg.skills_seed)
        bundle.dynamics = dynamics
        bundle.success = success
        bundle.save(directory)
        report = {
            "config_hash": config_hash(cfg),
            "skill": skill,
            "rows": len(ds),
            "dynamics": dyn_report,
            "success": succ_report,
        }
        (directory / "fit_report.json").write_text(json.dumps(report, indent=2))
        echo(
            f"skill {skill}: dynamics err {dyn_report['mean_position_error']:.4f}, "
            f"success acc {succ_report['accuracy']:.3f} ({len(ds)} rows)"
        )
        reports[skill] = report
    return reports


def load_bundles(cfg: ExperimentConfig, require_models: bool = True) -> list[SkillBundle]:
    bundles = []
    for skill in cfg.skills:
        directory = skill_dir(cfg, skill)
        if not (directory / "meta.json").exists():
            raise FileNotFoundError(
                f"missing skill artifact {directory}; run train-skills / fit-models"
            )
        bundles.append(SkillBundle.load(directory, require_models=require_models))
    return bundles


def _train_one(cfg: ExperimentConfig, seed: int) -> TrainResult:
    task = cfg.make_task(cfg.task)
    train_cfg = cfg.task_train_config()
    if cfg.method == "her":
        return her_baseline_train(task, train_cfg, seed)
    if cfg.method == "herlase":
        bundles = load_bundles(cfg, require_models=True)
        return herlase_train(task, bundles, train_cfg, cfg.search, seed)
    if cfg.method == "pas":
        bundles = load_bundles(cfg, require_models=False)
        _, result = pas_train(task, bundles, train_cfg, seed)
        return result
    raise ValueError(f"unknown method {cfg.method!r}")


def cmd_train_task(cfg: ExperimentConfig, echo=print) -> list[RunRecord]:
    """One training run per configured seed; writes logs, records, policies."""
    records = []
    for seed in cfg.seeds:
        result = _train_one(cfg, seed)
        directory = run_dir(cfg, seed)
        directory.mkdir(parents=True, exist_ok=True)
        write_log_csv(directory / "log.csv", result.logs)
        result.ac.save(directory / "policy.hlse")
        record = RunRecord(
            config_hash=config_hash(cfg),
            task=cfg.task,
            method=cfg.method,
            skill_set=cfg.skill_set,
            seed=seed,
            epochs_configured=cfg.epochs,
            epochs_ran=len(result.logs),
            early_stopped=result.early_stopped,
            success_per_epoch=[row.success_rate for row in result.logs],
            seconds_per_episode=result.seconds_per_episode,
            total_seconds=result.total_seconds,
            branching=cfg.search.branching,
            log_csv=str(directory / "log.csv"),
            policy=str(directory / "policy.hlse"),
        )
        record.save(directory / "record.json")
        best = max(record.success_per_epoch) if record.success_per_epoch else 0.0
        echo(
            f"{cfg.task}/{cfg.method}/{cfg.skill_set} seed {seed}: "
            f"final {record.success_per_epoch[-1]:.2f}, best {best:.2f}, "
            f"{record.epochs_ran} epochs -> {directory}"
        )
        records.append(record)
    return records


def gather_records(out_dir: str | Path) -> list[RunRecord]:
    runs = Path(out_dir) / "runs"
    records = []
    if runs.exists():
        for path in sorted(runs.glob("*/record.json")):
            records.append(RunRecord.load(path))
    return records
