"""Experiment configuration: one YAML file drives the whole pipeline.

Schema (all sections optional; defaults shown by `herlase print-config`):

    schema_version: 1
    task: put_inside            # target task for train-task
    method: herlase             # herlase | her | pas
    skill_set: k1               # k1 | k2 | k3
    seeds: [1, 2, 3]
    epochs: 150                 # task-training epochs
    out_dir: runs/experiment
    env:                        # world parameter overrides
      step_scale: 0.05
      grasp_radius: 0.05
      max_episode_steps: 50
      max_skill_steps: 25
      tasks:                    # per-task field overrides
        put_inside: {tolerance: 0.08}
    train:                      # TrainConfig fields for task training
      actor_lr: 1.0e-3
      ...
    skills:                     # skill-training phase
      seed: 1
      epochs: 50
      early_stop_success: 0.95
      overrides: {}             # TrainConfig fields changed for skills
    models:                     # ModelFitConfig fields
      episodes_per_skill: 5000
      ...
    search:                     # SearchConfig fields
      branching: 5
      height: 3
      prune_threshold: 0.5

The config hash covers everything that affects results except the seed list
and output directory; artifacts record it so the report can refuse to
aggregate runs produced under different settings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import envs
from .lookahead import SearchConfig
from .skill_models import ModelFitConfig
from .training import TrainConfig

SCHEMA_VERSION = 1

SKILL_SETS = {
    "k1": ("reach", "grasp", "transfer"),
    "k2": ("grasp", "transfer"),
    "k3": ("reach", "transfer"),
}

METHODS = ("herlase", "her", "pas")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "pick_and_move"
    method: str = "herlase"
    skill_set: str = "k1"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    epochs: int = 150
    out_dir: str = "runs/experiment"
    env: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    skills_seed: int = 1
    skills_epochs: int = 50
    skills_early_stop: float | None = 0.95
    skills_overrides: dict = field(default_factory=dict)
    models: ModelFitConfig = field(default_factory=ModelFitConfig)
    search: SearchConfig = field(default_factory=SearchConfig)

    def validate(self) -> None:
        if self.task not in envs.TASK_NAMES:
            raise ConfigError(f"unknown task {self.task!r}; valid: {envs.TASK_NAMES}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; valid: {METHODS}")
        if self.skill_set not in SKILL_SETS:
            raise ConfigError(
                f"unknown skill set {self.skill_set!r}; valid: {tuple(SKILL_SETS)}"
            )
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")

    @property
    def skills(self) -> tuple[str, ...]:
        return SKILL_SETS[self.skill_set]

    def task_overrides(self, name: str) -> dict:
        """World parameter overrides for one task: global env keys merged with
        the per-task section."""
        global_keys = ("step_scale", "grasp_radius", "max_episode_steps", "max_skill_steps")
        out = {k: self.env[k] for k in global_keys if k in self.env}
        out.update(self.env.get("tasks", {}).get(name, {}))
        return out

    def make_task(self, name: str) -> envs.TaskSpec:
        return envs.make_task(name, **self.task_overrides(name))

    def skill_train_config(self) -> TrainConfig:
        cfg = dataclasses.replace(
            self.train,
            epochs=self.skills_epochs,
            early_stop_success=self.skills_early_stop,
            epsilon_start=0.0,
            epsilon_end=0.0,
        )
        return dataclasses.replace(cfg, **self.skills_overrides)

    def task_train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, epochs=self.epochs)


def _as_plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _as_plain(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _as_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_plain(v) for v in obj]
    return obj


def config_to_dict(cfg: ExperimentConfig) -> dict:
    plain = _as_plain(cfg)
    plain["schema_version"] = SCHEMA_VERSION
    return plain


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of everything that affects results (seed list and output
    directory excluded; each run records its own seed)."""
    plain = config_to_dict(cfg)
    plain.pop("seeds", None)
    plain.pop("out_dir", None)
    canon = json.dumps(plain, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _build_section(cls, data: dict, where: str):
    valid = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - valid
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    coerced = dict(data)
    for f in dataclasses.fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    return cls(**coerced)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data or {})
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version {version}, expected {SCHEMA_VERSION}")
    skills_section = data.pop("skills", {}) or {}
    cfg = ExperimentConfig(
        task=data.pop("task", "pick_and_move"),
        method=data.pop("method", "herlase"),
        skill_set=str(data.pop("skill_set", "k1")).lower(),
        seeds=list(data.pop("seeds", [1, 2, 3])),
        epochs=int(data.pop("epochs", 150)),
        out_dir=str(data.pop("out_dir", "runs/experiment")),
        env=data.pop("env", {}) or {},
        train=_build_section(TrainConfig, data.pop("train", {}) or {}, "train"),
        models=_build_section(ModelFitConfig, data.pop("models", {}) or {}, "models"),
        search=_build_section(SearchConfig, data.pop("search", {}) or {}, "search"),
        skills_seed=int(skills_section.get("seed", 1)),
        skills_epochs=int(skills_section.get("epochs", 50)),
        skills_early_stop=skills_section.get("early_stop_success", 0.95),
        skills_overrides=skills_section.get("overrides", {}) or {},
    )
    if data:
        raise ConfigError(f"unknown top-level config keys: {sorted(data)}")
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    with open(path) as f:
        data = yaml.safe_load(f)
    return config_from_dict(data or {})


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(config_to_dict(cfg), f, sort_keys=False)
