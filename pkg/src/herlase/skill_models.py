"""Per-skill outcome models learned after skill training.

For each trained skill we fit, from rollouts of the frozen skill policy
hosted in the shared object task space:

  * a dynamics regressor mapping (start state, sub-goal) to the full state
    after the skill has run to termination -- one coarse hop of roughly 25
    primitive steps, which is what the look-ahead planner unrolls; and
  * a success classifier giving the probability that the skill actually
    achieves the sub-goal from that start, used to prune search branches.

Rollout starts mix the skill's own start distribution with the downstream
task's start distribution 50/50, so the success model sees launches from
states the skill was never trained for (e.g. grasping from far away) and
learns to veto them.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import envs
from .checkpoint import load_checkpoint, save_checkpoint
from .ddpg import ActorCritic
from .envs import TaskSpec
from .nets import AdamState, Mlp, adam_step
from .spaces import SkillSpace, skill_space
from .training import env_action

log = logging.getLogger(__name__)

HOST_TASK = "pick_and_move"  # walls-free object task space hosting rollouts


class InsufficientDataError(ValueError):
    """Dataset smaller than the configured minimum."""


@dataclass
class ModelFitConfig:
    episodes_per_skill: int = 5000
    holdout_fraction: float = 0.1
    min_rows: int = 2000
    skill_start_fraction: float = 0.5  # remainder uses the task start distribution
    dynamics_hidden: tuple[int, ...] = (128, 128, 128)
    dynamics_lr: float = 1e-3
    dynamics_epochs: int = 120
    dynamics_batch: int = 256
    success_hidden: tuple[int, ...] = (50, 100)
    success_lr: float = 1e-3
    success_epochs: int = 120
    success_batch: int = 256


@dataclass
class SkillDataset:
    """Rows of (start state, sub-goal, final state, success flag)."""

    start_states: np.ndarray
    goals: np.ndarray
    final_states: np.ndarray
    success: np.ndarray

    def __len__(self) -> int:
        return len(self.success)

    def save_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        k = self.start_states.shape[1]
        m = self.goals.shape[1]
        header = (
            [f"s_{i}" for i in range(k)]
            + [f"g_{i}" for i in range(m)]
            + [f"sf_{i}" for i in range(k)]
            + ["success"]
        )
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for i in range(len(self)):
                writer.writerow(
                    [repr(float(v)) for v in self.start_states[i]]
                    + [repr(float(v)) for v in self.goals[i]]
                    + [repr(float(v)) for v in self.final_states[i]]
                    + [int(self.success[i])]
                )

    @classmethod
    def load_csv(cls, path: str | Path) -> "SkillDataset":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            k = sum(h.startswith("s_") for h in header)
            m = sum(h.startswith("g_") for h in header)
            rows = [[float(v) for v in row] for row in reader]
        data = np.asarray(rows, dtype=np.float64)
        return cls(
            start_states=data[:, :k],
            goals=data[:, k : k + m],
            final_states=data[:, k + m : 2 * k + m],
            success=data[:, -1].astype(bool),
        )


def _hosted_start(
    skill: SkillSpace, host: TaskSpec, use_skill_start: bool, rng: np.random.Generator
) -> envs.WorldState:
    """Start state in the host task space, optionally matching the skill's own
    start distribution (touching for grasp, attached for transfer)."""
    state, _ = envs.reset(host, rng)
    if not use_skill_start:
        return state
    if skill.skill_id == "grasp":
        offset = rng.uniform(-1.0, 1.0, size=3)
        offset *= 0.6 * host.grasp_radius / max(np.linalg.norm(offset), 1e-9)
        state.gripper_pos = state.object_pos + offset
        state.gripper_pos[2] = max(state.gripper_pos[2], envs.GROUND_Z)
    elif skill.skill_id == "transfer":
        state.object_pos = state.gripper_pos.copy()
        state.attached = True
        state.aperture = 0.0
    return state


def run_skill(
    actor: Mlp,
    skill: SkillSpace,
    host: TaskSpec,
    state: envs.WorldState,
    subgoal: np.ndarray,
    max_steps: int,
    task_goal: np.ndarray | None = None,
) -> tuple[envs.WorldState, bool, int]:
    """Execute the frozen skill policy until its sub-goal is reached (within
    the skill tolerance) or the step cap; returns (final state, success, steps).

    task_goal only matters for bookkeeping by callers; the rollout itself runs
    against a throwaway goal so episode-level termination cannot trigger.
    """
    steps = 0
    goal_for_env = task_goal if task_goal is not None else subgoal
    for _ in range(max_steps):
        vec = state.to_vector(host)
        a = actor.forward(np.concatenate([skill.project_state(vec, host), subgoal]))
        res = envs.step(host, state, env_action(skill.embed_action(a)), goal_for_env)
        state = res.next_state
        steps += 1
        achieved = skill.achieved(state.to_vector(host), host)
        if np.linalg.norm(achieved - subgoal) <= skill.tolerance:
            return state, True, steps
    return state, False, steps


def collect_skill_data(
    actor: Mlp,
    skill: SkillSpace,
    n_episodes: int,
    seed,
    cfg: ModelFitConfig | None = None,
    host: TaskSpec | None = None,
) -> SkillDataset:
    """Roll the frozen skill out n_episodes times and record outcomes."""
    cfg = cfg or ModelFitConfig()
    host = host or envs.make_task(HOST_TASK)
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    starts, goals, finals, flags = [], [], [], []
    for _ in range(n_episodes):
        use_skill_start = rng.uniform() < cfg.skill_start_fraction
        state = _hosted_start(skill, host, use_skill_start, rng)
        vec = state.to_vector(host)
        subgoal = skill.sample_subgoal(vec, host, rng)
        final, success, _ = run_skill(
            actor, skill, host, state, subgoal, host.max_skill_steps
        )
        starts.append(vec)
        goals.append(subgoal)
        finals.append(final.to_vector(host))
        flags.append(success)
    return SkillDataset(
        start_states=np.asarray(starts),
        goals=np.asarray(goals),
        final_states=np.asarray(finals),
        success=np.asarray(flags, dtype=bool),
    )


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray, zero_std: float = 1.0) -> "Normalizer":
        """zero_std replaces the scale of (numerically) constant dims: 1.0 for
        inputs; tiny for regression targets, which pins their predictions to
        the mean instead of letting the net wobble around it."""
        std = data.std(axis=0)
        return cls(mean=data.mean(axis=0), std=np.where(std < 1e-8, zero_std, std))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.std + self.mean


@dataclass
class DynamicsModel:
    """(state, sub-goal) -> predicted post-skill state, with i/o normalization."""

    net: Mlp
    input_norm: Normalizer
    output_norm: Normalizer

    def predict(self, state: np.ndarray, goal: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        goal = np.asarray(goal, dtype=np.float64)
        x = np.concatenate([state, goal], axis=-1)
        if x.shape[-1] != self.net.input_dim:
            raise envs.DimensionError(
                f"dynamics input dim {x.shape[-1]} != {self.net.input_dim}"
            )
        out = self.output_norm.denormalize(self.net.forward(self.input_norm.normalize(x)))
        # keep predicted positions inside the workspace box
        for sl in (envs.GRIPPER_SLICE, envs.OBJECT_SLICE):
            if sl.stop <= out.shape[-1]:
                out[..., sl] = np.clip(out[..., sl], envs.WORKSPACE_LO, envs.WORKSPACE_HI)
        return out


@dataclass
class SuccessModel:
    """(state, sub-goal) -> probability the skill achieves the sub-goal."""

    net: Mlp
    input_norm: Normalizer

    def predict(self, state: np.ndarray, goal: np.ndarray) -> float | np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        goal = np.asarray(goal, dtype=np.float64)
        x = np.concatenate([state, goal], axis=-1)
        if x.shape[-1] != self.net.input_dim:
            raise envs.DimensionError(
                f"success input dim {x.shape[-1]} != {self.net.input_dim}"
            )
        p = self.net.forward(self.input_norm.normalize(x))
        p = np.clip(p[..., 0], 1e-7, 1.0 - 1e-7)
        return float(p) if p.ndim == 0 else p


def _split(n: int, holdout: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    idx = rng.permutation(n)
    cut = max(1, int(round(n * holdout)))
    return idx[cut:], idx[:cut]


def _batches(order: np.ndarray, batch: int):
    """Yield mini-batches, folding an undersized tail into its predecessor
    (a near-empty tail batch has a wildly noisy gradient direction)."""
    n = len(order)
    lo = 0
    while lo < n:
        hi = lo + batch
        if n - hi < batch // 4:
            hi = n
        yield order[lo:hi]
        lo = hi


def _lr_decay(epoch: int, total: int) -> float:
    """Staircase decay. Adam's step scale never shrinks on its own near an
    optimum, so sustained low-rate phases are what let the regressors settle."""
    frac = epoch / max(1, total)
    if frac < 0.5:
        return 1.0
    if frac < 0.75:
        return 0.1
    if frac < 0.9:
        return 0.01
    return 0.001


def train_dynamics(
    ds: SkillDataset, cfg: ModelFitConfig | None = None, seed: int = 0
) -> tuple[DynamicsModel, dict]:
    """Fit the post-skill state regressor; returns the model and a held-out
    error report (mean Euclidean position error in workspace units)."""
    cfg = cfg or ModelFitConfig()
    if len(ds) < cfg.min_rows:
        raise InsufficientDataError(f"{len(ds)} rows < minimum {cfg.min_rows}")
    rng = np.random.default_rng(seed)
    x = np.concatenate([ds.start_states, ds.goals], axis=1)
    y = ds.final_states
    in_norm = Normalizer.fit(x)
    out_norm = Normalizer.fit(y, zero_std=1e-3)
    xn, yn = in_norm.normalize(x), out_norm.normalize(y)
    train_idx, hold_idx = _split(len(ds), cfg.holdout_fraction, rng)

    net = Mlp(
        [x.shape[1], *cfg.dynamics_hidden, y.shape[1]],
        hidden_activation="relu",
        output_activation="linear",
        rng=rng,
    )
    opt = AdamState.for_params(net.parameters(), cfg.dynamics_lr)
    n = len(train_idx)
    for epoch in range(cfg.dynamics_epochs):
        opt.learning_rate = cfg.dynamics_lr * _lr_decay(epoch, cfg.dynamics_epochs)
        order = rng.permutation(train_idx)
        for rows in _batches(order, cfg.dynamics_batch):
            pred, cache = net.forward_cached(xn[rows])
            err = pred - yn[rows]
            grads, _ = net.backward(cache, (2.0 / len(rows)) * err)
            adam_step(net.parameters(), grads, opt)

    model = DynamicsModel(net=net, input_norm=in_norm, output_norm=out_norm)
    report = holdout_dynamics_report(model, ds, hold_idx)
    return model, report


def holdout_dynamics_report(
    model: DynamicsModel, ds: SkillDataset, hold_idx: np.ndarray
) -> dict:
    pred = model.predict(ds.start_states[hold_idx], ds.goals[hold_idx])
    true = ds.final_states[hold_idx]
    pos_cols = np.r_[
        np.arange(envs.GRIPPER_SLICE.start, envs.GRIPPER_SLICE.stop),
        np.arange(envs.OBJECT_SLICE.start, envs.OBJECT_SLICE.stop),
    ]
    pos_err = np.linalg.norm(pred[:, pos_cols] - true[:, pos_cols], axis=1)
    full_err = np.linalg.norm(pred - true, axis=1)
    return {
        "holdout_rows": int(len(hold_idx)),
        "mean_position_error": float(pos_err.mean()),
        "mean_state_error": float(full_err.mean()),
    }


def train_success(
    ds: SkillDataset, cfg: ModelFitConfig | None = None, seed: int = 0
) -> tuple[SuccessModel, dict]:
    """Fit the success classifier with binary cross-entropy; returns the model
    and a held-out accuracy report at threshold 0.5."""
    cfg = cfg or ModelFitConfig()
    if len(ds) < cfg.min_rows:
        raise InsufficientDataError(f"{len(ds)} rows < minimum {cfg.min_rows}")
    rng = np.random.default_rng(seed)
    x = np.concatenate([ds.start_states, ds.goals], axis=1)
    labels = ds.success.astype(np.float64)
    in_norm = Normalizer.fit(x)
    xn = in_norm.normalize(x)
    train_idx, hold_idx = _split(len(ds), cfg.holdout_fraction, rng)

    net = Mlp(
        [x.shape[1], *cfg.success_hidden, 1],
        hidden_activation="relu",
        output_activation="sigmoid",
        rng=rng,
    )
    rate = labels.mean()
    if rate in (0.0, 1.0):
        log.warning(
            "success labels are degenerate (all %s); fitting a constant model",
            bool(rate),
        )
        net.weights[-1][...] = 0.0
        net.biases[-1][...] = np.log(
            np.clip(rate, 1e-3, 1 - 1e-3) / (1 - np.clip(rate, 1e-3, 1 - 1e-3))
        )
        model = SuccessModel(net=net, input_norm=in_norm)
        return model, holdout_success_report(model, ds, hold_idx)

    n = len(train_idx)
    opt = AdamState.for_params(net.parameters(), cfg.success_lr)
    for epoch in range(cfg.success_epochs):
        opt.learning_rate = cfg.success_lr * _lr_decay(epoch, cfg.success_epochs)
        order = rng.permutation(train_idx)
        for rows in _batches(order, cfg.success_batch):
            p, cache = net.forward_cached(xn[rows])
            p = np.clip(p, 1e-7, 1.0 - 1e-7)
            t = labels[rows][:, None]
            # dBCE/dp; the sigmoid derivative inside backward turns it into p - t
            upstream = (p - t) / (p * (1.0 - p) * len(rows))
            grads, _ = net.backward(cache, upstream)
            adam_step(net.parameters(), grads, opt)

    model = SuccessModel(net=net, input_norm=in_norm)
    return model, holdout_success_report(model, ds, hold_idx)


def holdout_success_report(
    model: SuccessModel, ds: SkillDataset, hold_idx: np.ndarray
) -> dict:
    p = model.predict(ds.start_states[hold_idx], ds.goals[hold_idx])
    predicted = p > 0.5
    actual = ds.success[hold_idx]
    return {
        "holdout_rows": int(len(hold_idx)),
        "accuracy": float(np.mean(predicted == actual)),
        "positive_rate": float(ds.success.mean()),
    }


@dataclass
class SkillBundle:
    """Everything the planner needs about one trained skill."""

    skill_id: str
    space: SkillSpace
    actor: Mlp
    critic: Mlp
    gamma: float
    success: SuccessModel | None = None
    dynamics: DynamicsModel | None = None
    max_skill_steps: int = envs.DEFAULT_MAX_SKILL_STEPS

    def policy_action(self, host_vec: np.ndarray, subgoal: np.ndarray, host: TaskSpec) -> np.ndarray:
        s = self.space.project_state(host_vec, host)
        return self.actor.forward(np.concatenate([s, subgoal]))

    def q_value(self, host_vec: np.ndarray, subgoal: np.ndarray, host: TaskSpec) -> float:
        s = self.space.project_state(host_vec, host)
        a = self.actor.forward(np.concatenate([s, subgoal]))
        return float(self.critic.forward(np.concatenate([s, subgoal, a]))[0])

    # ------------------------------------------------------------- storage

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(directory / "policy.hlse", {"actor": self.actor, "critic": self.critic})
        meta = {
            "skill_id": self.skill_id,
            "state_dim": self.space.state_dim,
            "action_dim": self.space.action_dim,
            "tolerance": self.space.tolerance,
            "gamma": self.gamma,
            "max_skill_steps": self.max_skill_steps,
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2))
        if self.dynamics is not None and self.success is not None:
            save_checkpoint(
                directory / "models.hlse",
                {"dynamics": self.dynamics.net, "success": self.success.net},
                extra_arrays={
                    "dyn_in_mean": self.dynamics.input_norm.mean,
                    "dyn_in_std": self.dynamics.input_norm.std,
                    "dyn_out_mean": self.dynamics.output_norm.mean,
                    "dyn_out_std": self.dynamics.output_norm.std,
                    "succ_in_mean": self.success.input_norm.mean,
                    "succ_in_std": self.success.input_norm.std,
                },
            )

    @classmethod
    def load(cls, directory: str | Path, require_models: bool = False) -> "SkillBundle":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        mlps, _ = load_checkpoint(directory / "policy.hlse")
        space = SkillSpace(
            skill_id=meta["skill_id"],
            state_dim=meta["state_dim"],
            action_dim=meta["action_dim"],
            tolerance=meta["tolerance"],
        )
        bundle = cls(
            skill_id=meta["skill_id"],
            space=space,
            actor=mlps["actor"],
            critic=mlps["critic"],
            gamma=meta["gamma"],
            max_skill_steps=meta["max_skill_steps"],
        )
        models_path = directory / "models.hlse"
        if models_path.exists():
            nets, extras = load_checkpoint(models_path)
            bundle.dynamics = DynamicsModel(
                net=nets["dynamics"],
                input_norm=Normalizer(extras["dyn_in_mean"], extras["dyn_in_std"]),
                output_norm=Normalizer(extras["dyn_out_mean"], extras["dyn_out_std"]),
            )
            bundle.success = SuccessModel(
                net=nets["success"],
                input_norm=Normalizer(extras["succ_in_mean"], extras["succ_in_std"]),
            )
        elif require_models:
            raise FileNotFoundError(f"missing fitted models under {directory}")
        return bundle


def bundle_from_training(
    skill_id: str, ac: ActorCritic, max_skill_steps: int = envs.DEFAULT_MAX_SKILL_STEPS
) -> SkillBundle:
    space = skill_space(skill_id)
    return SkillBundle(
        skill_id=skill_id,
        space=space,
        actor=ac.actor,
        critic=ac.critic,
        gamma=ac.gamma,
        max_skill_steps=max_skill_steps,
    )
