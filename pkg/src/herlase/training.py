"""Epoch-based training loop shared by skills, the HER baseline and HERLASE.

One epoch = collect episodes with the exploration policy, add originals plus
hindsight-relabeled copies to the buffer, then run cycles x updates DDPG
steps, then evaluate the frozen deterministic policy on fresh start/goal
draws.

Exploration goes through an epsilon gate: at every decision point (any step
without an active skill) a uniform draw against epsilon decides whether to
consult the look-ahead planner. The base explorer here has no planner, so the
gate never opens anything and it degrades to the noisy policy -- which is
exactly the HER baseline. The look-ahead variant subclasses it and overrides
only the planning hooks, so with epsilon pinned to 0 the two consume the same
random stream and produce bit-identical runs.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import envs
from .ddpg import ActorCritic, ddpg_update
from .envs import TaskSpec
from .replay import ReplayBuffer, Transition, her_relabel


@dataclass
class TrainConfig:
    epochs: int = 50
    episodes_per_epoch: int = 16
    eval_episodes: int = 20
    cycles_per_epoch: int = 20
    updates_per_cycle: int = 40
    batch_size: int = 128
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    gamma: float = 0.98
    polyak: float = 0.95
    hidden_sizes: tuple[int, ...] = (64, 64, 64)
    action_noise_sigma: float = 0.2
    random_action_prob: float = 0.0
    replay_capacity: int = 1_000_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.001
    epsilon_decay_fraction: float = 0.5
    early_stop_success: float | None = None
    early_stop_patience: int = 2


@dataclass
class EpochLog:
    epoch: int
    episodes: int
    success_rate: float
    mean_actor_loss: float
    mean_critic_loss: float
    epsilon: float
    wall_clock_s: float


LOG_HEADER = (
    "epoch",
    "episodes",
    "success_rate",
    "mean_actor_loss",
    "mean_critic_loss",
    "epsilon",
    "wall_clock_s",
)


@dataclass
class TrainResult:
    ac: ActorCritic
    logs: list[EpochLog]
    early_stopped: bool
    seconds_per_episode: float
    total_seconds: float

    @property
    def success_curve(self) -> list[float]:
        return [row.success_rate for row in self.logs]


@dataclass
class RunRngs:
    """Named random streams so every consumer is independently seeded."""

    init: np.random.Generator
    reset: np.random.Generator
    action: np.random.Generator
    gate: np.random.Generator
    tree: np.random.Generator
    buffer: np.random.Generator
    eval: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RunRngs":
        children = np.random.SeedSequence(seed).spawn(7)
        gens = [np.random.default_rng(c) for c in children]
        return cls(*gens)


def epsilon_at(epoch: int, cfg: TrainConfig) -> float:
    """Linear decay from epsilon_start to epsilon_end over the first
    epsilon_decay_fraction of the epoch budget, then constant."""
    horizon = max(1, round(cfg.epsilon_decay_fraction * cfg.epochs))
    frac = min(1.0, epoch / horizon)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


class EpsilonGateExplorer:
    """Noisy-policy exploration behind an epsilon gate with no planner.

    Subclasses provide _plan (returning True once a skill execution has been
    started) and _skill_action / observe to drive it. Here the gate draw
    always happens at decision points but never starts anything.
    """

    def __init__(self, ac: ActorCritic, task: TaskSpec, cfg: TrainConfig, rngs: RunRngs):
        self.ac = ac
        self.task = task
        self.cfg = cfg
        self.rngs = rngs
        self.epsilon = 0.0

    def begin_episode(self) -> None:
        pass

    def skill_active(self) -> bool:
        return False

    def _plan(self, state_vec: np.ndarray, goal: np.ndarray) -> bool:
        return False

    def _skill_action(self, state_vec: np.ndarray, goal: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _noisy_action(self, state_vec: np.ndarray, goal: np.ndarray) -> np.ndarray:
        cfg, rng = self.cfg, self.rngs.action
        if cfg.random_action_prob > 0.0 and rng.uniform() < cfg.random_action_prob:
            return rng.uniform(-1.0, 1.0, size=self.task.action_dim)
        a = self.ac.act(state_vec, goal)
        if cfg.action_noise_sigma > 0.0:
            a = a + rng.normal(0.0, cfg.action_noise_sigma, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def action(self, state_vec: np.ndarray, goal: np.ndarray) -> np.ndarray:
        if self.skill_active():
            return self._skill_action(state_vec, goal)
        if self.rngs.gate.uniform() < self.epsilon and self._plan(state_vec, goal):
            return self._skill_action(state_vec, goal)
        return self._noisy_action(state_vec, goal)

    def observe(self, next_vec: np.ndarray, goal: np.ndarray) -> None:
        pass


def env_action(policy_action: np.ndarray) -> np.ndarray:
    """Pad a task-space policy action out to the 4-dim environment action."""
    policy_action = np.asarray(policy_action, dtype=np.float64)
    if policy_action.shape[-1] == envs.ENV_ACTION_DIM:
        return policy_action
    padded = np.zeros(envs.ENV_ACTION_DIM)
    padded[: policy_action.shape[-1]] = policy_action
    return padded


def collect_episode(
    task: TaskSpec, explorer: EpsilonGateExplorer, reset_rng: np.random.Generator
) -> list[Transition]:
    state, goal = envs.reset(task, reset_rng)
    explorer.begin_episode()
    transitions: list[Transition] = []
    done = False
    while not done:
        vec = state.to_vector(task)
        a = explorer.action(vec, goal)
        res = envs.step(task, state, env_action(a), goal)
        next_vec = res.next_state.to_vector(task)
        transitions.append(
            Transition(vec, goal.copy(), np.asarray(a, dtype=np.float64).copy(),
                       res.reward, next_vec, res.done)
        )
        explorer.observe(next_vec, goal)
        state = res.next_state
        done = res.done
    return transitions


def evaluate(
    task: TaskSpec, ac: ActorCritic, n_episodes: int, eval_rng: np.random.Generator
) -> float:
    """Frozen deterministic policy success rate over fresh start/goal draws."""
    successes = 0
    for _ in range(n_episodes):
        state, goal = envs.reset(task, eval_rng)
        reward = -1.0
        done = False
        while not done:
            a = ac.act(state.to_vector(task), goal)
            res = envs.step(task, state, env_action(a), goal)
            state, reward, done = res.next_state, res.reward, res.done
        successes += reward == 0.0
    return successes / n_episodes


def train_policy(
    task: TaskSpec,
    cfg: TrainConfig,
    seed: int,
    explorer_factory=None,
) -> TrainResult:
    """Run the full epoch loop; deterministic given (task, cfg, seed).

    explorer_factory(ac, task, cfg, rngs) swaps in a different exploration
    strategy; the default is the gated noisy policy (the HER baseline).
    """
    rngs = RunRngs.from_seed(seed)
    ac = ActorCritic.create(
        task.state_dim,
        task.goal_dim,
        task.action_dim,
        rng=rngs.init,
        hidden_sizes=tuple(cfg.hidden_sizes),
        gamma=cfg.gamma,
        actor_lr=cfg.actor_lr,
        critic_lr=cfg.critic_lr,
        polyak=cfg.polyak,
    )
    explorer = (explorer_factory or EpsilonGateExplorer)(ac, task, cfg, rngs)
    buffer = ReplayBuffer(cfg.replay_capacity)

    logs: list[EpochLog] = []
    early_stopped = False
    streak = 0
    episodes_done = 0
    collect_seconds = 0.0
    run_start = time.perf_counter()

    for epoch in range(cfg.epochs):
        epoch_start = time.perf_counter()
        explorer.epsilon = epsilon_at(epoch, cfg)

        t0 = time.perf_counter()
        for _ in range(cfg.episodes_per_epoch):
            episode = collect_episode(task, explorer, rngs.reset)
            buffer.add_episode(episode)
            buffer.add_episode(her_relabel(episode, task))
            episodes_done += 1
        collect_seconds += time.perf_counter() - t0

        critic_losses = 0.0
        actor_losses = 0.0
        n_updates = cfg.cycles_per_epoch * cfg.updates_per_cycle
        for _ in range(n_updates):
            batch = buffer.sample(cfg.batch_size, rngs.buffer)
            cl, al = ddpg_update(ac, batch)
            critic_losses += cl
            actor_losses += al

        success = evaluate(task, ac, cfg.eval_episodes, rngs.eval)
        logs.append(
            EpochLog(
                epoch=epoch,
                episodes=episodes_done,
                success_rate=success,
                mean_actor_loss=actor_losses / n_updates,
                mean_critic_loss=critic_losses / n_updates,
                epsilon=explorer.epsilon,
                wall_clock_s=time.perf_counter() - epoch_start,
            )
        )

        if cfg.early_stop_success is not None:
            streak = streak + 1 if success >= cfg.early_stop_success else 0
            if streak >= cfg.early_stop_patience:
                early_stopped = True
                break

    total = time.perf_counter() - run_start
    return TrainResult(
        ac=ac,
        logs=logs,
        early_stopped=early_stopped,
        seconds_per_episode=collect_seconds / max(1, episodes_done),
        total_seconds=total,
    )


def train_skill(task_name: str, cfg: TrainConfig, seed: int, **task_overrides) -> TrainResult:
    """Train one of the basic skills in its own environment with the noisy
    exploration policy (the epsilon gate pinned shut)."""
    if task_name not in envs.SKILL_TASKS:
        raise ValueError(f"{task_name!r} is not a skill task")
    task = envs.make_task(task_name, **task_overrides)
    cfg = _with_zero_epsilon(cfg)
    return train_policy(task, cfg, seed)


def _with_zero_epsilon(cfg: TrainConfig) -> TrainConfig:
    from dataclasses import replace

    return replace(cfg, epsilon_start=0.0, epsilon_end=0.0)


def write_log_csv(path: str | Path, logs: list[EpochLog]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_HEADER)
        for row in logs:
            writer.writerow(
                [
                    row.epoch,
                    row.episodes,
                    repr(float(row.success_rate)),
                    repr(float(row.mean_actor_loss)),
                    repr(float(row.mean_critic_loss)),
                    repr(float(row.epsilon)),
                    f"{row.wall_clock_s:.3f}",
                ]
            )


def read_log_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def log_rows_without_timing(path: str | Path) -> list[tuple[str, ...]]:
    """Log rows minus the wall-clock column (the only nondeterministic field),
    the view used for determinism and identity comparisons."""
    rows = read_log_csv(path)
    keep = [h for h in LOG_HEADER if h != "wall_clock_s"]
    return [tuple(r[h] for h in keep) for r in rows]
