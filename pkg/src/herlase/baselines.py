"""Comparison methods: plain HER and the parameterized-action-space (PAS)
meta-controller.

The HER baseline is literally the shared training loop with the exploration
gate pinned shut, so any difference between it and the look-ahead method is
the exploration strategy and nothing else (with epsilon fixed at 0 the two
produce bit-identical logs for the same seed).

PAS learns a meta-policy whose action is one discrete skill choice plus a
continuous sub-goal for every skill; executing a meta-action runs the chosen
skill's frozen policy to termination, and the meta critic is trained on these
macro transitions with one discount step per macro. The discrete choice is
trained through the critic with a straight-through argmax: the critic takes
the executed skill's one-hot and sub-goal, and its gradient w.r.t. the
one-hot is copied onto the logits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import envs
from .ddpg import ActorCritic
from .envs import TaskSpec
from .nets import AdamState, DivergenceError, Mlp, adam_step, polyak_update
from .skill_models import SkillBundle
from .training import (
    EpochLog,
    RunRngs,
    TrainConfig,
    TrainResult,
    env_action,
    epsilon_at,
    train_policy,
)


def her_baseline_train(task: TaskSpec, cfg: TrainConfig, seed: int) -> TrainResult:
    """Plain HER: the shared loop with epsilon forced to zero."""
    cfg = replace(cfg, epsilon_start=0.0, epsilon_end=0.0)
    return train_policy(task, cfg, seed)


# --------------------------------------------------------------------- PAS


@dataclass
class PasAction:
    """Raw meta-actor output: skill preference logits plus one sub-goal slice
    per skill. The executed skill is the argmax of the logits."""

    raw: np.ndarray  # length n_skills + 3*n_skills, all in [-1, 1]
    n_skills: int

    @property
    def logits(self) -> np.ndarray:
        return self.raw[: self.n_skills]

    @property
    def skill_index(self) -> int:
        return int(np.argmax(self.logits))

    def subgoal(self, index: int) -> np.ndarray:
        lo = self.n_skills + 3 * index
        # tanh output mapped onto the workspace box
        return (self.raw[lo : lo + 3] + 1.0) / 2.0


@dataclass
class MacroTransition:
    """One skill execution: state and goal at launch, the meta action, the
    accumulated primitive reward, the state at termination."""

    state: np.ndarray
    goal: np.ndarray
    action: PasAction
    accumulated_reward: float
    next_state: np.ndarray
    done: bool  # episode over at macro end
    succeeded: bool  # task goal reached at macro end
    steps: int = 1


class MacroBuffer:
    """Ring buffer over macro transitions (meta actions kept raw)."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self.size = 0
        self._next = 0
        self._cols: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return self.size

    def add(self, m: MacroTransition) -> None:
        if self._cols is None:
            self._cols = {
                "states": np.empty((self.capacity, len(m.state))),
                "goals": np.empty((self.capacity, len(m.goal))),
                "actions": np.empty((self.capacity, len(m.action.raw))),
                "rewards": np.empty(self.capacity),
                "next_states": np.empty((self.capacity, len(m.next_state))),
                "dones": np.empty(self.capacity),
                "succeeded": np.empty(self.capacity),
            }
        i = self._next
        self._cols["states"][i] = m.state
        self._cols["goals"][i] = m.goal
        self._cols["actions"][i] = m.action.raw
        self._cols["rewards"][i] = m.accumulated_reward
        self._cols["next_states"][i] = m.next_state
        self._cols["dones"][i] = float(m.done)
        self._cols["succeeded"][i] = float(m.succeeded)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {name: col[idx] for name, col in self._cols.items()}


class PasController:
    """Meta actor-critic over the parameterized action space."""

    def __init__(self, state_dim: int, goal_dim: int, n_skills: int,
                 cfg: TrainConfig, rng: np.random.Generator):
        self.n_skills = n_skills
        self.state_dim = state_dim
        self.goal_dim = goal_dim
        out_dim = n_skills + 3 * n_skills
        hidden = tuple(cfg.hidden_sizes)
        self.actor = Mlp([state_dim + goal_dim, *hidden, out_dim],
                         output_activation="tanh", rng=rng)
        # critic sees (s, g, executed skill one-hot, executed sub-goal)
        self.critic = Mlp([state_dim + goal_dim + n_skills + 3, *hidden, 1],
                          output_activation="linear", rng=rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = AdamState.for_params(self.actor.parameters(), cfg.actor_lr)
        self.critic_opt = AdamState.for_params(self.critic.parameters(), cfg.critic_lr)
        self.gamma = cfg.gamma
        self.polyak = cfg.polyak
        # one macro accumulates at most max_skill_steps unit penalties
        self.min_macro_return = -envs.DEFAULT_MAX_SKILL_STEPS / (1.0 - cfg.gamma)

    def act(self, state: np.ndarray, goal: np.ndarray) -> PasAction:
        raw = self.actor.forward(np.concatenate([state, goal]))
        return PasAction(raw=raw, n_skills=self.n_skills)

    def _critic_input(self, sg: np.ndarray, raw: np.ndarray) -> np.ndarray:
        n = len(sg)
        k = np.argmax(raw[:, : self.n_skills], axis=1)
        onehot = np.zeros((n, self.n_skills))
        onehot[np.arange(n), k] = 1.0
        sub = np.empty((n, 3))
        for i, ki in enumerate(k):
            lo = self.n_skills + 3 * ki
            sub[i] = (raw[i, lo : lo + 3] + 1.0) / 2.0
        return np.concatenate([sg, onehot, sub], axis=1), k

    def update(self, batch: dict[str, np.ndarray]) -> tuple[float, float]:
        s, g = batch["states"], batch["goals"]
        raw = batch["actions"]
        r, s2 = batch["rewards"], batch["next_states"]
        n = len(r)
        sg = np.concatenate([s, g], axis=1)
        sg2 = np.concatenate([s2, g], axis=1)

        raw2 = self.target_actor.forward(sg2)
        cin2, _ = self._critic_input(sg2, raw2)
        q2 = self.target_critic.forward(cin2)[:, 0]
        # macros ending in task success are absorbing, like the primitive case
        boot = 1.0 - batch["succeeded"]
        y = np.clip(r + self.gamma * q2 * boot, self.min_macro_return, 0.0)

        cin, _ = self._critic_input(sg, raw)
        q, cache = self.critic.forward_cached(cin)
        td = q[:, 0] - y
        critic_loss = float(np.mean(td * td))
        grads, _ = self.critic.backward(cache, (2.0 / n) * td[:, None])
        adam_step(self.critic.parameters(), grads, self.critic_opt)

        # actor: straight-through argmax through the refreshed critic
        pi_raw, actor_cache = self.actor.forward_cached(sg)
        cin_pi, k = self._critic_input(sg, pi_raw)
        q_pi, chain_cache = self.critic.forward_cached(cin_pi)
        actor_loss = float(-np.mean(q_pi[:, 0]))
        ig = self.critic.input_gradient(chain_cache, np.full((n, 1), -1.0 / n))
        d_onehot = ig[:, sg.shape[1] : sg.shape[1] + self.n_skills]
        d_sub = ig[:, sg.shape[1] + self.n_skills :]
        upstream = np.zeros_like(pi_raw)
        upstream[:, : self.n_skills] = d_onehot  # straight-through copy
        for i, ki in enumerate(k):
            lo = self.n_skills + 3 * ki
            upstream[i, lo : lo + 3] = d_sub[i] * 0.5  # d subgoal / d raw
        agrads, _ = self.actor.backward(actor_cache, upstream)
        adam_step(self.actor.parameters(), agrads, self.actor_opt)

        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
            raise DivergenceError(
                f"non-finite PAS losses (critic={critic_loss}, actor={actor_loss})"
            )
        polyak_update(self.target_actor, self.actor, self.polyak)
        polyak_update(self.target_critic, self.critic, self.polyak)
        return critic_loss, actor_loss


def run_macro(
    task: TaskSpec,
    state: envs.WorldState,
    goal: np.ndarray,
    bundle: SkillBundle,
    subgoal: np.ndarray,
) -> tuple[envs.WorldState, float, bool, float, int]:
    """Execute one skill to termination in the real environment.

    Returns (state, accumulated reward, episode done, final reward, steps).
    Only primitive actions produced by the skill policy touch the world.
    """
    acc = 0.0
    steps = 0
    reward = -1.0
    done = False
    while True:
        vec = state.to_vector(task)
        a = bundle.policy_action(vec, subgoal, task)
        res = envs.step(task, state, env_action(bundle.space.embed_action(a)), goal)
        state, reward, done = res.next_state, res.reward, res.done
        acc += reward
        steps += 1
        new_vec = state.to_vector(task)
        sub_done = (
            np.linalg.norm(bundle.space.achieved(new_vec, task) - subgoal)
            <= bundle.space.tolerance
        )
        if done or sub_done or steps >= bundle.max_skill_steps:
            return state, acc, done, reward, steps


def pas_train(
    task: TaskSpec,
    skills: list[SkillBundle],
    cfg: TrainConfig,
    seed: int,
) -> tuple[PasController, TrainResult]:
    """Train the PAS meta-controller on macro transitions."""
    if not skills:
        raise MissingSkillsError("PAS needs at least one trained skill")
    rngs = RunRngs.from_seed(seed)
    controller = PasController(task.state_dim, task.goal_dim, len(skills), cfg, rngs.init)
    buffer = MacroBuffer(cfg.replay_capacity)
    n_skills = len(skills)
    raw_dim = n_skills + 3 * n_skills

    logs: list[EpochLog] = []
    episodes_done = 0
    collect_seconds = 0.0
    run_start = time.perf_counter()

    def noisy_meta(state_vec, goal) -> PasAction:
        rng = rngs.action
        if cfg.random_action_prob > 0.0 and rng.uniform() < cfg.random_action_prob:
            return PasAction(rng.uniform(-1, 1, size=raw_dim), n_skills)
        raw = controller.act(state_vec, goal).raw
        if cfg.action_noise_sigma > 0.0:
            raw = raw + rng.normal(0.0, cfg.action_noise_sigma, size=raw.shape)
        return PasAction(np.clip(raw, -1.0, 1.0), n_skills)

    for epoch in range(cfg.epochs):
        epoch_start = time.perf_counter()
        t0 = time.perf_counter()
        for _ in range(cfg.episodes_per_epoch):
            state, goal = envs.reset(task, rngs.reset)
            done = False
            while not done:
                vec = state.to_vector(task)
                meta = noisy_meta(vec, goal)
                k = meta.skill_index
                state, acc, done, final_r, steps = run_macro(
                    task, state, goal, skills[k], meta.subgoal(k)
                )
                buffer.add(
                    MacroTransition(
                        state=vec,
                        goal=goal.copy(),
                        action=meta,
                        accumulated_reward=acc,
                        next_state=state.to_vector(task),
                        done=done,
                        succeeded=final_r == 0.0,
                        steps=steps,
                    )
                )
            episodes_done += 1
        collect_seconds += time.perf_counter() - t0

        critic_losses = actor_losses = 0.0
        n_updates = cfg.cycles_per_epoch * cfg.updates_per_cycle
        for _ in range(n_updates):
            batch = buffer.sample(cfg.batch_size, rngs.buffer)
            cl, al = controller.update(batch)
            critic_losses += cl
            actor_losses += al

        success = evaluate_pas(task, controller, skills, cfg.eval_episodes, rngs.eval)
        logs.append(
            EpochLog(
                epoch=epoch,
                episodes=episodes_done,
                success_rate=success,
                mean_actor_loss=actor_losses / n_updates,
                mean_critic_loss=critic_losses / n_updates,
                epsilon=epsilon_at(epoch, cfg),
                wall_clock_s=time.perf_counter() - epoch_start,
            )
        )

    total = time.perf_counter() - run_start
    result = TrainResult(
        ac=_pas_as_actor_critic(controller, cfg),
        logs=logs,
        early_stopped=False,
        seconds_per_episode=collect_seconds / max(1, episodes_done),
        total_seconds=total,
    )
    return controller, result


class MissingSkillsError(RuntimeError):
    pass


def evaluate_pas(
    task: TaskSpec,
    controller: PasController,
    skills: list[SkillBundle],
    n_episodes: int,
    rng: np.random.Generator,
) -> float:
    successes = 0
    for _ in range(n_episodes):
        state, goal = envs.reset(task, rng)
        done = False
        reward = -1.0
        while not done:
            meta = controller.act(state.to_vector(task), goal)
            k = meta.skill_index
            state, _, done, reward, _ = run_macro(task, state, goal, skills[k], meta.subgoal(k))
        successes += reward == 0.0
    return successes / n_episodes


def _pas_as_actor_critic(controller: PasController, cfg: TrainConfig) -> ActorCritic:
    """Wrap the meta nets in the ActorCritic container for uniform storage."""
    return ActorCritic(
        actor=controller.actor,
        critic=controller.critic,
        target_actor=controller.target_actor,
        target_critic=controller.target_critic,
        actor_opt=controller.actor_opt,
        critic_opt=controller.critic_opt,
        gamma=controller.gamma,
        polyak=controller.polyak,
        state_dim=controller.state_dim,
        goal_dim=controller.goal_dim,
        action_dim=controller.actor.output_dim,
    )
