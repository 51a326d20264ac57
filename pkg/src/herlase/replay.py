"""Goal-conditioned transitions, ring replay buffer, hindsight relabeling."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import envs
from .envs import TaskSpec


@dataclass
class Transition:
    state: np.ndarray
    goal: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """FIFO ring over flat transition arrays with uniform sampling.

    Columns are allocated lazily from the first stored transition so one
    buffer class serves every task's dimensions.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.size = 0
        self._next = 0
        self._cols: dict[str, np.ndarray] | None = None

    def _ensure_storage(self, t: Transition) -> None:
        if self._cols is not None:
            return
        self._cols = {
            "states": np.empty((self.capacity, len(t.state))),
            "goals": np.empty((self.capacity, len(t.goal))),
            "actions": np.empty((self.capacity, len(t.action))),
            "rewards": np.empty(self.capacity),
            "next_states": np.empty((self.capacity, len(t.next_state))),
            "dones": np.empty(self.capacity),
        }

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition) -> None:
        self._ensure_storage(t)
        i = self._next
        self._cols["states"][i] = t.state
        self._cols["goals"][i] = t.goal
        self._cols["actions"][i] = t.action
        self._cols["rewards"][i] = t.reward
        self._cols["next_states"][i] = t.next_state
        self._cols["dones"][i] = 1.0 if t.done else 0.0
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_episode(self, transitions: list[Transition]) -> None:
        for t in transitions:
            self.add(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return {name: col[idx] for name, col in self._cols.items()}


def her_relabel(episode: list[Transition], task: TaskSpec) -> list[Transition]:
    """Hindsight copies of an episode with the goal replaced by what the
    episode actually achieved at its end.

    The substitute goal is the achieved-goal projection of the final state;
    rewards are recomputed with the environment reward. The input transitions
    are left untouched; an empty episode relabels to nothing.
    """
    if not episode:
        return []
    final_goal = envs.achieved_goal_from_vector(episode[-1].next_state, task)
    relabeled = []
    for t in episode:
        achieved = envs.achieved_goal_from_vector(t.next_state, task)
        r = envs.reward(achieved, final_goal, task)
        relabeled.append(
            replace(t, goal=final_goal.copy(), reward=r, done=bool(r == 0.0))
        )
    return relabeled
