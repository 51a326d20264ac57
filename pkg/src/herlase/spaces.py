"""Adapters between skill-specific spaces and the shared task space.

Skills see abstracted views of the world: the reach skill controls only the
gripper translation and its state is the gripper position, while grasp and
transfer use the full object task space. These adapters project task states
down to skill states, pad skill actions back up to environment actions, and
draw skill sub-goals from the same distributions the skills were trained on
(which is what makes success/dynamics models queried at plan time meaningful).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import envs
from .envs import TaskSpec

WORKSPACE_SAMPLE_LO = envs.WORKSPACE_LO + envs.SAMPLE_MARGIN
WORKSPACE_SAMPLE_HI = envs.WORKSPACE_HI - envs.SAMPLE_MARGIN
GRASP_SUBGOAL_XY_JITTER = 0.02
GRASP_SUBGOAL_Z = (0.10, 0.35)


@dataclass(frozen=True)
class SkillSpace:
    """Dimension bookkeeping and conversions for one skill."""

    skill_id: str
    state_dim: int
    action_dim: int
    tolerance: float

    def project_state(self, host_vec: np.ndarray, host: TaskSpec) -> np.ndarray:
        """Task-space state -> skill-space state."""
        host_vec = np.asarray(host_vec, dtype=np.float64)
        if host_vec.shape[-1] != host.state_dim:
            raise envs.DimensionError(
                f"host vector dim {host_vec.shape[-1]} != {host.state_dim}"
            )
        if self.state_dim == envs.REACH_STATE_DIM:
            return host_vec[..., envs.GRIPPER_SLICE].copy()
        if host.state_dim != self.state_dim:
            raise envs.DimensionError(
                f"skill {self.skill_id!r} needs a {self.state_dim}-dim host state"
            )
        return host_vec.copy()

    def embed_action(self, skill_action: np.ndarray) -> np.ndarray:
        """Skill action -> 4-dim environment action (reach leaves grip neutral)."""
        skill_action = np.asarray(skill_action, dtype=np.float64)
        if skill_action.shape[-1] == envs.ENV_ACTION_DIM:
            return skill_action.copy()
        padded = np.zeros(skill_action.shape[:-1] + (envs.ENV_ACTION_DIM,))
        padded[..., : skill_action.shape[-1]] = skill_action
        return padded

    def achieved(self, host_vec: np.ndarray, host: TaskSpec) -> np.ndarray:
        """The skill's own achieved-goal projection of a host-task state."""
        host_vec = np.asarray(host_vec, dtype=np.float64)
        if self.skill_id == "reach":
            return host_vec[..., envs.GRIPPER_SLICE].copy()
        return host_vec[..., envs.OBJECT_SLICE].copy()

    def sample_subgoal(
        self, host_vec: np.ndarray, host: TaskSpec, rng: np.random.Generator
    ) -> np.ndarray:
        """Draw a sub-goal matching the skill's training goal distribution."""
        if self.skill_id == "grasp":
            if not host.has_object:
                raise envs.DimensionError("grasp sub-goals need an object in the host task")
            obj = np.asarray(host_vec)[envs.OBJECT_SLICE]
            xy = obj[:2] + rng.uniform(
                -GRASP_SUBGOAL_XY_JITTER, GRASP_SUBGOAL_XY_JITTER, size=2
            )
            z = rng.uniform(*GRASP_SUBGOAL_Z)
            return np.clip(
                np.array([xy[0], xy[1], z]), WORKSPACE_SAMPLE_LO, WORKSPACE_SAMPLE_HI
            )
        return rng.uniform(WORKSPACE_SAMPLE_LO, WORKSPACE_SAMPLE_HI, size=3)


def skill_space(skill_id: str, **task_overrides) -> SkillSpace:
    """SkillSpace for one of the trainable skills (reach, grasp, transfer)."""
    if skill_id not in envs.SKILL_TASKS:
        raise ValueError(f"unknown skill {skill_id!r}; valid: {envs.SKILL_TASKS}")
    task = envs.make_task(skill_id, **task_overrides)
    return SkillSpace(
        skill_id=skill_id,
        state_dim=task.state_dim,
        action_dim=task.action_dim,
        tolerance=task.tolerance,
    )
