"""Look-ahead tree search over skill outcome models, and the exploration
policy that drives it.

From the current real state the search repeatedly samples (skill, sub-goal)
candidates, prunes the ones the success models call unlikely (u <= 0.5),
steps the survivors through the learned coarse dynamics, and expands
breadth-first to a fixed height. Leaves are scored by accumulated edge
rewards plus the negative Euclidean distance between the leaf's achieved-goal
projection and the task goal; the first (skill, sub-goal) of the best path is
executed for real until the skill terminates, then planning repeats from the
newly reached state.

Edge rewards come from the skill critics. With the {-1, 0} reward convention
a critic value is roughly the negative time-to-success, so summing raw values
over a path systematically favours chains of trivially short hops (three
lazy near-reaches outscore reach+grasp+transfer by construction, since the
distance term is bounded by the workspace diagonal while critic sums are
not). The default therefore rescales each edge to 1 + (1-gamma)*Q in [0, 1],
an estimate of gamma^(steps-to-success) -- reliability discounted by speed --
which restores the balance between edge sums and the goal-distance term.
Goal-achieving leaves promoted above the search height are padded with one
perfect edge per unexpanded level so shorter successful paths are not
penalized for skipping levels. Set raw_q_edges for the unscaled variant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import envs
from .envs import TaskSpec
from .skill_models import SkillBundle
from .training import EpsilonGateExplorer, RunRngs, TrainConfig, TrainResult, train_policy


class MissingSkillError(RuntimeError):
    """A skill bundle lacks its trained policy or outcome models."""


@dataclass
class SearchConfig:
    branching: int = 5
    height: int = 3
    prune_threshold: float = 0.5
    raw_q_edges: bool = False

    def __post_init__(self):
        if self.branching < 1 or self.height < 1:
            raise ValueError("branching and height must be >= 1")
        if not 0.0 <= self.prune_threshold <= 1.0:
            raise ValueError("prune_threshold must lie in [0, 1]")


@dataclass
class TraceNode:
    """One sampled candidate during a search (kept for the enumeration oracle
    and the optional trace dump)."""

    node_id: int
    parent_id: int
    depth: int
    skill_id: str
    subgoal: np.ndarray
    u: float
    edge_q: float
    edge_value: float
    pruned: bool
    is_leaf: bool
    promoted: bool
    r_final: float | None
    path_score: float | None


@dataclass
class _Node:
    state: np.ndarray
    depth: int
    edge_sum: float
    node_id: int
    first_bundle: "SkillBundle | None"
    first_subgoal: np.ndarray | None


def edge_value_from_q(q: float, gamma: float, raw: bool) -> float:
    """Edge reward for a critic value: raw, or rescaled into [0, 1]."""
    if raw:
        return q
    floor = -1.0 / (1.0 - gamma)
    return 1.0 + (1.0 - gamma) * float(np.clip(q, floor, 0.0))


def perfect_edge_value(gamma: float, raw: bool) -> float:
    """The edge reward of an ideal stay-at-goal hop, used to pad promoted
    leaves (a solved state neither gains nor loses by waiting)."""
    return 0.0 if raw else 1.0


def score_path(
    edge_values: list[float] | np.ndarray,
    leaf_achieved: np.ndarray,
    goal: np.ndarray,
    padding: float = 0.0,
) -> float:
    """Total path reward: sum of edge rewards plus the negative Euclidean
    distance from the leaf's achieved-goal projection to the task goal."""
    r_final = -float(np.linalg.norm(np.asarray(leaf_achieved) - np.asarray(goal)))
    return float(np.sum(edge_values)) + padding + r_final


def sample_candidates(
    skills: list[SkillBundle],
    branching: int,
    state_vec: np.ndarray,
    task: TaskSpec,
    rng: np.random.Generator,
) -> list[tuple[int, np.ndarray]]:
    """Draw `branching` (skill index, sub-goal) pairs with replacement; skill
    identities uniform, sub-goals from each skill's own sampler."""
    out = []
    for _ in range(branching):
        idx = int(rng.integers(0, len(skills)))
        subgoal = skills[idx].space.sample_subgoal(state_vec, task, rng)
        out.append((idx, subgoal))
    return out


def tree_search(
    state_vec: np.ndarray,
    goal: np.ndarray,
    skills: list[SkillBundle],
    task: TaskSpec,
    cfg: SearchConfig,
    rng: np.random.Generator,
    trace: list[TraceNode] | None = None,
) -> tuple[SkillBundle, np.ndarray] | None:
    """Run one search; returns the first (skill, sub-goal) of the best path,
    or None when no candidate survives pruning anywhere.

    Appends every sampled candidate to `trace` when given, so tests can
    re-enumerate all paths exhaustively.
    """
    if not skills:
        return None
    for b in skills:
        if b.dynamics is None or b.success is None:
            raise MissingSkillError(f"skill {b.skill_id!r} has no fitted outcome models")

    root = _Node(
        state=np.asarray(state_vec, dtype=np.float64),
        depth=0,
        edge_sum=0.0,
        node_id=0,
        first_bundle=None,
        first_subgoal=None,
    )
    frontier = [root]
    next_id = 1
    best_score = None
    best_first: tuple[SkillBundle, np.ndarray] | None = None

    while frontier:
        node = frontier.pop(0)
        for idx, subgoal in sample_candidates(skills, cfg.branching, node.state, task, rng):
            bundle = skills[idx]
            node_id = next_id
            next_id += 1
            u = float(bundle.success.predict(node.state, subgoal))
            if u <= cfg.prune_threshold:
                if trace is not None:
                    trace.append(
                        TraceNode(node_id, node.node_id, node.depth + 1,
                                  bundle.skill_id, subgoal, u, np.nan, np.nan,
                                  True, False, False, None, None)
                    )
                continue
            q = bundle.q_value(node.state, subgoal, task)
            edge = edge_value_from_q(q, bundle.gamma, cfg.raw_q_edges)
            child_state = bundle.dynamics.predict(node.state, subgoal)
            depth = node.depth + 1
            edge_sum = node.edge_sum + edge
            achieved = child_state[task.achieved_slice]
            promoted = (
                float(np.linalg.norm(achieved - goal)) <= task.tolerance
                and depth < cfg.height
            )
            is_leaf = promoted or depth >= cfg.height
            first_bundle = node.first_bundle if node.first_bundle is not None else bundle
            first_subgoal = (
                node.first_subgoal if node.first_subgoal is not None else subgoal
            )
            r_final = -float(np.linalg.norm(achieved - goal))
            path_score = None
            if is_leaf:
                padding = (cfg.height - depth) * perfect_edge_value(
                    bundle.gamma, cfg.raw_q_edges
                )
                path_score = score_path([edge_sum], achieved, goal, padding=padding)
                # edge_sum already accumulates the whole chain
                if best_score is None or path_score > best_score:
                    best_score = path_score
                    best_first = (first_bundle, first_subgoal)
            else:
                frontier.append(
                    _Node(child_state, depth, edge_sum, node_id, first_bundle, first_subgoal)
                )
            if trace is not None:
                trace.append(
                    TraceNode(node_id, node.node_id, depth, bundle.skill_id,
                              subgoal, u, q, edge, False, is_leaf, promoted,
                              r_final, path_score)
                )
    return best_first


def write_trace_csv(path, trace: list[TraceNode]) -> None:
    import csv
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["node_id", "parent_id", "depth", "skill_id",
             "subgoal_x", "subgoal_y", "subgoal_z", "u", "edge_q", "edge_value",
             "pruned", "is_leaf", "promoted", "r_final", "path_score"]
        )
        for t in trace:
            writer.writerow(
                [t.node_id, t.parent_id, t.depth, t.skill_id,
                 *[repr(float(v)) for v in t.subgoal],
                 repr(float(t.u)), repr(float(t.edge_q)), repr(float(t.edge_value)),
                 int(t.pruned), int(t.is_leaf), int(t.promoted),
                 "" if t.r_final is None else repr(float(t.r_final)),
                 "" if t.path_score is None else repr(float(t.path_score))]
            )


@dataclass
class SkillExecutionState:
    """Bookkeeping for the skill currently being executed in the real world."""

    bundle: SkillBundle
    subgoal: np.ndarray
    steps_in_skill: int = 0
    terminated: bool = False


def check_skill_termination(
    exec_state: SkillExecutionState,
    new_vec: np.ndarray,
    task: TaskSpec,
    goal: np.ndarray | None = None,
) -> bool:
    """A skill execution ends when its sub-goal is achieved, its step cap is
    hit, or the overall task goal is already reached."""
    bundle = exec_state.bundle
    achieved_sub = bundle.space.achieved(new_vec, task)
    if np.linalg.norm(achieved_sub - exec_state.subgoal) <= bundle.space.tolerance:
        return True
    if exec_state.steps_in_skill >= bundle.max_skill_steps:
        return True
    if goal is not None:
        achieved_task = np.asarray(new_vec)[task.achieved_slice]
        if envs.reward(achieved_task, goal, task) == 0.0:
            return True
    return False


class LookaheadExplorer(EpsilonGateExplorer):
    """Gated exploration that, when the gate opens, plans with tree search and
    then drives the chosen skill's own policy until the skill terminates."""

    def __init__(self, ac, task, cfg, rngs, skills: list[SkillBundle],
                 search: SearchConfig):
        super().__init__(ac, task, cfg, rngs)
        self.skills = skills
        self.search = search
        self._exec: SkillExecutionState | None = None
        self.plans = 0
        self.plan_failures = 0

    def begin_episode(self) -> None:
        self._exec = None

    def skill_active(self) -> bool:
        return self._exec is not None and not self._exec.terminated

    def _plan(self, state_vec: np.ndarray, goal: np.ndarray) -> bool:
        if not self.skills:
            return False
        self.plans += 1
        result = tree_search(
            state_vec, goal, self.skills, self.task, self.search, self.rngs.tree
        )
        if result is None:
            self.plan_failures += 1
            return False
        bundle, subgoal = result
        self._exec = SkillExecutionState(bundle, subgoal)
        return True

    def _skill_action(self, state_vec: np.ndarray, goal: np.ndarray) -> np.ndarray:
        ex = self._exec
        a = ex.bundle.policy_action(state_vec, ex.subgoal, self.task)
        return ex.bundle.space.embed_action(a)[: self.task.action_dim]

    def observe(self, next_vec: np.ndarray, goal: np.ndarray) -> None:
        if self._exec is None or self._exec.terminated:
            return
        self._exec.steps_in_skill += 1
        if check_skill_termination(self._exec, next_vec, self.task, goal):
            self._exec = None  # replan at the next decision point


def herlase_train(
    task: TaskSpec,
    skills: list[SkillBundle],
    cfg: TrainConfig,
    search: SearchConfig,
    seed: int,
) -> TrainResult:
    """Train a task policy with look-ahead exploration (the full method)."""
    for b in skills:
        if b.dynamics is None or b.success is None:
            raise MissingSkillError(
                f"skill {b.skill_id!r} is missing fitted outcome models"
            )

    def factory(ac, task_, cfg_, rngs: RunRngs):
        return LookaheadExplorer(ac, task_, cfg_, rngs, skills, search)

    return train_policy(task, cfg, seed, factory)
