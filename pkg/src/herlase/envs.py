"""Desk-scale kinematic point-gripper world.

One deterministic world backs every task: a gripper point moves in the unit
workspace box, an optional object can be attached (it then rides the gripper)
or dropped onto whatever supports it, and vertical wall panels block straight
line motion below their height. There is no contact physics; grasping is an
attach/detach rule with a fixed capture radius.

Tasks ("reach", "grasp", "transfer" skills plus the four manipulation tasks
and the high-wall variant) differ only in geometry, start/goal sampling and
success predicate, all carried by TaskSpec.

State vector layouts fed to networks:
    reach:         [gripper_pos(3)]
    object tasks:  [gripper_pos(3), gripper_vel(3), aperture(1),
                    object_pos(3), object_vel(3), attached(1)]  -> 14 dims
Velocities are previous-step position deltas.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

WORKSPACE_LO = 0.0
WORKSPACE_HI = 1.0
SAMPLE_MARGIN = 0.05  # starts/goals keep this margin from the box faces
OBJECT_SIZE = 0.04  # nominal cube edge; center rests at OBJECT_SIZE/2
GROUND_Z = OBJECT_SIZE / 2.0

DEFAULT_STEP_SCALE = 0.05
DEFAULT_GRASP_RADIUS = 0.05
DEFAULT_TOLERANCE = 0.05  # analog of the 3 cm tolerance
PUT_INSIDE_TOLERANCE = 0.08  # analog of 5 cm
PUT_INSIDE_HEIGHT_MAX = 0.04  # object must end near the floor
STACK_CONTACT_BAND = 0.02
DEFAULT_MAX_EPISODE_STEPS = 50
DEFAULT_MAX_SKILL_STEPS = 25

CONTAINER_CENTER = (0.75, 0.75)
CONTAINER_HALF = 0.10
CONTAINER_WALL_HEIGHT = 0.10
HIGH_WALL_HEIGHT = 1.0  # insurmountable

OBJECT_B_POS = (0.30, 0.70, GROUND_Z)  # static base object for stacking

SKILL_TASKS = ("reach", "grasp", "transfer")
TASK_NAMES = SKILL_TASKS + (
    "pick_and_move",
    "put_inside",
    "stack",
    "take_out",
    "put_inside_high_wall",
)

OBJECT_STATE_DIM = 14
REACH_STATE_DIM = 3
GRIPPER_SLICE = slice(0, 3)
OBJECT_SLICE = slice(7, 10)
ENV_ACTION_DIM = 4


class InvalidActionError(ValueError):
    """Action contained non-finite components."""


class DimensionError(ValueError):
    """Goal/state vector dimensions do not match the task."""


@dataclass(frozen=True)
class Wall:
    """Vertical rectangular panel on an axis-aligned plane.

    axis 0 means the plane x == coord spanning y in [lo, hi]; axis 1 swaps
    the roles. The panel runs from z=0 up to height.
    """

    axis: int
    coord: float
    lo: float
    hi: float
    height: float


def _container_walls(high_side: bool = False) -> tuple[Wall, ...]:
    cx, cy = CONTAINER_CENTER
    h = CONTAINER_HALF
    walls = [
        Wall(0, cx - h, cy - h, cy + h, HIGH_WALL_HEIGHT if high_side else CONTAINER_WALL_HEIGHT),
        Wall(0, cx + h, cy - h, cy + h, CONTAINER_WALL_HEIGHT),
        Wall(1, cy - h, cx - h, cx + h, CONTAINER_WALL_HEIGHT),
        Wall(1, cy + h, cx - h, cx + h, CONTAINER_WALL_HEIGHT),
    ]
    return tuple(walls)


@dataclass(frozen=True)
class TaskSpec:
    """Geometry, sampling and success rules for one environment."""

    name: str
    has_object: bool
    state_dim: int
    action_dim: int  # skill-level action dim (reach drives only dx,dy,dz)
    goal_dim: int
    tolerance: float
    achieved: str  # "gripper" or "object"
    start_mode: str  # "free" | "touching" | "attached"
    goal_mode: str  # "uniform" | "lift" | "air_or_ground" | "fixed" | "outside_container"
    fixed_goal: tuple[float, float, float] | None = None
    walls: tuple[Wall, ...] = ()
    container: tuple[float, float, float] | None = None  # (cx, cy, half)
    object_b: tuple[float, float, float] | None = None
    height_max: float | None = None
    contact_band: float | None = None
    object_outside_container: bool = False
    object_in_container: bool = False
    step_scale: float = DEFAULT_STEP_SCALE
    grasp_radius: float = DEFAULT_GRASP_RADIUS
    max_episode_steps: int = DEFAULT_MAX_EPISODE_STEPS
    max_skill_steps: int = DEFAULT_MAX_SKILL_STEPS

    @property
    def achieved_slice(self) -> slice:
        return GRIPPER_SLICE if self.achieved == "gripper" else OBJECT_SLICE


_TASK_BUILDERS = {
    "reach": dict(
        has_object=False,
        state_dim=REACH_STATE_DIM,
        action_dim=3,
        achieved="gripper",
        start_mode="free",
        goal_mode="uniform",
    ),
    "grasp": dict(
        has_object=True,
        state_dim=OBJECT_STATE_DIM,
        action_dim=4,
        achieved="object",
        start_mode="touching",
        goal_mode="lift",
    ),
    "transfer": dict(
        has_object=True,
        state_dim=OBJECT_STATE_DIM,
        action_dim=4,
        achieved="object",
        start_mode="attached",
        goal_mode="uniform",
    ),
    "pick_and_move": dict(
        has_object=True,
        state_dim=OBJECT_STATE_DIM,
        action_dim=4,
        achieved="object",
        start_mode="free",
        goal_mode="air_or_ground",
    ),
    "put_inside": dict(
        has_object=True,
        state_dim=OBJECT_STATE_DIM,
        action_dim=4,
        achieved="object",
        start_mode="free",
        goal_mode="fixed",
        fixed_goal=(CONTAINER_CENTER[0], CONTAINER_CENTER[1], GROUND_Z),
        walls=_container_walls(),
        container=(CONTAINER_CENTER[0], CONTAINER_CENTER[1], CONTAINER_HALF),
        height_max=PUT_INSIDE_HEIGHT_MAX,
        tolerance=PUT_INSIDE_TOLERANCE,
        object_outside_container=True,
    ),
    "stack": dict(
        has_object=True,
        state_dim=OBJECT_STATE_DIM,
        action_dim=4,
        achieved="object",
        start_mode="free",
        goal_mode="fixed",
        fixed_goal=(OBJECT_B_POS[0], OBJECT_B_POS[1], OBJECT_B_POS[2] + OBJECT_SIZE),
        object_b=OBJECT_B_POS,
        contact_band=STACK_CONTACT_BAND,
    ),
    "take_out": dict(
        has_object=True,
        state_dim=OBJECT_STATE_DIM,
        action_dim=4,
        achieved="object",
        start_mode="attached",
        goal_mode="outside_container",
        walls=_container_walls(),
        container=(CONTAINER_CENTER[0], CONTAINER_CENTER[1], CONTAINER_HALF),
        object_in_container=True,
    ),
    "put_inside_high_wall": dict(
        has_object=True,
        state_dim=OBJECT_STATE_DIM,
        action_dim=4,
        achieved="object",
        start_mode="free",
        goal_mode="fixed",
        fixed_goal=(CONTAINER_CENTER[0], CONTAINER_CENTER[1], GROUND_Z),
        walls=_container_walls(high_side=True),
        container=(CONTAINER_CENTER[0], CONTAINER_CENTER[1], CONTAINER_HALF),
        height_max=PUT_INSIDE_HEIGHT_MAX,
        tolerance=PUT_INSIDE_TOLERANCE,
        object_outside_container=True,
    ),
}


def make_task(name: str, **overrides) -> TaskSpec:
    """Build the TaskSpec for a task id, with optional parameter overrides
    (tolerance, step_scale, grasp_radius, max_episode_steps, max_skill_steps)."""
    if name not in _TASK_BUILDERS:
        raise ValueError(f"unknown task {name!r}; valid: {TASK_NAMES}")
    fields = dict(
        name=name,
        goal_dim=3,
        tolerance=DEFAULT_TOLERANCE,
    )
    fields.update(_TASK_BUILDERS[name])
    fields.update(overrides)
    return TaskSpec(**fields)


@dataclass
class WorldState:
    """Full simulator state. Object fields are None for the reach task."""

    gripper_pos: np.ndarray
    gripper_vel: np.ndarray
    aperture: float
    object_pos: np.ndarray | None
    object_vel: np.ndarray | None
    attached: bool
    t: int = 0

    def copy(self) -> "WorldState":
        return WorldState(
            gripper_pos=self.gripper_pos.copy(),
            gripper_vel=self.gripper_vel.copy(),
            aperture=self.aperture,
            object_pos=None if self.object_pos is None else self.object_pos.copy(),
            object_vel=None if self.object_vel is None else self.object_vel.copy(),
            attached=self.attached,
            t=self.t,
        )

    def to_vector(self, task: TaskSpec) -> np.ndarray:
        if not task.has_object:
            return self.gripper_pos.copy()
        return np.concatenate(
            [
                self.gripper_pos,
                self.gripper_vel,
                [self.aperture],
                self.object_pos,
                self.object_vel,
                [1.0 if self.attached else 0.0],
            ]
        )

    @classmethod
    def from_vector(cls, vec: np.ndarray, task: TaskSpec) -> "WorldState":
        """Rebuild a state from its vector form (t restarts at 0; the reach
        layout carries no velocity, which the kinematics never read)."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (task.state_dim,):
            raise DimensionError(f"vector shape {vec.shape} != ({task.state_dim},)")
        if not task.has_object:
            return cls(vec[0:3].copy(), np.zeros(3), 1.0, None, None, False)
        return cls(
            gripper_pos=vec[0:3].copy(),
            gripper_vel=vec[3:6].copy(),
            aperture=float(vec[6]),
            object_pos=vec[7:10].copy(),
            object_vel=vec[10:13].copy(),
            attached=bool(vec[13] >= 0.5),
        )


@dataclass
class StepResult:
    next_state: WorldState
    reward: float
    done: bool
    achieved_goal: np.ndarray


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _uniform_point(rng: np.random.Generator) -> np.ndarray:
    lo = WORKSPACE_LO + SAMPLE_MARGIN
    hi = WORKSPACE_HI - SAMPLE_MARGIN
    return rng.uniform(lo, hi, size=3)


def _in_container_footprint(xy, container, margin: float = 0.0) -> bool:
    cx, cy, half = container
    return abs(xy[0] - cx) <= half + margin and abs(xy[1] - cy) <= half + margin


def _sample_object_pos(task: TaskSpec, rng: np.random.Generator) -> np.ndarray:
    if task.object_in_container:
        cx, cy, half = task.container
        inner = half - 0.03
        xy = rng.uniform([cx - inner, cy - inner], [cx + inner, cy + inner])
        return np.array([xy[0], xy[1], GROUND_Z])
    for _ in range(200):
        p = _uniform_point(rng)
        p[2] = GROUND_Z
        if task.object_outside_container and _in_container_footprint(
            p[:2], task.container, margin=SAMPLE_MARGIN
        ):
            continue
        if task.object_b is not None:
            bx, by, _ = task.object_b
            if abs(p[0] - bx) <= OBJECT_SIZE + 0.02 and abs(p[1] - by) <= OBJECT_SIZE + 0.02:
                continue
        return p
    raise RuntimeError("could not sample an object position")  # pragma: no cover


def sample_goal(task: TaskSpec, state: WorldState, rng: np.random.Generator) -> np.ndarray:
    """Draw a goal from the task's goal distribution given the start state."""
    if task.goal_mode == "fixed":
        return np.array(task.fixed_goal, dtype=np.float64)
    if task.goal_mode == "uniform":
        return _uniform_point(rng)
    if task.goal_mode == "lift":
        # raise the object roughly in place
        xy = state.object_pos[:2] + rng.uniform(-0.02, 0.02, size=2)
        z = rng.uniform(0.10, 0.35)
        return np.clip(
            np.array([xy[0], xy[1], z]),
            WORKSPACE_LO + SAMPLE_MARGIN,
            WORKSPACE_HI - SAMPLE_MARGIN,
        )
    if task.goal_mode == "air_or_ground":
        p = _uniform_point(rng)
        if rng.uniform() < 0.5:
            p[2] = GROUND_Z
        else:
            p[2] = rng.uniform(0.10, 0.50)
        return p
    if task.goal_mode == "outside_container":
        for _ in range(200):
            p = _uniform_point(rng)
            if not _in_container_footprint(p[:2], task.container, margin=SAMPLE_MARGIN):
                if rng.uniform() < 0.5:
                    p[2] = GROUND_Z
                return p
        raise RuntimeError("could not sample a goal outside the container")  # pragma: no cover
    raise ValueError(f"unknown goal mode {task.goal_mode!r}")


def reset(task: TaskSpec, seed) -> tuple[WorldState, np.ndarray]:
    """Sample (start state, goal); deterministic given the seed / generator."""
    rng = _as_rng(seed)
    gripper = _uniform_point(rng)
    zeros = np.zeros(3)
    if not task.has_object:
        state = WorldState(gripper, zeros.copy(), 1.0, None, None, False)
        return state, sample_goal(task, state, rng)

    obj = _sample_object_pos(task, rng)
    aperture = 1.0
    attached = False
    if task.start_mode == "touching":
        # gripper starts within capture range of the object
        offset = rng.uniform(-1.0, 1.0, size=3)
        offset *= 0.6 * task.grasp_radius / max(np.linalg.norm(offset), 1e-9)
        gripper = obj + offset
        gripper[2] = max(gripper[2], GROUND_Z)
    elif task.start_mode == "attached":
        if task.object_in_container:
            cx, cy, half = task.container
            inner = half - 0.03
            xy = rng.uniform([cx - inner, cy - inner], [cx + inner, cy + inner])
            gripper = np.array([xy[0], xy[1], rng.uniform(GROUND_Z, 0.08)])
        obj = gripper.copy()
        aperture = 0.0
        attached = True
    state = WorldState(gripper, zeros.copy(), aperture, obj, zeros.copy(), attached)
    return state, sample_goal(task, state, rng)


def _support_height(x: float, y: float, task: TaskSpec) -> float:
    if task.object_b is not None:
        bx, by, bz = task.object_b
        half = OBJECT_SIZE / 2.0
        if abs(x - bx) <= half and abs(y - by) <= half:
            return bz + OBJECT_SIZE  # rest on top of the base object
    return GROUND_Z


def _truncate_by_walls(p: np.ndarray, q: np.ndarray, walls: tuple[Wall, ...]) -> np.ndarray:
    """Stop the straight move p->q just before the first wall panel it hits."""
    best_t = None
    best_wall = None
    for w in walls:
        pa, qa = p[w.axis], q[w.axis]
        if (pa - w.coord) * (qa - w.coord) >= 0.0:
            continue  # no strict crossing of the plane
        t = (w.coord - pa) / (qa - pa)
        hit = p + t * (q - p)
        other = 1 - w.axis
        if w.lo <= hit[other] <= w.hi and hit[2] <= w.height:
            if best_t is None or t < best_t:
                best_t = t
                best_wall = w
    if best_t is None:
        return q
    stop = p + best_t * (q - p)
    side = 1.0 if p[best_wall.axis] > best_wall.coord else -1.0
    stop[best_wall.axis] = best_wall.coord + side * 1e-9
    return stop


def step(task: TaskSpec, state: WorldState, action: np.ndarray, goal: np.ndarray) -> StepResult:
    """Advance one control step. Pure: the input state is not mutated.

    The 4-vector action is (dx, dy, dz, grip); components are clipped to
    [-1, 1], translation is scaled by step_scale and blocked by walls and the
    workspace box. grip < 0 closes (attaching an object within grasp_radius),
    grip > 0 opens (a held object drops to its support height).
    """
    action = np.asarray(action, dtype=np.float64)
    if action.shape != (ENV_ACTION_DIM,):
        raise InvalidActionError(f"action shape {action.shape}, expected ({ENV_ACTION_DIM},)")
    if not np.all(np.isfinite(action)):
        raise InvalidActionError("non-finite action components")
    action = np.clip(action, -1.0, 1.0)

    old_g = state.gripper_pos
    target = np.clip(old_g + task.step_scale * action[:3], WORKSPACE_LO, WORKSPACE_HI)
    new_g = _truncate_by_walls(old_g, target, task.walls)

    new = state.copy()
    new.gripper_pos = new_g
    new.gripper_vel = new_g - old_g
    grip = action[3]

    if task.has_object:
        old_o = state.object_pos
        if new.attached:
            new.object_pos = new_g.copy()
        if grip < 0.0:
            new.aperture = 0.0
            if not new.attached and np.linalg.norm(new_g - new.object_pos) <= task.grasp_radius:
                new.attached = True
                new.object_pos = new_g.copy()
        elif grip > 0.0:
            new.aperture = 1.0
            if new.attached:
                new.attached = False
                drop = new.object_pos.copy()
                drop[2] = _support_height(drop[0], drop[1], task)
                new.object_pos = drop
        new.object_vel = new.object_pos - old_o
    else:
        if grip < 0.0:
            new.aperture = 0.0
        elif grip > 0.0:
            new.aperture = 1.0

    new.t = state.t + 1
    achieved = achieved_goal(new, task)
    r = reward(achieved, goal, task)
    done = (r == 0.0) or (new.t >= task.max_episode_steps)
    return StepResult(next_state=new, reward=r, done=done, achieved_goal=achieved)


def achieved_goal(state: WorldState, task: TaskSpec) -> np.ndarray:
    """Goal-space projection of a state (gripper for reach, object otherwise)."""
    if task.achieved == "gripper":
        return state.gripper_pos.copy()
    return state.object_pos.copy()


def achieved_goal_from_vector(vec: np.ndarray, task: TaskSpec) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != task.state_dim:
        raise DimensionError(f"state vector dim {vec.shape[-1]} != {task.state_dim}")
    return vec[..., task.achieved_slice].copy()


def reward(achieved: np.ndarray, desired: np.ndarray, task: TaskSpec) -> float:
    """Binary reward: 0.0 on success, -1.0 otherwise."""
    achieved = np.asarray(achieved, dtype=np.float64)
    desired = np.asarray(desired, dtype=np.float64)
    if achieved.shape != desired.shape or achieved.shape != (task.goal_dim,):
        raise DimensionError(
            f"goal dims {achieved.shape} vs {desired.shape}, task wants ({task.goal_dim},)"
        )
    if task.contact_band is not None:
        # stacking: horizontal alignment plus resting-height contact band
        ok = (
            np.linalg.norm(achieved[:2] - desired[:2]) <= task.tolerance
            and abs(achieved[2] - desired[2]) <= task.contact_band
        )
    else:
        ok = np.linalg.norm(achieved - desired) <= task.tolerance
        if task.height_max is not None:
            ok = ok and achieved[2] <= task.height_max
    return 0.0 if ok else -1.0


def is_success(achieved: np.ndarray, desired: np.ndarray, task: TaskSpec) -> bool:
    return reward(achieved, desired, task) == 0.0
