import numpy as np
import pytest

from herlase import envs
from herlase.envs import (
    GROUND_Z,
    InvalidActionError,
    WorldState,
    achieved_goal,
    achieved_goal_from_vector,
    make_task,
    reset,
    reward,
    step,
)


def _rollout(task, seed, n_steps=50, policy=None):
    rng = np.random.default_rng(seed)
    state, goal = reset(task, rng)
    traj = [state]
    results = []
    for _ in range(n_steps):
        a = policy(state) if policy else rng.uniform(-1, 1, size=4)
        res = step(task, state, a, goal)
        results.append(res)
        traj.append(res.next_state)
        state = res.next_state
        if res.done:
            break
    return goal, traj, results


# ---------------------------------------------------------------- reset


def test_reset_deterministic_given_seed():
    task = make_task("pick_and_move")
    s1, g1 = reset(task, 123)
    s2, g2 = reset(task, 123)
    assert np.array_equal(s1.to_vector(task), s2.to_vector(task))
    assert np.array_equal(g1, g2)


def test_transfer_reset_starts_attached():
    task = make_task("transfer")
    for seed in range(20):
        state, _ = reset(task, seed)
        assert state.attached
        assert np.array_equal(state.object_pos, state.gripper_pos)
        assert state.aperture == 0.0


def test_take_out_reset_object_grasped_inside_container():
    task = make_task("take_out")
    cx, cy, half = task.container
    for seed in range(20):
        state, goal = reset(task, seed)
        assert state.attached
        assert abs(state.object_pos[0] - cx) < half
        assert abs(state.object_pos[1] - cy) < half
        # goal lies outside the container footprint
        assert not (abs(goal[0] - cx) <= half and abs(goal[1] - cy) <= half)


def test_grasp_reset_gripper_touching_object():
    task = make_task("grasp")
    for seed in range(20):
        state, _ = reset(task, seed)
        assert not state.attached
        assert np.linalg.norm(state.gripper_pos - state.object_pos) <= task.grasp_radius


def test_pick_and_move_goals_inside_workspace():
    task = make_task("pick_and_move")
    rng = np.random.default_rng(0)
    for _ in range(1000):
        state, goal = reset(task, rng)
        assert np.all(goal >= 0.0) and np.all(goal <= 1.0)
        assert np.all(state.gripper_pos >= 0.0) and np.all(state.gripper_pos <= 1.0)
        assert np.all(state.object_pos >= 0.0) and np.all(state.object_pos <= 1.0)


def test_put_inside_object_starts_outside_container():
    task = make_task("put_inside")
    cx, cy, half = task.container
    rng = np.random.default_rng(1)
    for _ in range(200):
        state, goal = reset(task, rng)
        inside = abs(state.object_pos[0] - cx) <= half and abs(state.object_pos[1] - cy) <= half
        assert not inside
        assert np.array_equal(goal, [cx, cy, GROUND_Z])


# ---------------------------------------------------------------- step


def test_zero_action_changes_nothing_positional():
    task = make_task("pick_and_move")
    state, goal = reset(task, 5)
    res = step(task, state, np.zeros(4), goal)
    assert np.array_equal(res.next_state.gripper_pos, state.gripper_pos)
    assert np.array_equal(res.next_state.object_pos, state.object_pos)
    assert res.reward == reward(achieved_goal(state, task), goal, task)


def test_step_is_pure_and_deterministic():
    task = make_task("pick_and_move")
    state, goal = reset(task, 6)
    before = state.to_vector(task).copy()
    a = np.array([0.3, -0.7, 0.2, -1.0])
    r1 = step(task, state, a, goal)
    r2 = step(task, state, a, goal)
    assert np.array_equal(state.to_vector(task), before)
    assert np.array_equal(r1.next_state.to_vector(task), r2.next_state.to_vector(task))
    assert r1.reward == r2.reward and r1.done == r2.done


def test_scripted_grasp_and_carry():
    # drive the gripper onto the object, close, and carry it upward
    task = make_task("pick_and_move")
    state, goal = reset(task, 7)
    # teleport-style script: walk toward the object
    for _ in range(60):
        delta = state.object_pos - state.gripper_pos
        if np.linalg.norm(delta) <= task.grasp_radius / 2:
            break
        a = np.clip(delta / task.step_scale, -1, 1)
        state = step(task, state, np.array([*a, 0.0]), goal).next_state
    assert np.linalg.norm(state.gripper_pos - state.object_pos) <= task.grasp_radius

    state = step(task, state, np.array([0, 0, 0, -1.0]), goal).next_state
    assert state.attached
    assert np.array_equal(state.object_pos, state.gripper_pos)

    lifted = step(task, state, np.array([0, 0, 1.0, -1.0]), goal).next_state
    assert lifted.object_pos[2] > state.object_pos[2]
    assert np.array_equal(lifted.object_pos, lifted.gripper_pos)

    dropped = step(task, lifted, np.array([0, 0, 0, 1.0]), goal).next_state
    assert not dropped.attached
    assert dropped.object_pos[2] == GROUND_Z


def test_grip_close_far_from_object_does_not_attach():
    task = make_task("pick_and_move")
    state, goal = reset(task, 8)
    state.gripper_pos = np.array([0.2, 0.2, 0.5])
    state.object_pos = np.array([0.8, 0.8, GROUND_Z])
    res = step(task, state, np.array([0, 0, 0, -1.0]), goal)
    assert not res.next_state.attached
    assert res.next_state.aperture == 0.0


def test_high_wall_blocks_motion():
    task = make_task("put_inside_high_wall")
    wall = task.walls[0]
    assert wall.height == envs.HIGH_WALL_HEIGHT
    state, goal = reset(task, 9)
    # place the gripper just outside the tall wall, heading straight through it
    state.gripper_pos = np.array([wall.coord - 0.02, 0.75, 0.5])
    state.attached = False
    res = step(task, state, np.array([1.0, 0, 0, 0]), goal)
    assert res.next_state.gripper_pos[0] < wall.coord


def test_low_wall_can_be_crossed_above_its_height():
    task = make_task("put_inside")
    wall = task.walls[0]
    state, goal = reset(task, 10)
    state.gripper_pos = np.array([wall.coord - 0.02, 0.75, wall.height + 0.05])
    res = step(task, state, np.array([1.0, 0, 0, 0]), goal)
    assert res.next_state.gripper_pos[0] > wall.coord


def test_low_wall_blocks_below_its_height():
    task = make_task("put_inside")
    wall = task.walls[0]
    state, goal = reset(task, 11)
    state.gripper_pos = np.array([wall.coord - 0.02, 0.75, 0.05])
    res = step(task, state, np.array([1.0, 0, 0, 0]), goal)
    assert res.next_state.gripper_pos[0] < wall.coord


def test_non_finite_action_rejected():
    task = make_task("reach")
    state, goal = reset(task, 12)
    with pytest.raises(InvalidActionError):
        step(task, state, np.array([np.nan, 0, 0, 0]), goal)


def test_episode_cap_sets_done():
    task = make_task("reach")
    state, _ = reset(task, 13)
    goal = np.array([2.0, 2.0, 2.0])  # unreachable: never a success
    done = False
    steps = 0
    while not done:
        res = step(task, state, np.zeros(4), goal)
        state, done = res.next_state, res.done
        steps += 1
        assert steps <= task.max_episode_steps
    assert steps == task.max_episode_steps


# ---------------------------------------------------------------- reward


def test_reward_exact_goal_and_boundary():
    task = make_task("pick_and_move")
    g = np.array([0.5, 0.5, 0.5])
    assert reward(g, g, task) == 0.0
    just_inside = g + np.array([task.tolerance - 1e-9, 0, 0])
    just_outside = g + np.array([task.tolerance + 1e-9, 0, 0])
    assert reward(just_inside, g, task) == 0.0
    assert reward(just_outside, g, task) == -1.0


def test_put_inside_requires_low_height():
    task = make_task("put_inside")
    g = np.array(task.fixed_goal)
    held_high = np.array([g[0], g[1], g[2] + 0.05])
    assert np.linalg.norm(held_high - g) <= task.tolerance
    assert reward(held_high, g, task) == -1.0  # inside tolerance but held up
    resting = np.array([g[0] + 0.03, g[1], GROUND_Z])
    assert reward(resting, g, task) == 0.0


def test_stack_contact_band():
    task = make_task("stack")
    g = np.array(task.fixed_goal)
    aligned_resting = g + np.array([0.03, 0.0, 0.0])
    assert reward(aligned_resting, g, task) == 0.0
    hovering = g + np.array([0.0, 0.0, 0.05])
    assert reward(hovering, g, task) == -1.0
    misaligned = g + np.array([0.06, 0.0, 0.0])
    assert reward(misaligned, g, task) == -1.0


def test_reward_dimension_mismatch():
    task = make_task("reach")
    with pytest.raises(envs.DimensionError):
        reward(np.zeros(2), np.zeros(3), task)


# ------------------------------------------------------- achieved goals


def test_achieved_goal_projections():
    reach = make_task("reach")
    state, _ = reset(reach, 20)
    assert np.array_equal(achieved_goal(state, reach), state.gripper_pos)

    grasp = make_task("grasp")
    state, _ = reset(grasp, 21)
    assert np.array_equal(achieved_goal(state, grasp), state.object_pos)
    vec = state.to_vector(grasp)
    assert np.array_equal(achieved_goal_from_vector(vec, grasp), state.object_pos)


def test_step_reward_consistent_with_achieved_goal():
    # cross-check: the reward reported by step equals recomputing it from
    # the achieved-goal projection, over many random steps
    rng = np.random.default_rng(30)
    for name in ("reach", "grasp", "transfer", "pick_and_move", "put_inside", "stack"):
        task = make_task(name)
        state, goal = reset(task, rng)
        for _ in range(170 if name == "reach" else 150):
            res = step(task, state, rng.uniform(-1, 1, size=4), goal)
            assert res.reward == reward(achieved_goal(res.next_state, task), goal, task)
            assert res.reward in (-1.0, 0.0)
            state = res.next_state
            if res.done:
                state, goal = reset(task, rng)


# ---------------------------------------------------------- invariants


def test_attachment_soundness_random_trajectories():
    task = make_task("pick_and_move")
    rng = np.random.default_rng(40)
    for seed in range(30):
        _, traj, _ = _rollout(task, seed)
        for s in traj:
            if s.attached:
                assert np.linalg.norm(s.gripper_pos - s.object_pos) <= task.grasp_radius


def test_wall_impermeability_random_trajectories():
    task = make_task("put_inside_high_wall")
    tall = task.walls[0]
    rng = np.random.default_rng(41)
    for seed in range(40):
        _, traj, _ = _rollout(task, seed)
        for a, b in zip(traj, traj[1:]):
            pa, pb = a.gripper_pos, b.gripper_pos
            if (pa[0] - tall.coord) * (pb[0] - tall.coord) < 0:
                t = (tall.coord - pa[0]) / (pb[0] - pa[0])
                hit = pa + t * (pb - pa)
                within_span = tall.lo <= hit[1] <= tall.hi
                assert not (within_span and hit[2] <= tall.height)


def test_velocities_are_position_deltas():
    task = make_task("pick_and_move")
    state, goal = reset(task, 50)
    a = np.array([0.5, -0.5, 0.25, 0.0])
    res = step(task, state, a, goal)
    assert np.allclose(
        res.next_state.gripper_vel, res.next_state.gripper_pos - state.gripper_pos
    )
    assert np.allclose(
        res.next_state.object_vel, res.next_state.object_pos - state.object_pos
    )


def test_state_vector_layout():
    task = make_task("pick_and_move")
    state, _ = reset(task, 60)
    vec = state.to_vector(task)
    assert vec.shape == (14,)
    assert np.array_equal(vec[0:3], state.gripper_pos)
    assert vec[6] == state.aperture
    assert np.array_equal(vec[7:10], state.object_pos)
    assert vec[13] == float(state.attached)

    reach = make_task("reach")
    rstate, _ = reset(reach, 61)
    assert rstate.to_vector(reach).shape == (3,)


def test_task_overrides():
    task = make_task("reach", tolerance=0.1, step_scale=0.02, max_episode_steps=10)
    assert task.tolerance == 0.1
    assert task.step_scale == 0.02
    assert task.max_episode_steps == 10


def test_unknown_task_rejected():
    with pytest.raises(ValueError):
        make_task("juggle")
