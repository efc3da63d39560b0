from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from pirrt.config import PlannerParams
from pirrt.rrt_planner import (
    DistanceMetric,
    ExtendResult,
    PlanningError,
    TreeGraph,
    extend,
    nearest,
    plan,
    sample_free,
    steer,
    steering_model,
    wrap_angle,
)
from pirrt.sde_core import ControlSchedule, NoiseProfile, StateTimePoint, Trajectory, rollout
from pirrt.streams import Streams

START = StateTimePoint([-9.0, 0.0, 0.0], 0.0)
AUDIT_PARAMS = PlannerParams(budget=150, steer_samples=5)


def test_wrap_angle():
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(-0.25) == pytest.approx(-0.25)


def test_metric_terms():
    metric = DistanceMetric(heading_weight=1.0, time_weight=2.0)
    states = np.array([[3.0, 4.0, 0.1]])
    d = metric(states, np.array([1.0]), np.array([0.0, 0.0, 2 * math.pi]), 1.5)
    assert d[0] == pytest.approx(5.0 + 0.1 + 1.0)


def test_tree_grows_past_its_capacity(car):
    tree = TreeGraph(START, capacity=2)
    params = PlannerParams()
    rng = Streams(0).generator("grow")
    parent = 0
    for _ in range(4):
        traj, ff = steer(
            car,
            tree.vertex(parent),
            StateTimePoint([5.0, 0.0, 0.0], 9.0),
            3,
            5,
            rng,
            dt=0.1,
            t_f=10.0,
            metric=params.metric(),
        )
        parent = tree.add(parent, traj, ff)
    assert len(tree) == 5
    assert tree.path(4) == [0, 1, 2, 3, 4]
    assert tree.times[-1] == pytest.approx(1.2)
    with pytest.raises(ValueError):
        tree.edge(0)


def test_steer_respects_horizon_and_bounds(car):
    metric = PlannerParams().metric()
    start = StateTimePoint([0.0, 0.0, 0.0], 9.5)
    traj, ff = steer(
        car,
        start,
        StateTimePoint([5.0, 0.0, 0.0], 10.0),
        10,
        10,
        Streams(1).generator("steer"),
        dt=0.1,
        t_f=10.0,
        metric=metric,
        bounds=(-0.5, 0.5),
    )
    assert traj.steps == 5
    assert traj.times[-1] == pytest.approx(10.0)
    np.testing.assert_array_equal(traj.states[0], start.state)
    assert np.abs(ff.values).max() <= 0.5
    with pytest.raises(ValueError):
        steer(
            car,
            StateTimePoint([0.0, 0.0, 0.0], 10.0),
            start,
            1,
            10,
            Streams(1).generator(),
            dt=0.1,
            t_f=10.0,
            metric=metric,
        )


def test_sample_free_avoids_obstacles(single_slit):
    rng = Streams(2).generator("free")
    for _ in range(500):
        z = sample_free(rng, single_slit, 0.0, 10.0)
        assert not single_slit.point_collides(z.state[:2])
        assert 0.0 < z.time <= 10.0


def test_extend_is_trapped_by_past_targets(car, open_field):
    tree = TreeGraph(StateTimePoint([-9.0, 0.0, 0.0], 5.0))
    step = extend(
        tree,
        StateTimePoint([0.0, 0.0, 0.0], 4.0),
        car,
        open_field,
        PlannerParams(),
        Streams(0).generator(),
    )
    assert step.result is ExtendResult.TRAPPED
    assert len(tree) == 1


def test_start_in_collision_raises(car, single_slit):
    with pytest.raises(PlanningError):
        plan(
            car,
            single_slit,
            StateTimePoint([0.0, 2.0, 0.0], 0.0),
            single_slit.goal,
            10,
            Streams(0),
            PlannerParams(),
        )


def test_start_inside_goal_returns_empty_branch(car, open_field):
    z = StateTimePoint([9.0, 0.0, 0.0], 9.8)
    result = plan(car, open_field, z, open_field.goal, 50, Streams(0), PlannerParams())
    assert result.branch.reached_goal
    assert result.branch.trajectory.steps == 0
    assert result.iterations == 0


@pytest.mark.parametrize("world", ["open_field", "single_slit"])
def test_trees_pass_audits(request, car, world):
    env = request.getfixturevalue(world)
    for seed in range(20):
        result = plan(car, env, START, env.goal, AUDIT_PARAMS.budget, Streams(seed), AUDIT_PARAMS)
        tree = result.tree
        assert tree.audit(env) == []
        assert (tree.times <= env.t_f + 1e-9).all()
        branch = result.branch.trajectory
        np.testing.assert_array_equal(branch.states[0], START.state)
        assert np.all(np.diff(branch.times) > 0)


def test_nearest_matches_brute_force(car, open_field):
    params = PlannerParams(budget=200, steer_samples=5)
    tree = plan(car, open_field, START, open_field.goal, 200, Streams(4), params).tree
    metric = params.metric()
    rng = Streams(4).generator("queries")
    for _ in range(300):
        z = sample_free(rng, open_field, 0.0, 10.0)
        distances = [
            metric(tree.states[i : i + 1], tree.times[i : i + 1], z.state, z.time)[0]
            for i in range(len(tree))
        ]
        best = min(range(len(tree)), key=lambda i: (distances[i], i))
        assert nearest(tree, z, metric) == best


def _scattered_tree(rng: np.random.Generator, size: int) -> TreeGraph:
    tree = TreeGraph(StateTimePoint(rng.uniform(-10, 10, 3), 0.0), capacity=4)
    for _ in range(size - 1):
        parent = int(rng.integers(len(tree)))
        start = tree.vertex(parent)
        end = rng.uniform(-10, 10, 3)
        trajectory = Trajectory(
            np.stack([start.state, end]),
            np.array([start.time, start.time + rng.uniform(0.1, 1.0)]),
            ControlSchedule.zeros(1, 1, 0.1),
            NoiseProfile.zeros(1, 1, 0.1),
        )
        tree.add(parent, trajectory, ControlSchedule.zeros(1, 1, 0.1))
    return tree


@pytest.mark.parametrize("size", [1, 2, 10, 100, 1000])
def test_nearest_on_trees_of_many_sizes(size):
    rng = Streams(size).generator("scatter")
    tree = _scattered_tree(rng, size)
    assert len(tree) == size
    metric = DistanceMetric()
    for _ in range(200):
        z = StateTimePoint(rng.uniform(-10, 10, 3), rng.uniform(0.0, 10.0))
        distances = [
            metric(tree.states[i : i + 1], tree.times[i : i + 1], z.state, z.time)[0]
            for i in range(len(tree))
        ]
        best = min(range(len(tree)), key=lambda i: (distances[i], i))
        assert nearest(tree, z, metric) == best


def test_nearest_breaks_ties_toward_the_older_vertex():
    tree = TreeGraph(StateTimePoint([-8.0, 0.0, 0.0], 0.0))
    for x in (1.0, 3.0):
        trajectory = Trajectory(
            np.array([[-8.0, 0.0, 0.0], [x, 0.0, 0.0]]),
            np.array([0.0, 1.0]),
            ControlSchedule.zeros(1, 1, 0.1),
            NoiseProfile.zeros(1, 1, 0.1),
        )
        tree.add(0, trajectory, ControlSchedule.zeros(1, 1, 0.1))
    assert nearest(tree, StateTimePoint([2.0, 0.0, 0.0], 1.0), DistanceMetric()) == 1


def test_branch_replays_under_its_controls(noiseless_car, open_field):
    params = PlannerParams(budget=200, steer_samples=5)
    result = plan(noiseless_car, open_field, START, open_field.goal, 200, Streams(6), params)
    branch = result.branch
    controls = branch.controls
    assert len(controls) == branch.trajectory.steps
    assert np.abs(controls.values).max() <= 1.0
    replay = rollout(
        noiseless_car,
        START.state,
        START.time,
        controls,
        NoiseProfile.zeros(len(controls), 1, controls.dt),
    )
    np.testing.assert_allclose(replay.states, branch.trajectory.states, atol=1e-9)


def test_steering_noise_has_a_floor(noiseless_car, car):
    explorer = steering_model(noiseless_car, PlannerParams())
    assert explorer.alpha == 0.25
    quiet = replace(car, alpha=0.1)
    assert steering_model(quiet, PlannerParams()).alpha == 0.25
    assert steering_model(replace(car, alpha=1.0), PlannerParams()).alpha == 1.0
    assert steering_model(noiseless_car, PlannerParams(steer_alpha=0.1)).alpha == 0.1


def test_plan_is_reproducible(car, single_slit):
    params = PlannerParams(budget=100, steer_samples=5)
    first = plan(car, single_slit, START, single_slit.goal, 100, Streams(8), params)
    second = plan(car, single_slit, START, single_slit.goal, 100, Streams(8), params)
    np.testing.assert_array_equal(first.tree.states, second.tree.states)
    np.testing.assert_array_equal(first.branch.controls.values, second.branch.controls.values)


def test_unreached_goal_warns(car, single_slit, capsys):
    result = plan(car, single_slit, START, single_slit.goal, 5, Streams(0), PlannerParams())
    assert not result.branch.reached_goal
    assert "goal not reached" in capsys.readouterr().err
