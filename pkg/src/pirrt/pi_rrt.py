"""Receding-horizon PI-RRT.

Each cycle plans a baseline with RRT from the current state, samples a bundle
of noisy rollouts around it, corrects the baseline control with the
desirability-weighted noise, and executes the first few steps. RRT-only runs
the same loop without the correction.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from pirrt.config import PlannerParams, normalize_algorithm
from pirrt.pi_control import (
    CostFunctional,
    DesirabilityWeights,
    compose_policy,
    control_correction,
    cost_to_go,
    goal_distance_cost,
    step_weights,
    tempered_weights,
)
from pirrt.rrt_planner import Branch, PlanningError, TreeGraph, plan
from pirrt.sde_core import (
    TIME_TOLERANCE,
    ControlSchedule,
    DynamicsModel,
    NoiseProfile,
    StateTimePoint,
    Trajectory,
    concatenate,
    rollout,
    rollout_batch,
    sample_noise,
)
from pirrt.streams import Streams
from pirrt.world_models import Corridor, Environment, GoalSet


class Outcome(str, Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    GOAL_MISS = "goal_miss"
    TIMEOUT = "timeout"

    @property
    def failed(self) -> bool:
        return self is not Outcome.SUCCESS


@dataclass(frozen=True, slots=True)
class Bundle:
    trajectories: tuple[Trajectory, ...]
    costs: np.ndarray
    weights: DesirabilityWeights
    collided: np.ndarray

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def finite_costs(self) -> np.ndarray:
        return self.costs[np.isfinite(self.costs)]


@dataclass(frozen=True, slots=True)
class ReplanCycleRecord:
    cycle_index: int
    start: StateTimePoint
    baseline: Branch
    bundle: Bundle | None
    delta: ControlSchedule | None
    u_pi: ControlSchedule
    executed: Trajectory
    collided: bool = False
    fallback: bool = False
    tree: TreeGraph | None = None
    tree_size: int = 0
    # where the executed path first touched an obstacle or left the workspace
    collision_point: np.ndarray | None = None


@dataclass(frozen=True, slots=True)
class MissionResult:
    algorithm: str
    trajectory: Trajectory
    cycles: tuple[ReplanCycleRecord, ...]
    outcome: Outcome
    corridor: Corridor | None

    @property
    def final(self) -> StateTimePoint:
        return self.trajectory.end

    @property
    def collision_point(self) -> np.ndarray | None:
        if self.outcome is not Outcome.COLLISION or not self.cycles:
            return None
        return self.cycles[-1].collision_point


def mission_steps(env: Environment, dt: float) -> int:
    if env.t_f <= env.t_init:
        return 0
    return int(math.ceil((env.t_f - env.t_init) / dt - TIME_TOLERANCE))


def terminal_goal(env: Environment, dt: float) -> GoalSet:
    """The goal set narrowed to arrival within half a step of t_f, where success is judged."""
    lo = max(env.goal.time_window[0], env.t_f - 0.5 * dt)
    return replace(env.goal, time_window=(min(lo, env.t_f - TIME_TOLERANCE), env.t_f))


def completion_controls(bounds: tuple[float, float], choices: int) -> np.ndarray:
    """Constant turn rates tried when a branch stops short of t_f, middle first."""
    lower, upper = bounds
    if choices == 1:
        return np.array([0.5 * (lower + upper)])
    grid = np.linspace(lower, upper, choices)
    middle = 0.5 * (lower + upper)
    return grid[np.argsort(np.abs(grid - middle), kind="stable")]


def complete_baseline(
    model: DynamicsModel,
    env: Environment,
    cost: CostFunctional,
    branch: Branch,
    steps: int,
    params: PlannerParams,
) -> Branch:
    """Cut the branch, or extend it to exactly ``steps`` steps.

    The extension holds one constant control from ``completion_controls``;
    collision-free candidates beat colliding ones, then the lowest terminal
    cost wins.
    """
    trajectory = branch.trajectory
    if trajectory.steps >= steps:
        return Branch(trajectory.head(steps), branch.reached_goal, branch.leaf)
    extra = steps - trajectory.steps
    m, dt = model.control_dim, trajectory.dt
    levels = completion_controls(params.control_bounds, params.completion_controls)
    controls = np.broadcast_to(levels[:, None, None], (levels.size, extra, m))
    states = rollout_batch(
        model, trajectory.states[-1], controls, np.zeros((levels.size, extra, m)), dt
    )
    blocked = np.array([env.trajectory_collides(s) for s in states])
    terminal = np.asarray(cost.terminal_cost(states[:, -1]), dtype=float)
    best = int(np.lexsort((terminal, blocked))[0])
    times = trajectory.times[-1] + dt * np.arange(extra + 1)
    tail = Trajectory(
        states[best],
        times,
        ControlSchedule(np.array(controls[best]), dt),
        NoiseProfile.zeros(extra, m, dt),
    )
    return Branch(concatenate([trajectory, tail]), branch.reached_goal, branch.leaf)


def sample_bundle(
    model: DynamicsModel, baseline: Branch, members: int, streams: Streams
) -> tuple[Trajectory, ...]:
    """``members`` rollouts from the baseline start under its controls, each on its own stream."""
    if members < 1:
        raise ValueError(f"bundle size must be >= 1, got {members}")
    start = baseline.trajectory
    controls = baseline.controls
    steps, dt, m = len(controls), controls.dt, model.control_dim
    noises = [
        sample_noise(streams.generator(k), steps, m, dt, streams.child(k).tag)
        for k in range(members)
    ]
    states = rollout_batch(
        model, start.states[0], controls.values, np.stack([n.increments for n in noises]), dt
    )
    return tuple(
        Trajectory(states[k], start.times, controls, noises[k]) for k in range(members)
    )


def _correct(
    model: DynamicsModel,
    baseline: Branch,
    cost: CostFunctional,
    params: PlannerParams,
    streams: Streams,
) -> tuple[Bundle | None, ControlSchedule | None]:
    rho = model.rho_magnitude
    u = baseline.controls
    for attempt in range(2):
        draw = streams.child("bundle", attempt)
        members = sample_bundle(model, baseline, params.bundle_size, draw)
        states = np.stack([traj.states for traj in members])
        increments = np.stack([traj.noise.increments for traj in members])
        if cost.collides is None:
            collided = np.zeros(len(members), dtype=bool)
        else:
            collided = np.array([cost.collides(s) for s in states])
        ctg = cost_to_go(
            states, baseline.trajectory.times, u.values, increments, collided, cost, rho
        )
        if np.isfinite(ctg[:, 0]).any():
            break
    else:
        print(
            f"Warning: all {params.bundle_size} bundle samples collide at "
            f"t={baseline.trajectory.times[0]:.2f}; executing the RRT control",
            file=sys.stderr,
        )
        return None, None
    floor = params.min_effective_samples
    whole = tempered_weights(ctg[:, 0], rho, floor)
    bundle = Bundle(members, ctg[:, 0].copy(), whole, collided)
    weights = step_weights(ctg, rho, floor) if params.per_step_weights else whole
    delta = control_correction(weights, [traj.noise for traj in members], rho)
    return bundle, delta


def _rebase(model: DynamicsModel, branch: Branch, controls: ControlSchedule) -> Branch:
    """Noiseless rollout of ``controls`` from the branch start, the next sampling policy."""
    start = branch.trajectory
    m = model.control_dim
    coast = rollout(
        model,
        start.states[0],
        start.times[0],
        controls,
        NoiseProfile.zeros(len(controls), m, controls.dt),
    )
    return Branch(coast, branch.reached_goal, branch.leaf)


def replan_cycle(
    model: DynamicsModel,
    env: Environment,
    cost: CostFunctional,
    current: StateTimePoint,
    params: PlannerParams,
    streams: Streams,
    *,
    remaining_steps: int,
    algorithm: str = "pirrt",
    cycle_index: int = 0,
    previous: ReplanCycleRecord | None = None,
    keep_tree: bool = False,
) -> ReplanCycleRecord:
    algorithm = normalize_algorithm(algorithm)
    if remaining_steps < 1:
        raise ValueError("no time left to replan")
    if env.point_collides(current.state[:2]):
        raise PlanningError(f"cycle {cycle_index} starts in collision")
    m, dt = model.control_dim, params.dt
    tree = None
    tree_size = 0
    if params.replan_mode == "track" and previous is not None:
        controls = previous.u_pi.tail(previous.executed.steps)
        coast = rollout(
            model, current.state, current.time, controls, NoiseProfile.zeros(len(controls), m, dt)
        )
        branch = Branch(coast, previous.baseline.reached_goal, previous.baseline.leaf)
    else:
        goal = terminal_goal(env, dt)
        result = plan(model, env, current, goal, params.budget, streams.child("plan"), params)
        branch = result.branch
        tree_size = len(result.tree)
        if keep_tree:
            tree = result.tree
    baseline = complete_baseline(model, env, cost, branch, remaining_steps, params)
    u_rrt = baseline.controls

    bundle, delta = None, None
    fallback = False
    u_pi = u_rrt
    if algorithm == "pirrt" and params.bundle_size > 0:
        sampling = baseline
        for iteration in range(params.pi_iterations):
            draw = streams if iteration == 0 else streams.child("iterate", iteration)
            corrected = _correct(model, sampling, cost, params, draw)
            if corrected[1] is None:
                fallback = iteration == 0
                break
            bundle, delta = corrected
            u_pi = compose_policy(sampling.controls, delta, params.control_bounds)
            if iteration + 1 < params.pi_iterations:
                sampling = _rebase(model, sampling, u_pi)

    steps = min(params.execute_steps, remaining_steps)
    noise = sample_noise(streams.generator("execute"), steps, m, dt, streams.child("execute").tag)
    executed = rollout(model, current.state, current.time, u_pi.head(steps), noise)
    contact = env.first_contact(executed.states)
    if contact is not None:
        executed = executed.head(contact.index)
    return ReplanCycleRecord(
        cycle_index=cycle_index,
        start=current,
        baseline=baseline,
        bundle=bundle,
        delta=delta,
        u_pi=u_pi,
        executed=executed,
        collided=contact is not None,
        fallback=fallback,
        tree=tree,
        tree_size=tree_size,
        collision_point=None if contact is None else contact.point,
    )


def run_mission(
    model: DynamicsModel,
    env: Environment,
    cost: CostFunctional,
    z_init: StateTimePoint,
    params: PlannerParams,
    streams: Streams,
    *,
    algorithm: str = "pirrt",
    deadline: float | None = None,
    keep_trees: bool = False,
) -> MissionResult:
    """Chain replan cycles from ``z_init`` until t_f or a collision.

    ``deadline`` is a ``time.monotonic()`` value checked between cycles.
    """
    algorithm = normalize_algorithm(algorithm)
    if env.point_collides(z_init.state[:2]):
        raise PlanningError(f"start state {z_init.state.tolist()} is in collision")
    total = mission_steps(env, params.dt)
    pieces = [Trajectory.stationary(z_init, model.control_dim, params.dt)]
    cycles: list[ReplanCycleRecord] = []
    current = z_init
    done = 0
    outcome = None
    previous = None
    while done < total:
        if deadline is not None and time.monotonic() > deadline:
            print(f"Warning: mission timed out at t={current.time:.2f}", file=sys.stderr)
            outcome = Outcome.TIMEOUT
            break
        record = replan_cycle(
            model,
            env,
            cost,
            current,
            params,
            streams.child("cycle", len(cycles)),
            remaining_steps=total - done,
            algorithm=algorithm,
            cycle_index=len(cycles),
            previous=previous,
            keep_tree=keep_trees,
        )
        cycles.append(record)
        pieces.append(record.executed)
        done += record.executed.steps
        current = record.executed.end
        previous = record
        if record.collided:
            outcome = Outcome.COLLISION
            break
    trajectory = concatenate(pieces)
    if outcome is None:
        end = trajectory.end
        reached = env.goal.contains(end.state, end.time)
        outcome = Outcome.SUCCESS if reached else Outcome.GOAL_MISS
    return MissionResult(
        algorithm=algorithm,
        trajectory=trajectory,
        cycles=tuple(cycles),
        outcome=outcome,
        corridor=env.classify(trajectory.states),
    )


def run_rrt_only(
    model: DynamicsModel,
    env: Environment,
    z_init: StateTimePoint,
    params: PlannerParams,
    streams: Streams,
    *,
    deadline: float | None = None,
    keep_trees: bool = False,
) -> MissionResult:
    """The same receding-horizon loop executing u_RRT as planned."""
    cost = goal_distance_cost(env, params.terminal_weight)
    return run_mission(
        model,
        env,
        cost,
        z_init,
        params,
        streams,
        algorithm="rrt",
        deadline=deadline,
        keep_trees=keep_trees,
    )
