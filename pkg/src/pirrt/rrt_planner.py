"""RRT in state-time space Z = X x T with sampled-rollout steering.

Vertices carry a time stamp; edges only go forward in time. Steering draws
unforced noisy rollouts and keeps the one ending closest to the target, and
stores the noise-equivalent feedforward so the branch can be replayed as a
plain control schedule.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from pirrt.config import PlannerParams
from pirrt.sde_core import (
    ControlSchedule,
    DynamicsModel,
    NoiseProfile,
    StateTimePoint,
    Trajectory,
    rollout_batch,
    steps_between,
)
from pirrt.streams import Streams
from pirrt.world_models import Environment, GoalSet

REJECTION_BUDGET = 10_000


class PlanningError(RuntimeError):
    """The planner cannot start or cannot sample the free space."""


def wrap_angle(angle: np.ndarray | float) -> np.ndarray | float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True, slots=True)
class DistanceMetric:
    """d = |Δxy| + heading_weight |wrap(Δθ)| + time_weight |Δt|."""

    heading_weight: float = 1.0
    time_weight: float = 2.0

    def __call__(
        self, states: np.ndarray, times: np.ndarray, state: np.ndarray, time: float
    ) -> np.ndarray:
        delta = states[..., :2] - state[:2]
        distance = np.hypot(delta[..., 0], delta[..., 1])
        if states.shape[-1] > 2:
            distance = distance + self.heading_weight * np.abs(
                wrap_angle(states[..., 2] - state[2])
            )
        return distance + self.time_weight * np.abs(times - time)


@dataclass(frozen=True, slots=True)
class Edge:
    parent: int
    trajectory: Trajectory
    feedforward: ControlSchedule


class TreeGraph:
    """Single-writer tree; vertex i > 0 is reached by ``edge(i)`` from ``parent(i)``."""

    def __init__(self, root: StateTimePoint, capacity: int = 1024) -> None:
        self._states = np.empty((capacity, root.state.shape[0]))
        self._times = np.empty(capacity)
        self._states[0] = root.state
        self._times[0] = root.time
        self._parents: list[int] = [-1]
        self._edges: list[Edge] = []

    def __len__(self) -> int:
        return len(self._parents)

    @property
    def states(self) -> np.ndarray:
        return self._states[: len(self)]

    @property
    def times(self) -> np.ndarray:
        return self._times[: len(self)]

    @property
    def edges(self) -> list[Edge]:
        return list(self._edges)

    def vertex(self, index: int) -> StateTimePoint:
        return StateTimePoint(self._states[index], self._times[index])

    def parent(self, index: int) -> int:
        return self._parents[index]

    def edge(self, index: int) -> Edge:
        if index == 0:
            raise ValueError("the root has no incoming edge")
        return self._edges[index - 1]

    def add(self, parent: int, trajectory: Trajectory, feedforward: ControlSchedule) -> int:
        index = len(self)
        if index == self._states.shape[0]:
            self._states = np.concatenate([self._states, np.empty_like(self._states)])
            self._times = np.concatenate([self._times, np.empty_like(self._times)])
        self._states[index] = trajectory.states[-1]
        self._times[index] = trajectory.times[-1]
        self._parents.append(parent)
        self._edges.append(Edge(parent, trajectory, feedforward))
        return index

    def path(self, leaf: int) -> list[int]:
        """Vertex indices root -> leaf."""
        chain = [leaf]
        while self._parents[chain[-1]] != -1:
            chain.append(self._parents[chain[-1]])
        return chain[::-1]

    def audit(self, env: Environment) -> list[str]:
        """Structural problems: roots, time order, edge endpoints, collisions."""
        problems = []
        roots = [i for i, p in enumerate(self._parents) if p == -1]
        if roots != [0]:
            problems.append(f"expected a single root at 0, found {roots}")
        for child in range(1, len(self)):
            edge = self.edge(child)
            parent = self._parents[child]
            if not parent < child:
                problems.append(f"vertex {child} has later parent {parent}")
            if not self._times[parent] < self._times[child]:
                problems.append(f"edge {parent}->{child} does not advance time")
            if not np.array_equal(edge.trajectory.states[0], self._states[parent]):
                problems.append(f"edge {parent}->{child} does not start at its parent")
            if not np.array_equal(edge.trajectory.states[-1], self._states[child]):
                problems.append(f"edge {parent}->{child} does not end at its child")
            if env.trajectory_collides(edge.trajectory.states):
                problems.append(f"edge {parent}->{child} collides")
        return problems


@dataclass(frozen=True, slots=True)
class Branch:
    """Root-to-leaf path as a replayable baseline.

    ``trajectory`` holds the tree states with ``controls`` as its control
    schedule and zero noise.
    """

    trajectory: Trajectory
    reached_goal: bool
    leaf: int

    @property
    def controls(self) -> ControlSchedule:
        return self.trajectory.controls


class ExtendResult(str, Enum):
    ADVANCED = "advanced"
    TRAPPED = "trapped"


@dataclass(frozen=True, slots=True)
class Extension:
    result: ExtendResult
    vertex: int | None = None


@dataclass(slots=True)
class PlanResult:
    tree: TreeGraph
    branch: Branch
    iterations: int


def sample_free(
    rng: np.random.Generator, env: Environment, t_init: float, t_f: float
) -> StateTimePoint:
    """Uniform over the workspace box, headings and (t_init, t_f], outside obstacles."""
    bounds = env.bounds
    for _ in range(REJECTION_BUDGET):
        x = rng.uniform(bounds.x_lo, bounds.x_hi)
        y = rng.uniform(bounds.y_lo, bounds.y_hi)
        theta = rng.uniform(-math.pi, math.pi)
        time = t_f - rng.uniform(0.0, t_f - t_init)
        if not env.point_collides(np.array([x, y])):
            return StateTimePoint(np.array([x, y, theta]), time)
    raise PlanningError(f"no free sample in {REJECTION_BUDGET} draws; is the workspace blocked?")


def nearest(tree: TreeGraph, z: StateTimePoint, metric: DistanceMetric) -> int:
    if len(tree) == 0:
        raise ValueError("nearest on an empty tree")
    return int(np.argmin(metric(tree.states, tree.times, z.state, z.time)))


def steer(
    model: DynamicsModel,
    start: StateTimePoint,
    toward: StateTimePoint,
    samples: int,
    horizon_steps: int,
    rng: np.random.Generator,
    *,
    dt: float,
    t_f: float,
    metric: DistanceMetric,
    bounds: tuple[float, float] = (-1.0, 1.0),
) -> tuple[Trajectory, ControlSchedule]:
    """Best of ``samples`` unforced rollouts from ``start`` toward ``toward``.

    The model's alpha sets the exploration noise. Increments are clipped so
    that the feedforward alpha * dw / dt stays within ``bounds``.
    """
    if samples < 1:
        raise ValueError(f"steering needs at least one sample, got {samples}")
    steps = min(horizon_steps, steps_between(start.time, t_f, dt))
    if steps < 1:
        raise ValueError(f"no room to steer from t={start.time} before t_f={t_f}")
    m = model.control_dim
    increments = rng.normal(0.0, math.sqrt(dt), size=(samples, steps, m))
    if not model.is_noiseless:
        lower, upper = bounds
        increments = np.clip(increments, lower * dt / model.alpha, upper * dt / model.alpha)
    states = rollout_batch(model, start.state, np.zeros((steps, m)), increments, dt)
    times = start.time + dt * np.arange(steps + 1)
    distances = metric(states[:, -1], times[-1], toward.state, toward.time)
    best = int(np.argmin(distances))
    noise = NoiseProfile(increments[best], dt, ("steer", best))
    trajectory = Trajectory(states[best], times, ControlSchedule.zeros(steps, m, dt), noise)
    feedforward = ControlSchedule(
        np.clip(model.alpha * increments[best] / dt, *bounds), dt
    )
    return trajectory, feedforward


def obstacle_free(traj: Trajectory, env: Environment) -> bool:
    return not env.trajectory_collides(traj.states)


def steering_model(model: DynamicsModel, params: PlannerParams) -> DynamicsModel:
    return replace(model, alpha=params.resolve_steer_alpha(model.alpha))


def extend(
    tree: TreeGraph,
    z_rand: StateTimePoint,
    model: DynamicsModel,
    env: Environment,
    params: PlannerParams,
    rng: np.random.Generator,
) -> Extension:
    """One Extend step; ``model`` is the steering model."""
    metric = params.metric()
    near = nearest(tree, z_rand, metric)
    start = tree.vertex(near)
    if z_rand.time <= start.time or steps_between(start.time, env.t_f, params.dt) < 1:
        return Extension(ExtendResult.TRAPPED)
    trajectory, feedforward = steer(
        model,
        start,
        z_rand,
        params.steer_samples,
        params.steer_horizon,
        rng,
        dt=params.dt,
        t_f=env.t_f,
        metric=metric,
        bounds=params.control_bounds,
    )
    if not obstacle_free(trajectory, env):
        return Extension(ExtendResult.TRAPPED)
    return Extension(ExtendResult.ADVANCED, tree.add(near, trajectory, feedforward))


def extract_branch(
    tree: TreeGraph, leaf: int, reached_goal: bool, channels: int, dt: float
) -> Branch:
    """Concatenate edge states and feedforward controls root -> leaf."""
    chain = tree.path(leaf)
    root = tree.vertex(0)
    if len(chain) == 1:
        return Branch(Trajectory.stationary(root, channels, dt), reached_goal, leaf)
    edges = [tree.edge(i) for i in chain[1:]]
    states = np.concatenate([root.state[None, :]] + [e.trajectory.states[1:] for e in edges])
    times = np.concatenate([[root.time]] + [e.trajectory.times[1:] for e in edges])
    controls = np.concatenate([e.feedforward.values for e in edges])
    trajectory = Trajectory(
        states,
        times,
        ControlSchedule(controls, dt),
        NoiseProfile.zeros(controls.shape[0], controls.shape[1], dt),
    )
    return Branch(trajectory, reached_goal, leaf)


def _goal_gap(tree: TreeGraph, goal: GoalSet, time_weight: float) -> np.ndarray:
    early = np.maximum(goal.time_window[0] - tree.times, 0.0)
    return goal.position_distance(tree.states) + time_weight * early


def plan(
    model: DynamicsModel,
    env: Environment,
    z_init: StateTimePoint,
    goal: GoalSet,
    max_iterations: int,
    streams: Streams,
    params: PlannerParams,
) -> PlanResult:
    """Grow a tree from ``z_init`` until a vertex lands in ``goal``.

    Without a goal hit the branch to the vertex nearest the goal is returned
    with ``reached_goal`` false.
    """
    if env.point_collides(z_init.state[:2]):
        raise PlanningError(f"start state {z_init.state.tolist()} is in collision")
    channels = model.control_dim
    tree = TreeGraph(z_init)
    if goal.contains(z_init.state, z_init.time):
        return PlanResult(tree, extract_branch(tree, 0, True, channels, params.dt), 0)
    explorer = steering_model(model, params)
    sampler = streams.generator("sample")
    for iteration in range(max_iterations):
        if sampler.uniform() < params.goal_bias:
            state, time = goal.sample(sampler)
            z_rand = StateTimePoint(state, time)
        else:
            z_rand = sample_free(sampler, env, z_init.time, env.t_f)
        step = extend(tree, z_rand, explorer, env, params, streams.generator("steer", iteration))
        if step.result is ExtendResult.ADVANCED:
            vertex = tree.vertex(step.vertex)
            if goal.contains(vertex.state, vertex.time):
                branch = extract_branch(tree, step.vertex, True, channels, params.dt)
                return PlanResult(tree, branch, iteration + 1)
    best = int(np.argmin(_goal_gap(tree, goal, params.time_weight)))
    print(
        f"Warning: goal not reached in {max_iterations} iterations from t={z_init.time:.2f}; "
        f"using nearest branch ({len(tree)} vertices)",
        file=sys.stderr,
    )
    return PlanResult(tree, extract_branch(tree, best, False, channels, params.dt), max_iterations)
