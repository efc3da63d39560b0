"""Control-affine stochastic dynamics and Euler-Maruyama rollouts.

A model advances as

    x' = x + f(x) dt + B(x) (u dt + alpha dw)

with dw ~ Normal(0, dt) per channel. ``alpha`` is the noise intensity and
``|rho| = 1 / alpha**2`` the matching temperature used by the
path-integral weights.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

TIME_TOLERANCE = 1e-9

DriftFn = Callable[[np.ndarray], np.ndarray]
ControlMatrixFn = Callable[[np.ndarray], np.ndarray]


class NonFiniteStateError(FloatingPointError):
    """A state, control or increment went non-finite during integration."""

    def __init__(self, message: str, step: int | None = None) -> None:
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


def _frozen(values: Any, ndim: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    if array.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {array.shape}")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, slots=True)
class DynamicsModel:
    state_dim: int
    control_dim: int
    drift: DriftFn
    control_matrix: ControlMatrixFn
    alpha: float
    name: str = "model"

    def __post_init__(self) -> None:
        if self.state_dim < 1 or self.control_dim < 1:
            raise ValueError(
                f"state_dim and control_dim must be positive, got {self.state_dim}, "
                f"{self.control_dim}"
            )
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")

    @property
    def rho_magnitude(self) -> float:
        # alpha == 0 is the noiseless limit: infinitely sharp weights
        if self.is_noiseless:
            return math.inf
        return 1.0 / self.alpha**2

    @property
    def is_noiseless(self) -> bool:
        return self.alpha == 0


@dataclass(frozen=True, slots=True)
class StateTimePoint:
    state: np.ndarray
    time: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "state", _frozen(self.state, 1, "state"))
        object.__setattr__(self, "time", float(self.time))


@dataclass(frozen=True, slots=True)
class ControlSchedule:
    """Piecewise-constant controls, one row per step."""

    values: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _frozen(self.values, 2, "control values"))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, steps: int, channels: int, dt: float) -> ControlSchedule:
        return cls(np.zeros((steps, channels)), dt)

    def head(self, steps: int) -> ControlSchedule:
        return ControlSchedule(self.values[:steps], self.dt)

    def tail(self, start: int) -> ControlSchedule:
        return ControlSchedule(self.values[start:], self.dt)

    def clipped(self, lower: float, upper: float) -> ControlSchedule:
        return ControlSchedule(np.clip(self.values, lower, upper), self.dt)


@dataclass(frozen=True, slots=True)
class NoiseProfile:
    """Wiener increments dw, one row per step, each entry ~ Normal(0, dt)."""

    increments: np.ndarray
    dt: float
    seed_tag: tuple[Any, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "increments", _frozen(self.increments, 2, "noise increments"))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self) -> int:
        return self.increments.shape[0]

    @classmethod
    def zeros(cls, steps: int, channels: int, dt: float) -> NoiseProfile:
        return cls(np.zeros((steps, channels)), dt, ("zero",))

    def head(self, steps: int) -> NoiseProfile:
        return NoiseProfile(self.increments[:steps], self.dt, self.seed_tag)


@dataclass(frozen=True, slots=True)
class Trajectory:
    states: np.ndarray
    times: np.ndarray
    controls: ControlSchedule
    noise: NoiseProfile

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", _frozen(self.states, 2, "trajectory states"))
        object.__setattr__(self, "times", _frozen(self.times, 1, "trajectory times"))
        points = self.states.shape[0]
        if self.times.shape[0] != points:
            raise ValueError(f"{points} states but {self.times.shape[0]} time stamps")
        if len(self.controls) != points - 1 or len(self.noise) != points - 1:
            raise ValueError(
                f"{points} points need {points - 1} control and noise rows, got "
                f"{len(self.controls)} and {len(self.noise)}"
            )

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def dt(self) -> float:
        return self.controls.dt

    @property
    def start(self) -> StateTimePoint:
        return StateTimePoint(self.states[0], self.times[0])

    @property
    def end(self) -> StateTimePoint:
        return StateTimePoint(self.states[-1], self.times[-1])

    def head(self, steps: int) -> Trajectory:
        """First ``steps`` steps (``steps + 1`` points)."""
        if not 0 <= steps <= self.steps:
            raise ValueError(f"cannot keep {steps} of {self.steps} steps")
        return Trajectory(
            self.states[: steps + 1],
            self.times[: steps + 1],
            self.controls.head(steps),
            self.noise.head(steps),
        )

    @classmethod
    def stationary(cls, point: StateTimePoint, channels: int, dt: float) -> Trajectory:
        return cls(
            point.state[None, :],
            np.array([point.time]),
            ControlSchedule.zeros(0, channels, dt),
            NoiseProfile.zeros(0, channels, dt),
        )


def concatenate(segments: Sequence[Trajectory]) -> Trajectory:
    """Join segments whose junction points coincide exactly."""
    if not segments:
        raise ValueError("nothing to concatenate")
    first = segments[0]
    for before, after in zip(segments, segments[1:]):
        if after.dt != first.dt:
            raise ValueError(f"segment dt {after.dt} differs from {first.dt}")
        if not np.array_equal(before.states[-1], after.states[0]):
            raise ValueError("segments are not contiguous")
    states = np.concatenate([first.states] + [s.states[1:] for s in segments[1:]])
    times = np.concatenate([first.times] + [s.times[1:] for s in segments[1:]])
    controls = np.concatenate([s.controls.values for s in segments])
    increments = np.concatenate([s.noise.increments for s in segments])
    tags = tuple(s.noise.seed_tag for s in segments)
    return Trajectory(
        states,
        times,
        ControlSchedule(controls, first.dt),
        NoiseProfile(increments, first.dt, tags),
    )


def advance(
    model: DynamicsModel, x: np.ndarray, u: np.ndarray, dw: np.ndarray, dt: float
) -> np.ndarray:
    """One Euler-Maruyama step on states of shape (..., n)."""
    drive = u * dt + model.alpha * dw
    gain = model.control_matrix(x)
    return x + model.drift(x) * dt + np.sum(gain * drive[..., None, :], axis=-1)


def _check_vector(value: Any, size: int, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.shape != (size,):
        raise ValueError(f"{name} must have shape ({size},), got {array.shape}")
    return array


def step_once(
    model: DynamicsModel, x: Any, u: Any, dw: Any, dt: float
) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = _check_vector(x, model.state_dim, "state")
    u = _check_vector(u, model.control_dim, "control")
    dw = _check_vector(dw, model.control_dim, "noise increment")
    if not (np.isfinite(x).all() and np.isfinite(u).all() and np.isfinite(dw).all()):
        raise NonFiniteStateError("non-finite input to step_once")
    result = advance(model, x, u, dw, dt)
    if not np.isfinite(result).all():
        raise NonFiniteStateError("step produced a non-finite state")
    return result


def rollout(
    model: DynamicsModel,
    x0: Any,
    t0: float,
    schedule: ControlSchedule,
    noise: NoiseProfile,
) -> Trajectory:
    if len(schedule) != len(noise):
        raise ValueError(f"schedule has {len(schedule)} steps but noise has {len(noise)}")
    if schedule.dt != noise.dt:
        raise ValueError(f"schedule dt {schedule.dt} differs from noise dt {noise.dt}")
    if schedule.channels != model.control_dim or noise.increments.shape[1] != model.control_dim:
        raise ValueError(f"control channels must equal control_dim={model.control_dim}")
    x = _check_vector(x0, model.state_dim, "initial state")
    if not np.isfinite(x).all():
        raise NonFiniteStateError("non-finite initial state", step=0)
    dt = schedule.dt
    steps = len(schedule)
    states = np.empty((steps + 1, model.state_dim))
    states[0] = x
    for i in range(steps):
        u, dw = schedule.values[i], noise.increments[i]
        if not (np.isfinite(u).all() and np.isfinite(dw).all()):
            raise NonFiniteStateError("non-finite control or noise", step=i)
        x = advance(model, x, u, dw, dt)
        if not np.isfinite(x).all():
            raise NonFiniteStateError("state went non-finite", step=i + 1)
        states[i + 1] = x
    times = t0 + dt * np.arange(steps + 1)
    return Trajectory(states, times, schedule, noise)


def rollout_batch(
    model: DynamicsModel,
    x0: Any,
    controls: np.ndarray,
    increments: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Integrate many rollouts at once.

    ``controls`` is (K, m) shared by every member or (B, K, m); ``increments``
    is (B, K, m). Returns states of shape (B, K + 1, n).
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 3 or increments.shape[2] != model.control_dim:
        raise ValueError(f"increments must be (B, K, {model.control_dim}), got {increments.shape}")
    batch, steps, _ = increments.shape
    controls = np.broadcast_to(np.asarray(controls, dtype=float), increments.shape)
    x = np.broadcast_to(np.asarray(x0, dtype=float), (batch, model.state_dim)).copy()
    if not np.isfinite(x).all():
        raise NonFiniteStateError("non-finite initial state", step=0)
    states = np.empty((batch, steps + 1, model.state_dim))
    states[:, 0] = x
    for i in range(steps):
        x = advance(model, x, controls[:, i], increments[:, i], dt)
        if not np.isfinite(x).all():
            raise NonFiniteStateError("batched state went non-finite", step=i + 1)
        states[:, i + 1] = x
    return states


def sample_noise(
    rng: np.random.Generator,
    steps: int,
    channels: int,
    dt: float,
    seed_tag: tuple[Any, ...] = (),
) -> NoiseProfile:
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if channels < 1:
        raise ValueError(f"channels must be >= 1, got {channels}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    increments = rng.normal(0.0, math.sqrt(dt), size=(steps, channels))
    return NoiseProfile(increments, dt, seed_tag)


def steps_between(t_start: float, t_end: float, dt: float) -> int:
    """Whole steps that fit in [t_start, t_end], tolerant to grid rounding."""
    if t_end <= t_start:
        return 0
    return int(math.floor((t_end - t_start) / dt + TIME_TOLERANCE))
