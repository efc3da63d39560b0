"""Path costs, desirability weights and the path-integral control correction.

Sampling under a baseline control u instead of the unforced dynamics adds a
Girsanov term to the state cost, so each sampled path is scored by

    S = J + 1/2 sum(u^T u) dt + alpha sum(u^T dw)

and weighted by exp(-|rho| S). The correction is the weighted average of
the sampled increments, turned into a control rate by dividing by dt.

With a jittery baseline the Girsanov term alone spreads S by several units
of 1/|rho|, and the weights collapse onto one sample. ``tempered_weights``
scales the exponents down just enough to keep a minimum effective sample size.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from pirrt.sde_core import ControlSchedule, NoiseProfile, Trajectory
from pirrt.world_models import Environment

TEMPER_FLOOR = 1e-12
TEMPER_BISECTIONS = 40

TerminalCostFn = Callable[[np.ndarray], np.ndarray]
RunningCostFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class NoViableSampleError(RuntimeError):
    """Every sampled path has infinite cost."""


def noise_gain(rho_magnitude: float) -> float:
    """1 / sqrt(|rho|), zero in the noiseless limit."""
    if not rho_magnitude > 0:
        raise ValueError(f"rho_magnitude must be positive, got {rho_magnitude}")
    if math.isinf(rho_magnitude):
        return 0.0
    return 1.0 / math.sqrt(rho_magnitude)


@dataclass(frozen=True, slots=True)
class CostFunctional:
    """Terminal cost Φ(x), running cost q(x, t) and a collision rule.

    Both cost functions take batched states (..., n); ``running_cost`` also
    takes the matching times. A path for which ``collides`` is true costs
    ``collision_penalty``.
    """

    terminal_cost: TerminalCostFn
    running_cost: RunningCostFn | None = None
    collides: Callable[[np.ndarray], bool] | None = None
    collision_penalty: float = math.inf


def goal_distance_cost(env: Environment, weight: float = 1.0) -> CostFunctional:
    """Φ = weight * squared distance to the goal centre; q = 0; collisions are infinite."""
    if weight < 0:
        raise ValueError(f"terminal weight must be >= 0, got {weight}")
    cx, cy = env.goal.center

    def terminal(x: np.ndarray) -> np.ndarray:
        return weight * ((x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2)

    return CostFunctional(terminal_cost=terminal, collides=env.trajectory_collides)


@dataclass(frozen=True, slots=True)
class PathCostBreakdown:
    state_cost: float
    control_quadratic: float
    noise_cross: float
    total: float


def path_cost(traj: Trajectory, cost: CostFunctional, rho_magnitude: float) -> PathCostBreakdown:
    alpha = noise_gain(rho_magnitude)
    u = traj.controls.values
    dw = traj.noise.increments
    if u.shape != dw.shape:
        raise ValueError(f"controls {u.shape} and noise {dw.shape} are misaligned")
    dt = traj.dt
    if cost.collides is not None and cost.collides(traj.states):
        state_cost = cost.collision_penalty
    else:
        state_cost = float(cost.terminal_cost(traj.states[-1]))
        if cost.running_cost is not None and traj.steps:
            state_cost += float(np.sum(cost.running_cost(traj.states[:-1], traj.times[:-1]))) * dt
    control_quadratic = 0.5 * float(np.sum(u * u)) * dt
    noise_cross = alpha * float(np.sum(u * dw))
    total = state_cost + control_quadratic + noise_cross
    return PathCostBreakdown(state_cost, control_quadratic, noise_cross, total)


def cost_to_go(
    states: np.ndarray,
    times: np.ndarray,
    controls: np.ndarray,
    increments: np.ndarray,
    collided: np.ndarray,
    cost: CostFunctional,
    rho_magnitude: float,
) -> np.ndarray:
    """Cost from each step to the end for a bundle sharing one control schedule.

    ``states`` is (M, K+1, n), ``controls`` (K, m), ``increments`` (M, K, m).
    Returns (M, K); column 0 is the whole-path cost. Colliding members are
    infinite at every step.
    """
    alpha = noise_gain(rho_magnitude)
    members, points, _ = states.shape
    steps = points - 1
    dt = float(times[1] - times[0]) if steps else 0.0
    controls = np.asarray(controls, dtype=float)
    if controls.shape[0] != steps or increments.shape[:2] != (members, steps):
        raise ValueError("bundle states, controls and increments are misaligned")
    step_cost = np.empty((members, steps))
    step_cost[:] = 0.5 * np.sum(controls * controls, axis=-1) * dt
    step_cost += alpha * np.sum(controls[None, :, :] * increments, axis=-1)
    if cost.running_cost is not None:
        step_cost += cost.running_cost(states[:, :-1], times[None, :-1]) * dt
    ctg = np.cumsum(step_cost[:, ::-1], axis=1)[:, ::-1]
    ctg = ctg + np.asarray(cost.terminal_cost(states[:, -1]))[:, None]
    ctg[np.asarray(collided, dtype=bool)] = cost.collision_penalty
    return ctg


@dataclass(frozen=True, slots=True)
class DesirabilityWeights:
    """Normalized exp(-|rho| S).

    ``log_costs`` holds |rho| (S - min S), the exponents actually used, and
    ``normalization`` the log of their partition sum. ``temper`` is the factor
    the exponents were scaled by; 1.0 for the untempered weights.
    """

    weights: np.ndarray
    log_costs: np.ndarray
    normalization: float
    temper: float = 1.0

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))


def _normalized(exponents: np.ndarray, temper: float = 1.0) -> DesirabilityWeights:
    log_total = float(logsumexp(-exponents))
    return DesirabilityWeights(np.exp(-exponents - log_total), exponents, log_total, temper)


def desirability_weights(
    costs: Sequence[float] | np.ndarray, rho_magnitude: float
) -> DesirabilityWeights:
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 1 or costs.size == 0:
        raise ValueError(f"costs must be a non-empty vector, got shape {costs.shape}")
    if not rho_magnitude > 0:
        raise ValueError(f"rho_magnitude must be positive, got {rho_magnitude}")
    if np.isnan(costs).any():
        raise ValueError("costs contain NaN")
    finite = np.isfinite(costs)
    if not finite.any():
        raise NoViableSampleError(f"all {costs.size} sampled costs are infinite")
    if (costs == -np.inf).any():
        raise ValueError("costs contain -inf")
    s_min = costs[finite].min()
    if math.isinf(rho_magnitude):
        best = costs == s_min
        exponents = np.where(best, 0.0, np.inf)
        weights = best / np.count_nonzero(best)
        return DesirabilityWeights(weights, exponents, math.log(np.count_nonzero(best)))
    return _normalized(np.where(finite, rho_magnitude * (costs - s_min), np.inf))


def tempered_weights(
    costs: Sequence[float] | np.ndarray,
    rho_magnitude: float,
    min_effective_samples: float = 0.0,
) -> DesirabilityWeights:
    """exp(-|rho| S) with the exponents scaled down until enough samples carry weight.

    The scale is the largest one in (0, 1] whose effective sample size reaches
    ``min_effective_samples`` (capped at the number of finite costs), found by
    bisection in log space. Weights that already qualify come back unchanged.
    """
    exact = desirability_weights(costs, rho_magnitude)
    if math.isinf(rho_magnitude) or min_effective_samples <= 0:
        return exact
    finite = np.isfinite(exact.log_costs)
    target = min(float(min_effective_samples), float(np.count_nonzero(finite)))
    if exact.effective_sample_size >= target:
        return exact
    low, high = math.log(TEMPER_FLOOR), 0.0
    for _ in range(TEMPER_BISECTIONS):
        mid = 0.5 * (low + high)
        if _normalized(exact.log_costs * math.exp(mid)).effective_sample_size >= target:
            low = mid
        else:
            high = mid
    temper = math.exp(low)
    return _normalized(exact.log_costs * temper, temper)


def step_weights(
    ctg: np.ndarray, rho_magnitude: float, min_effective_samples: float = 0.0
) -> list[DesirabilityWeights]:
    """One weight vector per step from the cost-to-go columns."""
    return [
        tempered_weights(ctg[:, i], rho_magnitude, min_effective_samples)
        for i in range(ctg.shape[1])
    ]


def control_correction(
    weights: DesirabilityWeights | Sequence[DesirabilityWeights],
    noises: Sequence[NoiseProfile],
    rho_magnitude: float,
) -> ControlSchedule:
    """δu_i = alpha / dt * sum_k p_k dw_i(k).

    ``weights`` is either one vector for the whole path or one per step.
    """
    if not noises:
        raise ValueError("control correction needs at least one noise profile")
    dt = noises[0].dt
    steps = len(noises[0])
    for noise in noises:
        if len(noise) != steps or noise.dt != dt:
            raise ValueError("noise profiles must share step count and dt")
    increments = np.stack([noise.increments for noise in noises])
    members = increments.shape[0]
    if isinstance(weights, DesirabilityWeights):
        p = np.broadcast_to(weights.weights, (steps, len(weights)))
    else:
        if len(weights) != steps:
            raise ValueError(f"{len(weights)} per-step weight vectors for {steps} steps")
        p = np.stack([w.weights for w in weights]) if steps else np.empty((0, members))
    if p.shape[1] != members:
        raise ValueError(f"{p.shape[1]} weights for {members} noise profiles")
    weighted = np.sum(p.T[:, :, None] * increments, axis=0)
    return ControlSchedule((noise_gain(rho_magnitude) / dt) * weighted, dt)


def compose_policy(
    baseline: ControlSchedule,
    delta: ControlSchedule,
    bounds: tuple[float, float] = (-1.0, 1.0),
) -> ControlSchedule:
    if baseline.values.shape != delta.values.shape:
        raise ValueError(
            f"baseline {baseline.values.shape} and correction {delta.values.shape} differ"
        )
    lower, upper = bounds
    return ControlSchedule(np.clip(baseline.values + delta.values, lower, upper), baseline.dt)


@dataclass(frozen=True, slots=True)
class FreeEnergyEstimate:
    value: float
    standard_error: float
    samples: int


def free_energy_estimate(
    costs: Sequence[float] | np.ndarray, rho_magnitude: float, method: str = "delta"
) -> FreeEnergyEstimate:
    """-(1/|rho|) log mean exp(-|rho| S) with a delta-method or jackknife error."""
    costs = np.asarray(costs, dtype=float)
    if costs.ndim != 1 or costs.size == 0:
        raise ValueError("free energy needs at least one sample")
    if not rho_magnitude > 0:
        raise ValueError(f"rho_magnitude must be positive, got {rho_magnitude}")
    finite = np.isfinite(costs)
    if not finite.any():
        raise NoViableSampleError("all sampled costs are infinite")
    n = costs.size
    if math.isinf(rho_magnitude):
        return FreeEnergyEstimate(float(costs[finite].min()), 0.0, n)
    scaled = np.where(finite, -rho_magnitude * costs, -np.inf)
    value = float(-(logsumexp(scaled) - math.log(n)) / rho_magnitude)
    if n < 2:
        return FreeEnergyEstimate(value, math.nan, n)
    shifted = np.exp(scaled - scaled.max())
    if method == "delta":
        mean = shifted.mean()
        se = float(shifted.std(ddof=1) / (math.sqrt(n) * mean * rho_magnitude))
    elif method == "jackknife":
        loo = (shifted.sum() - shifted) / (n - 1)
        with np.errstate(divide="ignore"):
            values = -(np.log(loo) + scaled.max()) / rho_magnitude
        se = float(math.sqrt((n - 1) / n * np.sum((values - values.mean()) ** 2)))
    else:
        raise ValueError(f"unknown standard error method {method!r}")
    return FreeEnergyEstimate(value, se, n)


@dataclass(frozen=True, slots=True)
class DualityGap:
    gap: float
    violated: bool


def duality_gap(free_energy: float, total_cost_mean: float, total_cost_se: float) -> DualityGap:
    for name, value in (
        ("free_energy", free_energy),
        ("total_cost_mean", total_cost_mean),
        ("total_cost_se", total_cost_se),
    ):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value}")
    gap = total_cost_mean - free_energy
    return DualityGap(gap, gap < -3.0 * total_cost_se)
