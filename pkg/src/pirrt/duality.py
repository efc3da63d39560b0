"""Free-energy / control-cost duality check on a scalar integrator.

The system is dx = u dt + alpha dw with Φ(x) = x^2 / 2 and no running cost.
Under u = 0 the terminal state is Gaussian, so the free energy has both a
quadrature oracle and a closed form. Every policy's expected total cost
E[Φ + 1/2 ∫ u^2 dt] must sit at or above it.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from pirrt.pi_control import duality_gap, free_energy_estimate
from pirrt.sde_core import DynamicsModel, advance
from pirrt.streams import Streams

FeedbackPolicy = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True, slots=True)
class ToyProblem:
    x0: float = 1.0
    t_f: float = 1.0
    dt: float = 0.01
    rho_magnitude: float = 4.0

    def __post_init__(self) -> None:
        if not (self.t_f > 0 and self.dt > 0 and self.rho_magnitude > 0):
            raise ValueError("t_f, dt and rho_magnitude must be positive")
        if math.isinf(self.rho_magnitude):
            raise ValueError("the duality check needs finite rho_magnitude")

    @property
    def steps(self) -> int:
        return int(round(self.t_f / self.dt))

    @property
    def alpha(self) -> float:
        return 1.0 / math.sqrt(self.rho_magnitude)

    @property
    def terminal_variance(self) -> float:
        return self.t_f / self.rho_magnitude

    def model(self) -> DynamicsModel:
        return DynamicsModel(
            state_dim=1,
            control_dim=1,
            drift=np.zeros_like,
            control_matrix=lambda x: np.ones(x.shape + (1,)),
            alpha=self.alpha,
            name="scalar_integrator",
        )


def terminal_cost(x: np.ndarray) -> np.ndarray:
    return 0.5 * np.asarray(x) ** 2


def free_energy_quadrature(problem: ToyProblem) -> float:
    """-(1/|rho|) log E[exp(-|rho| Φ(x_T))] by numerical integration."""
    mean, sd = problem.x0, math.sqrt(problem.terminal_variance)
    rho = problem.rho_magnitude

    def integrand(x: float) -> float:
        density = math.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * math.sqrt(2.0 * math.pi))
        return math.exp(-rho * 0.5 * x * x) * density

    expectation, _ = integrate.quad(integrand, -math.inf, math.inf)
    return -math.log(expectation) / rho


def free_energy_closed_form(problem: ToyProblem) -> float:
    a = 0.5 * problem.rho_magnitude
    spread = 1.0 + 2.0 * a * problem.terminal_variance
    log_expectation = -a * problem.x0**2 / spread - 0.5 * math.log(spread)
    return -log_expectation / problem.rho_magnitude


def constant_policy(value: float) -> FeedbackPolicy:
    def policy(x: np.ndarray, t: float) -> np.ndarray:
        return np.full_like(x, value)

    policy.__name__ = f"constant({value:g})"
    return policy


def linear_feedback_policy(problem: ToyProblem) -> FeedbackPolicy:
    """u*(x, t) = -x / (1 + t_f - t), optimal for this problem."""

    def policy(x: np.ndarray, t: float) -> np.ndarray:
        return -x / (1.0 + problem.t_f - t)

    policy.__name__ = "linear_feedback"
    return policy


def simulate_total_costs(
    problem: ToyProblem,
    policy: FeedbackPolicy,
    samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-sample Φ(x_T) + 1/2 Σ u^2 dt under ``policy``."""
    model = problem.model()
    dt = problem.dt
    x = np.full((samples, 1), problem.x0)
    effort = np.zeros(samples)
    for i in range(problem.steps):
        u = policy(x, i * dt)
        dw = rng.normal(0.0, math.sqrt(dt), size=(samples, 1))
        effort += 0.5 * u[:, 0] ** 2 * dt
        x = advance(model, x, u, dw, dt)
    return terminal_cost(x[:, 0]) + effort


@dataclass(frozen=True, slots=True)
class PolicyCheck:
    name: str
    mean_cost: float
    standard_error: float
    gap: float
    violated: bool


@dataclass(frozen=True, slots=True)
class DualityReport:
    problem: ToyProblem
    samples: int
    free_energy: float
    free_energy_se: float
    quadrature: float
    closed_form: float
    policies: list[PolicyCheck] = field(default_factory=list)

    @property
    def relative_error(self) -> float:
        return abs(self.free_energy - self.quadrature) / abs(self.quadrature)

    @property
    def passed(self) -> bool:
        return self.relative_error <= 0.02 and not any(p.violated for p in self.policies)

    def lines(self) -> list[str]:
        out = [
            f"samples={self.samples} rho={self.problem.rho_magnitude:g} x0={self.problem.x0:g}",
            f"free energy (MC)      {self.free_energy:.6f} ± {self.free_energy_se:.6f}",
            f"free energy (quad)    {self.quadrature:.6f}",
            f"free energy (closed)  {self.closed_form:.6f}",
            f"relative error        {self.relative_error:.4%}",
            "",
            f"{'policy':<20} {'mean cost':>10} {'se':>9} {'gap':>9}  status",
        ]
        for check in self.policies:
            status = "VIOLATED" if check.violated else "ok"
            out.append(
                f"{check.name:<20} {check.mean_cost:>10.5f} {check.standard_error:>9.5f} "
                f"{check.gap:>9.5f}  {status}"
            )
        out.append("")
        out.append("PASS" if self.passed else "FAIL")
        return out


DEFAULT_CONSTANTS = (-1.0, -0.5, 0.0, 0.5, 1.0)


def duality_report(
    problem: ToyProblem,
    samples: int = 100_000,
    seed: int = 0,
    constants: tuple[float, ...] = DEFAULT_CONSTANTS,
) -> DualityReport:
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    streams = Streams(seed).child("duality")
    unforced = simulate_total_costs(
        problem, constant_policy(0.0), samples, streams.generator("unforced")
    )
    estimate = free_energy_estimate(unforced, problem.rho_magnitude)
    policies = [constant_policy(c) for c in constants] + [linear_feedback_policy(problem)]
    checks = []
    for index, policy in enumerate(policies):
        costs = simulate_total_costs(problem, policy, samples, streams.generator("policy", index))
        mean = float(costs.mean())
        se = float(costs.std(ddof=1) / math.sqrt(samples))
        result = duality_gap(estimate.value, mean, se)
        checks.append(PolicyCheck(policy.__name__, mean, se, result.gap, result.violated))
    return DualityReport(
        problem=problem,
        samples=samples,
        free_energy=estimate.value,
        free_energy_se=estimate.standard_error,
        quadrature=free_energy_quadrature(problem),
        closed_form=free_energy_closed_form(problem),
        policies=checks,
    )
