"""Seeded Monte Carlo runs of RRT and PI-RRT missions.

Each trial gets its own stream node keyed by (scenario, algorithm, alpha,
trial), so trials can run in any order or in parallel and still give the same
results. Aggregation is an ordered reduction over the trial list.
"""

from __future__ import annotations

import math
import sys
import time
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from pathlib import Path
from typing import Any

import numpy as np

from pirrt.config import ExperimentConfig, PirrtConfig, PlannerParams, load_config
from pirrt.pi_control import goal_distance_cost
from pirrt.pi_rrt import MissionResult, Outcome, run_mission
from pirrt.records import (
    csv_text,
    geometry_hash,
    log_run,
    provenance,
    save_json,
    save_text,
)
from pirrt.sde_core import DynamicsModel, StateTimePoint
from pirrt.streams import Streams
from pirrt.world_models import (
    Corridor,
    Environment,
    KinematicCarModel,
    car_dynamics,
    environment_from_mapping,
)


def build_model(params: PlannerParams, alpha: float) -> DynamicsModel:
    return car_dynamics(KinematicCarModel(params.speed, params.turn_constant, alpha))


def trial_streams(config: ExperimentConfig, trial: int) -> Streams:
    """Stream node for one trial; paired runs share it across algorithms."""
    role = "paired" if config.paired else config.algorithm
    return Streams(config.master_seed).child(config.scenario, role, config.alpha, trial)


def _deadline(mission_timeout: float | None) -> float | None:
    if mission_timeout is None or mission_timeout <= 0:
        return None
    return time.monotonic() + mission_timeout


def run_single(
    config: ExperimentConfig,
    env: Environment,
    trial: int = 0,
    *,
    mission_timeout: float | None = None,
    keep_trees: bool = False,
) -> MissionResult:
    params = config.params
    model = build_model(params, config.alpha)
    cost = goal_distance_cost(env, params.terminal_weight)
    z_init = StateTimePoint(np.asarray(env.start, dtype=float), env.t_init)
    return run_mission(
        model,
        env,
        cost,
        z_init,
        params,
        trial_streams(config, trial),
        algorithm=config.algorithm,
        deadline=_deadline(mission_timeout),
        keep_trees=keep_trees,
    )


@dataclass(slots=True)
class TrialSummary:
    trial: int
    outcome: Outcome
    corridor: Corridor | None
    terminal_cost: float
    cycles: int
    wall_time: float
    collision_point: tuple[float, float] | None = None
    # rows of (t, x, y, theta) along the executed path
    path: np.ndarray = field(default_factory=lambda: np.empty((0, 4)), compare=False, repr=False)

    @property
    def succeeded(self) -> bool:
        return self.outcome is Outcome.SUCCESS

    def to_row(self) -> list[Any]:
        return [
            self.trial,
            self.outcome.value,
            self.corridor.value if self.corridor else None,
            self.terminal_cost,
            self.cycles,
        ]


SUMMARY_HEADER = ["trial", "outcome", "corridor", "terminal_cost", "cycles"]


def run_trial(
    config_data: dict[str, Any],
    env_data: dict[str, Any],
    trial: int,
    mission_timeout: float | None = None,
) -> TrialSummary:
    """One Monte Carlo trial from plain mappings, so it can cross process boundaries."""
    config = ExperimentConfig.from_mapping(config_data)
    env = environment_from_mapping(env_data)
    started = time.perf_counter()
    mission = run_single(config, env, trial, mission_timeout=mission_timeout)
    wall_time = time.perf_counter() - started
    cost = goal_distance_cost(env, config.params.terminal_weight)
    executed = mission.trajectory
    point = mission.collision_point
    return TrialSummary(
        trial=trial,
        outcome=mission.outcome,
        corridor=mission.corridor,
        terminal_cost=float(cost.terminal_cost(executed.states[-1])),
        cycles=len(mission.cycles),
        wall_time=wall_time,
        collision_point=None if point is None else (float(point[0]), float(point[1])),
        path=np.column_stack([executed.times, executed.states]),
    )


@dataclass(slots=True)
class AggregateRow:
    """Successes per corridor plus failures; the counts always add up to ``trials``."""

    scenario: str
    algorithm: str
    alpha: float
    trials: int
    corridors: dict[str, int]
    unlabeled: int
    fail: int
    outcomes: dict[str, int]

    @property
    def successes(self) -> int:
        return self.trials - self.fail

    def slit_fraction(self) -> float:
        """Share of successful trials that went through a slit."""
        if self.successes == 0:
            return math.nan
        through = sum(n for label, n in self.corridors.items() if Corridor(label).is_slit)
        return through / self.successes

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "algorithm": self.algorithm,
            "alpha": self.alpha,
            "trials": self.trials,
            "corridors": dict(self.corridors),
            "unlabeled": self.unlabeled,
            "fail": self.fail,
            "outcomes": dict(self.outcomes),
        }


def aggregate(
    summaries: Sequence[TrialSummary], env: Environment, config: ExperimentConfig
) -> AggregateRow:
    corridors = {band.label.value: 0 for band in env.corridors}
    outcomes = {outcome.value: 0 for outcome in Outcome}
    unlabeled = fail = 0
    for summary in summaries:
        outcomes[summary.outcome.value] += 1
        if summary.outcome.failed:
            fail += 1
        elif summary.corridor is None or summary.corridor.value not in corridors:
            unlabeled += 1
        else:
            corridors[summary.corridor.value] += 1
    return AggregateRow(
        scenario=config.scenario,
        algorithm=config.algorithm,
        alpha=config.alpha,
        trials=len(summaries),
        corridors=corridors,
        unlabeled=unlabeled,
        fail=fail,
        outcomes=outcomes,
    )


@dataclass(slots=True)
class ExperimentResult:
    config: ExperimentConfig
    environment: Environment
    summaries: list[TrialSummary]
    row: AggregateRow


def run_experiment(
    config: ExperimentConfig,
    *,
    settings: PirrtConfig | None = None,
    env: Environment | None = None,
    workers: int | None = None,
    mission_timeout: float | None = None,
    journal: bool = True,
) -> ExperimentResult:
    """Run ``config.trials`` missions and count outcomes per corridor."""
    settings = settings or load_config()
    if env is None:
        env = settings.load_scenario(config.scenario, config.geometry)
    workers = settings.workers if workers is None else max(1, workers)
    timeout = settings.mission_timeout if mission_timeout is None else mission_timeout
    config_data = config.to_dict()
    env_data = env.to_mapping()
    trials = range(config.trials)
    if workers == 1:
        summaries = [run_trial(config_data, env_data, i, timeout) for i in trials]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(
                pool.map(run_trial, repeat(config_data), repeat(env_data), trials, repeat(timeout))
            )
    timeouts = sum(s.outcome is Outcome.TIMEOUT for s in summaries)
    if timeouts:
        print(
            f"Warning: {timeouts} of {config.trials} trials hit the {timeout:g}s mission timeout",
            file=sys.stderr,
        )
    if journal:
        for summary in summaries:
            log_run(
                settings.journal_path,
                {
                    "scenario": config.scenario,
                    "algorithm": config.algorithm,
                    "alpha": config.alpha,
                    "trial": summary.trial,
                    "outcome": summary.outcome.value,
                    "corridor": summary.corridor.value if summary.corridor else None,
                    "cycles": summary.cycles,
                    "wall_time": round(summary.wall_time, 3),
                },
            )
    return ExperimentResult(config, env, summaries, aggregate(summaries, env, config))


@dataclass(slots=True)
class SweepReport:
    results: list[ExperimentResult]

    @property
    def rows(self) -> list[AggregateRow]:
        return [result.row for result in self.results]

    def corridor_columns(self) -> list[Corridor]:
        present = {label for row in self.rows for label in row.corridors}
        return [corridor for corridor in Corridor if corridor.value in present]

    def table_header(self) -> list[str]:
        columns = [corridor.title for corridor in self.corridor_columns()]
        return ["scenario", "algorithm", "alpha", *columns, "Unlabeled", "Fail", "trials"]

    def table_rows(self) -> list[list[Any]]:
        columns = self.corridor_columns()
        out = []
        for row in self.rows:
            counts = [row.corridors.get(corridor.value, 0) for corridor in columns]
            tail = [row.unlabeled, row.fail, row.trials]
            out.append([row.scenario, row.algorithm, row.alpha, *counts, *tail])
        return out

    def lines(self) -> list[str]:
        header = self.table_header()
        widths = [max(len(h), 8) for h in header]
        out = ["  ".join(f"{h:>{w}}" for h, w in zip(header, widths))]
        out.append("-" * len(out[0]))
        for row in self.table_rows():
            cells = [f"{c:g}" if isinstance(c, float) else str(c) for c in row]
            out.append("  ".join(f"{c:>{w}}" for c, w in zip(cells, widths)))
        return out


def sweep(
    configs: Sequence[ExperimentConfig],
    *,
    settings: PirrtConfig | None = None,
    workers: int | None = None,
    mission_timeout: float | None = None,
    journal: bool = True,
) -> SweepReport:
    """Run every config; the report has one row per (scenario, algorithm, alpha)."""
    if not configs:
        raise ValueError("sweep needs at least one experiment")
    seen: set[tuple[str, str, float]] = set()
    for config in configs:
        key = (config.scenario, config.algorithm, config.alpha)
        if key in seen:
            raise ValueError(f"duplicate sweep entry {key}")
        seen.add(key)
    settings = settings or load_config()
    results = []
    for config in configs:
        print(
            f"{config.scenario} {config.algorithm} alpha={config.alpha:g}: "
            f"{config.trials} trials",
            file=sys.stderr,
        )
        results.append(
            run_experiment(
                config,
                settings=settings,
                workers=workers,
                mission_timeout=mission_timeout,
                journal=journal,
            )
        )
    return SweepReport(results)


def run_label(config: ExperimentConfig) -> str:
    return f"{config.scenario}-{config.algorithm}-a{config.alpha:g}"


def write_experiment(result: ExperimentResult, directory: Path) -> list[Path]:
    """summaries.csv, trajectories.csv and aggregate.json for one experiment."""
    config = result.config.to_dict()
    comments = provenance(config, result.environment)
    summaries = directory / "summaries.csv"
    save_text(
        summaries, csv_text(SUMMARY_HEADER, (s.to_row() for s in result.summaries), comments)
    )
    trajectories = directory / "trajectories.csv"
    rows = (
        [summary.trial, summary.outcome.value, step, *point]
        for summary in result.summaries
        for step, point in enumerate(summary.path)
    )
    save_text(
        trajectories,
        csv_text(["trial", "outcome", "step", "t", "x", "y", "theta"], rows, comments),
    )
    aggregate_path = directory / "aggregate.json"
    save_json(
        aggregate_path,
        {
            "config": config,
            "geometry": result.environment.to_mapping(),
            "geometry_hash": geometry_hash(result.environment),
            "aggregate": result.row.to_dict(),
            "trials": [
                dict(zip(SUMMARY_HEADER, summary.to_row())) for summary in result.summaries
            ],
        },
    )
    return [summaries, trajectories, aggregate_path]


def write_sweep(report: SweepReport, directory: Path) -> list[Path]:
    written = []
    comments = []
    runs = []
    for result in report.results:
        config = result.config.to_dict()
        comments.extend(provenance(config, result.environment))
        runs.append(
            {
                "config": config,
                "geometry_hash": geometry_hash(result.environment),
                "aggregate": result.row.to_dict(),
            }
        )
        written.extend(write_experiment(result, directory / run_label(result.config)))
    table = directory / "table.csv"
    save_text(table, csv_text(report.table_header(), report.table_rows(), comments))
    doc = directory / "report.json"
    save_json(doc, {"columns": report.table_header(), "rows": report.table_rows(), "runs": runs})
    return [table, doc, *written]
