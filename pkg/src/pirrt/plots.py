"""Static SVG figures of worlds, trees, bundles and executed paths."""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Any

import matplotlib as mpl
from matplotlib.axes import Axes
from matplotlib.collections import LineCollection
from matplotlib.figure import Figure
from matplotlib.patches import Circle, Rectangle

from pirrt.harness import ExperimentResult
from pirrt.pi_rrt import MissionResult, Outcome
from pirrt.records import geometry_hash, save_text
from pirrt.rrt_planner import TreeGraph
from pirrt.world_models import Environment

SVG_HASH_SALT = "pirrt"

COLORS = {
    "obstacle": "0.35",
    "goal": "tab:green",
    "tree": "0.75",
    "bundle": "tab:blue",
    "baseline": "black",
    "executed": "tab:red",
    "success": "tab:green",
    "failure": "tab:red",
}


def draw_environment(ax: Axes, env: Environment) -> None:
    b = env.bounds
    ax.add_patch(
        Rectangle(
            (b.x_lo, b.y_lo), b.x_hi - b.x_lo, b.y_hi - b.y_lo, fill=False, edgecolor="black"
        )
    )
    for rect in env.obstacles:
        ax.add_patch(
            Rectangle(
                (rect.x_lo, rect.y_lo),
                rect.x_hi - rect.x_lo,
                rect.y_hi - rect.y_lo,
                facecolor=COLORS["obstacle"],
                edgecolor="none",
            )
        )
    ax.add_patch(Circle(env.goal.center, env.goal.radius, color=COLORS["goal"], alpha=0.3))
    ax.plot(env.start[0], env.start[1], "ko", markersize=4)
    ax.set_xlim(b.x_lo, b.x_hi)
    ax.set_ylim(b.y_lo, b.y_hi)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")


def draw_tree(ax: Axes, tree: TreeGraph) -> None:
    segments = [edge.trajectory.states[:, :2] for edge in tree.edges]
    if segments:
        ax.add_collection(
            LineCollection(segments, colors=COLORS["tree"], linewidths=0.4, gid="tree")
        )


def _new_axes(title: str) -> tuple[Figure, Axes]:
    fig = Figure(figsize=(6.0, 6.0))
    ax = fig.add_subplot()
    ax.set_title(title)
    return fig, ax


def tree_figure(env: Environment, tree: TreeGraph, title: str = "") -> Figure:
    fig, ax = _new_axes(title or f"{env.name}: tree ({len(tree)} vertices)")
    draw_environment(ax, env)
    draw_tree(ax, tree)
    return fig


def mission_figure(env: Environment, mission: MissionResult, cycle: int = 0) -> Figure:
    """Tree, bundle and baseline of one replan cycle over the executed path."""
    title = f"{env.name}: {mission.algorithm}, {mission.outcome.value}"
    fig, ax = _new_axes(title)
    draw_environment(ax, env)
    if mission.cycles:
        record = mission.cycles[min(cycle, len(mission.cycles) - 1)]
        if record.tree is not None:
            draw_tree(ax, record.tree)
        if record.bundle is not None:
            ax.add_collection(
                LineCollection(
                    [traj.states[:, :2] for traj in record.bundle.trajectories],
                    colors=COLORS["bundle"],
                    linewidths=0.5,
                    alpha=0.3,
                    gid="bundle",
                )
            )
        baseline = record.baseline.trajectory.states
        ax.plot(baseline[:, 0], baseline[:, 1], color=COLORS["baseline"], lw=1.0, gid="baseline")
    path = mission.trajectory.states
    ax.plot(path[:, 0], path[:, 1], color=COLORS["executed"], lw=1.5, gid="executed")
    return fig


def experiment_figure(result: ExperimentResult) -> Figure:
    """Every trial's executed path, successes and failures in separate layers."""
    config = result.config
    row = result.row
    fig, ax = _new_axes(
        f"{config.scenario}: {config.algorithm}, alpha={config.alpha:g} "
        f"({row.successes}/{row.trials} success)"
    )
    draw_environment(ax, result.environment)
    for key, keep in (("success", True), ("failure", False)):
        segments = [s.path[:, 1:3] for s in result.summaries if s.succeeded is keep]
        if segments:
            ax.add_collection(
                LineCollection(segments, colors=COLORS[key], linewidths=0.6, alpha=0.5, gid=key)
            )
    crashes = [s.collision_point for s in result.summaries if s.outcome is Outcome.COLLISION]
    ends = [p for p in crashes if p is not None]
    if ends:
        ax.plot(
            [p[0] for p in ends], [p[1] for p in ends], "x", color=COLORS["failure"], gid="crashes"
        )
    return fig


def figure_description(config: dict[str, Any] | None, env: Environment) -> str:
    """JSON with the resolved config and geometry hash, stored in the SVG metadata."""
    doc = {"config": config, "geometry_hash": geometry_hash(env)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def svg_text(fig: Figure, description: str | None = None) -> str:
    metadata: dict[str, Any] = {"Date": None}
    if description is not None:
        metadata["Description"] = description
    buffer = io.StringIO()
    with mpl.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(buffer, format="svg", metadata=metadata)
    return buffer.getvalue()


def save_svg(fig: Figure, path: Path, description: str | None = None) -> Path:
    save_text(path, svg_text(fig, description))
    return path


def emit_plots(
    target: ExperimentResult | MissionResult,
    directory: Path,
    env: Environment | None = None,
    config: dict[str, Any] | None = None,
) -> list[Path]:
    """Write the figures for an experiment or a single mission into ``directory``.

    Every SVG carries the config and geometry hash in its description.
    """
    if isinstance(target, ExperimentResult):
        about = figure_description(target.config.to_dict(), target.environment)
        return [save_svg(experiment_figure(target), directory / "experiment.svg", about)]
    if env is None:
        raise ValueError("a mission plot needs its environment")
    about = figure_description(config, env)
    written = [save_svg(mission_figure(env, target), directory / "mission.svg", about)]
    for record in target.cycles:
        if record.tree is not None:
            path = directory / f"tree-{record.cycle_index:02d}.svg"
            written.append(save_svg(tree_figure(env, record.tree), path, about))
    return written
