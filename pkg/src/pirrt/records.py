from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from collections.abc import Iterable, Sequence
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from pirrt.pi_rrt import MissionResult
from pirrt.rrt_planner import TreeGraph
from pirrt.sde_core import Trajectory
from pirrt.world_models import Environment


def save_text(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as tmp_file:
            tmp_file.write(content)
            tmp_file.flush()
            os.fsync(tmp_file.fileno())
        os.replace(tmp_name, path)
    finally:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)


def save_json(path: Path, payload: Any) -> None:
    save_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def git_blob_sha1(text: str) -> str:
    """Same id ``git hash-object`` would print for this text."""
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def canonical_geometry(env: Environment) -> str:
    return yaml.safe_dump(env.to_mapping(), sort_keys=True, default_flow_style=False)


def geometry_hash(env: Environment) -> str:
    return git_blob_sha1(canonical_geometry(env))


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def csv_text(
    header: Sequence[str], rows: Iterable[Sequence[Any]], comments: Sequence[str] = ()
) -> str:
    buffer = io.StringIO()
    for line in comments:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(value) for value in row])
    return buffer.getvalue()


def provenance(config: dict[str, Any], env: Environment) -> list[str]:
    """Comment lines that tie a CSV to its resolved config and geometry."""
    return [
        "config=" + json.dumps(config, sort_keys=True, separators=(",", ":")),
        f"geometry={geometry_hash(env)}",
    ]


def trajectory_rows(traj: Trajectory, *prefix: Any) -> Iterable[list[Any]]:
    for step, (state, time) in enumerate(zip(traj.states, traj.times)):
        yield [*prefix, step, time, *state]


def write_tree(tree: TreeGraph, directory: Path, comments: Sequence[str] = ()) -> None:
    """vertices.csv (index, parent, x, y, theta, t) and edges.csv polylines."""
    vertices = (
        [i, tree.parent(i), *tree.states[i], tree.times[i]] for i in range(len(tree))
    )
    save_text(
        directory / "vertices.csv",
        csv_text(["index", "parent", "x", "y", "theta", "t"], vertices, comments),
    )
    edges = (
        row
        for child in range(1, len(tree))
        for row in trajectory_rows(tree.edge(child).trajectory, child)
    )
    save_text(
        directory / "edges.csv",
        csv_text(["edge", "step", "t", "x", "y", "theta"], edges, comments),
    )


def _point(xy: np.ndarray | None) -> list[float] | None:
    return None if xy is None else [float(v) for v in xy]


def mission_to_dict(mission: MissionResult) -> dict[str, Any]:
    cycles = []
    for record in mission.cycles:
        entry: dict[str, Any] = {
            "cycle": record.cycle_index,
            "start": {"state": record.start.state.tolist(), "time": record.start.time},
            "tree_size": record.tree_size,
            "reached_goal": record.baseline.reached_goal,
            "baseline_steps": record.baseline.trajectory.steps,
            "executed_steps": record.executed.steps,
            "collided": record.collided,
            "collision_point": _point(record.collision_point),
            "fallback": record.fallback,
            "u_pi": record.u_pi.values[:, 0].tolist(),
        }
        if record.bundle is not None:
            bundle = record.bundle
            finite = bundle.finite_costs
            entry["bundle"] = {
                "size": len(bundle),
                "colliding": int(bundle.collided.sum()),
                "min_cost": float(finite.min()),
                "mean_cost": float(finite.mean()),
                "effective_sample_size": bundle.weights.effective_sample_size,
                "temper": bundle.weights.temper,
            }
        cycles.append(entry)
    end = mission.final
    return {
        "algorithm": mission.algorithm,
        "outcome": mission.outcome.value,
        "corridor": mission.corridor.value if mission.corridor else None,
        "final": {"state": end.state.tolist(), "time": end.time},
        "collision_point": _point(mission.collision_point),
        "steps": mission.trajectory.steps,
        "cycles": cycles,
    }


def write_mission(
    mission: MissionResult, env: Environment, config: dict[str, Any], directory: Path
) -> list[Path]:
    comments = provenance(config, env)
    written = []
    doc = mission_to_dict(mission)
    doc["config"] = config
    doc["geometry_hash"] = geometry_hash(env)
    save_json(directory / "mission.json", doc)
    written.append(directory / "mission.json")

    save_text(
        directory / "executed.csv",
        csv_text(
            ["step", "t", "x", "y", "theta"], trajectory_rows(mission.trajectory), comments
        ),
    )
    written.append(directory / "executed.csv")

    baseline_rows = (
        row
        for record in mission.cycles
        for row in trajectory_rows(record.baseline.trajectory, record.cycle_index)
    )
    save_text(
        directory / "baseline.csv",
        csv_text(["cycle", "step", "t", "x", "y", "theta"], baseline_rows, comments),
    )
    written.append(directory / "baseline.csv")

    bundle_rows = (
        row
        for record in mission.cycles
        if record.bundle is not None
        for k, traj in enumerate(record.bundle.trajectories)
        for row in trajectory_rows(traj, record.cycle_index, k, record.bundle.weights.weights[k])
    )
    save_text(
        directory / "bundle.csv",
        csv_text(
            ["cycle", "member", "weight", "step", "t", "x", "y", "theta"], bundle_rows, comments
        ),
    )
    written.append(directory / "bundle.csv")

    for record in mission.cycles:
        if record.tree is not None:
            folder = directory / f"tree-{record.cycle_index:02d}"
            write_tree(record.tree, folder, comments)
            written.extend([folder / "vertices.csv", folder / "edges.csv"])
    return written


def log_run(path: Path, entry: dict[str, Any]) -> None:
    """Append one JSON line to the run journal; failures never reach the caller."""
    record = {"timestamp": datetime.now(timezone.utc).isoformat(), **entry}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    except OSError:
        pass
