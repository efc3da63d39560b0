"""Kinematic car dynamics and the slit-block benchmark worlds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from pirrt.sde_core import TIME_TOLERANCE, DynamicsModel


class ScenarioError(ValueError):
    """Unknown scenario or geometry that cannot describe a usable world."""


class Corridor(str, Enum):
    BOTTOM_CORNER = "bottom_corner"
    BOTTOM_SLIT = "bottom_slit"
    SLIT = "slit"
    TOP_SLIT = "top_slit"
    TOP_CORNER = "top_corner"

    @property
    def title(self) -> str:
        return "".join(part.capitalize() for part in self.value.split("_"))

    @property
    def is_slit(self) -> bool:
        return self in (Corridor.BOTTOM_SLIT, Corridor.SLIT, Corridor.TOP_SLIT)


@dataclass(frozen=True, slots=True)
class KinematicCarModel:
    speed: float = 2.0
    turn_constant: float = 1.0
    alpha: float = 0.25

    def __post_init__(self) -> None:
        if not self.speed > 0:
            raise ValueError(f"car speed must be positive, got {self.speed}")
        if not self.turn_constant > 0:
            raise ValueError(f"turn constant must be positive, got {self.turn_constant}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


def car_dynamics(car: KinematicCarModel) -> DynamicsModel:
    """Unicycle with constant speed: x' = v cos θ, y' = v sin θ, θ' = w / r."""
    speed = car.speed
    gain = np.array([[0.0], [0.0], [1.0 / car.turn_constant]])

    def drift(x: np.ndarray) -> np.ndarray:
        theta = x[..., 2]
        return np.stack(
            (speed * np.cos(theta), speed * np.sin(theta), np.zeros_like(theta)), axis=-1
        )

    def control_matrix(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(gain, x.shape[:-1] + gain.shape)

    return DynamicsModel(
        state_dim=3,
        control_dim=1,
        drift=drift,
        control_matrix=control_matrix,
        alpha=float(car.alpha),
        name="kinematic_car",
    )


@dataclass(frozen=True, slots=True)
class Rect:
    """Closed axis-aligned rectangle."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self) -> None:
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ScenarioError(f"degenerate rectangle {self}")

    def contains(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        x, y = xy[..., 0], xy[..., 1]
        return (x >= self.x_lo) & (x <= self.x_hi) & (y >= self.y_lo) & (y <= self.y_hi)

    def inside(self, other: Rect) -> bool:
        return (
            other.x_lo <= self.x_lo
            and self.x_hi <= other.x_hi
            and other.y_lo <= self.y_lo
            and self.y_hi <= other.y_hi
        )

    def to_mapping(self) -> dict[str, list[float]]:
        return {"x": [self.x_lo, self.x_hi], "y": [self.y_lo, self.y_hi]}


@dataclass(frozen=True, slots=True)
class GoalSet:
    center: tuple[float, float]
    radius: float
    time_window: tuple[float, float]

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ScenarioError(f"goal radius must be positive, got {self.radius}")
        lo, hi = self.time_window
        if not lo < hi:
            raise ScenarioError(f"goal time window must satisfy lo < hi, got {self.time_window}")

    def contains(self, state: np.ndarray, time: float) -> bool:
        lo, hi = self.time_window
        if not lo - TIME_TOLERANCE <= time <= hi + TIME_TOLERANCE:
            return False
        return bool(self.position_distance(state) <= self.radius)

    def position_distance(self, state: np.ndarray) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        return np.hypot(state[..., 0] - self.center[0], state[..., 1] - self.center[1])

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """Uniform draw from disc x heading x time window."""
        r = self.radius * math.sqrt(rng.uniform())
        phi = rng.uniform(-math.pi, math.pi)
        heading = rng.uniform(-math.pi, math.pi)
        time = rng.uniform(*self.time_window)
        state = np.array(
            [self.center[0] + r * math.cos(phi), self.center[1] + r * math.sin(phi), heading]
        )
        return state, time


@dataclass(frozen=True, slots=True)
class CorridorBand:
    label: Corridor
    y_lo: float
    y_hi: float


@dataclass(frozen=True, slots=True)
class Contact:
    """First collision along a polyline: the vertex index that closes it and the xy hit."""

    index: int
    point: np.ndarray


@dataclass(frozen=True, slots=True)
class Environment:
    name: str
    bounds: Rect
    obstacles: tuple[Rect, ...]
    goal: GoalSet
    start: tuple[float, ...] = (-9.0, 0.0, 0.0)
    t_init: float = 0.0
    t_f: float = 10.0
    block_x: tuple[float, float] | None = None
    corridors: tuple[CorridorBand, ...] = ()

    def __post_init__(self) -> None:
        for rect in self.obstacles:
            if not rect.inside(self.bounds):
                raise ScenarioError(f"obstacle {rect} leaves the workspace {self.bounds}")
        if not self.t_init <= self.t_f:
            raise ScenarioError(f"t_init {self.t_init} is after t_f {self.t_f}")
        if self.goal.time_window[1] > self.t_f + TIME_TOLERANCE:
            raise ScenarioError("goal time window ends after t_f")
        if not bool(self.bounds.contains(np.asarray(self.start[:2]))):
            raise ScenarioError(f"start {self.start} lies outside the workspace")
        if self.corridors:
            if self.block_x is None:
                raise ScenarioError("corridor bands need a block x-interval")
            edges = [self.bounds.y_lo]
            for band in self.corridors:
                if band.y_lo != edges[-1] or not band.y_lo < band.y_hi:
                    raise ScenarioError(f"corridor bands are not contiguous at {band}")
                edges.append(band.y_hi)
            if edges[-1] != self.bounds.y_hi:
                raise ScenarioError("corridor bands do not cover the workspace height")

    # collision predicates

    def point_collides(self, xy: np.ndarray) -> np.ndarray:
        """Closed obstacles; anything outside the workspace collides."""
        xy = np.asarray(xy, dtype=float)
        hit = ~self.bounds.contains(xy)
        for rect in self.obstacles:
            hit = hit | rect.contains(xy)
        return hit

    def segments_collide(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Per-segment test for segments a[i] -> b[i] (shape (N, 2) each)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        # the workspace is convex, so a segment leaves it iff an endpoint does
        hit = ~self.bounds.contains(a) | ~self.bounds.contains(b)
        for rect in self.obstacles:
            hit = hit | np.isfinite(_segment_entry(a, b, rect))
        return hit

    def first_collision(self, states: np.ndarray) -> int | None:
        """Index of the first point that collides or closes a colliding segment."""
        contact = self.first_contact(states)
        return None if contact is None else contact.index

    def first_contact(self, states: np.ndarray) -> Contact | None:
        """Where a polyline first touches an obstacle or leaves the workspace.

        The point is the colliding vertex itself, or the spot where the closing
        segment enters the obstacle when only the segment clips it.
        """
        xy = np.asarray(states, dtype=float)[:, :2]
        bad = self.point_collides(xy)
        if xy.shape[0] > 1:
            bad[1:] |= self.segments_collide(xy[:-1], xy[1:])
        hits = np.flatnonzero(bad)
        if not hits.size:
            return None
        index = int(hits[0])
        if index == 0 or bool(self.point_collides(xy[index])):
            return Contact(index, xy[index].copy())
        a, b = xy[index - 1], xy[index]
        best = None
        for rect in self.obstacles:
            entry = float(_segment_entry(a[None], b[None], rect)[0])
            if math.isfinite(entry) and (best is None or entry < best[0]):
                best = (entry, rect)
        entry, rect = best
        point = np.clip(a + entry * (b - a), [rect.x_lo, rect.y_lo], [rect.x_hi, rect.y_hi])
        return Contact(index, point)

    def trajectory_collides(self, states: np.ndarray) -> bool:
        return self.first_collision(states) is not None

    # corridor classification

    def corridor_at(self, y: float) -> Corridor | None:
        if not self.corridors:
            return None
        cuts = [band.y_hi for band in self.corridors[:-1]]
        return self.corridors[int(np.searchsorted(cuts, y, side="right"))].label

    def classify(self, states: np.ndarray) -> Corridor | None:
        if self.block_x is None or not self.corridors:
            return None
        mid = 0.5 * (self.block_x[0] + self.block_x[1])
        xy = np.asarray(states, dtype=float)[:, :2]
        if xy.shape[0] < 2:
            return None
        x0, x1 = xy[:-1, 0], xy[1:, 0]
        crossing = ((x0 < mid) & (x1 >= mid)) | ((x0 > mid) & (x1 <= mid))
        hits = np.flatnonzero(crossing)
        if not hits.size:
            return None
        i = int(hits[0])
        frac = (mid - x0[i]) / (x1[i] - x0[i])
        y = xy[i, 1] + frac * (xy[i + 1, 1] - xy[i, 1])
        return self.corridor_at(float(y))

    def to_mapping(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "name": self.name,
            "bounds": self.bounds.to_mapping(),
            "start": {"state": list(self.start), "time": self.t_init},
            "final_time": self.t_f,
            "goal": {
                "center": list(self.goal.center),
                "radius": self.goal.radius,
                "window": list(self.goal.time_window),
            },
            "obstacles": [rect.to_mapping() for rect in self.obstacles],
        }
        if self.block_x is not None:
            data["block"] = {"x": list(self.block_x)}
        if self.corridors:
            data["corridors"] = [
                {"label": band.label.value, "y": [band.y_lo, band.y_hi]} for band in self.corridors
            ]
        return data


def _segment_entry(a: np.ndarray, b: np.ndarray, rect: Rect) -> np.ndarray:
    """Slab clipping: where each segment enters the rectangle (0..1), inf if it never does."""
    lo = np.array([rect.x_lo, rect.y_lo])
    hi = np.array([rect.x_hi, rect.y_hi])
    d = b - a
    parallel = d == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        s_lo = (lo - a) / d
        s_hi = (hi - a) / d
    in_slab = (a >= lo) & (a <= hi)
    enter = np.where(parallel, np.where(in_slab, -np.inf, np.inf), np.minimum(s_lo, s_hi))
    leave = np.where(parallel, np.where(in_slab, np.inf, -np.inf), np.maximum(s_lo, s_hi))
    t_enter = np.maximum(enter.max(axis=-1), 0.0)
    t_leave = np.minimum(leave.min(axis=-1), 1.0)
    return np.where(t_enter <= t_leave, t_enter, np.inf)


def _pair(value: Any, name: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{name} must be a pair of numbers, got {value!r}") from exc
    return lo, hi


def _rect(data: Any, name: str) -> Rect:
    if not isinstance(data, dict):
        raise ScenarioError(f"{name} must be a mapping with x and y intervals")
    return Rect(*_pair(data.get("x"), f"{name}.x"), *_pair(data.get("y"), f"{name}.y"))


def environment_from_mapping(data: dict[str, Any]) -> Environment:
    if not isinstance(data, dict):
        raise ScenarioError("environment document must be a mapping")
    try:
        goal_data = data["goal"]
        start = data.get("start", {})
        goal = GoalSet(
            center=_pair(goal_data["center"], "goal.center"),
            radius=float(goal_data["radius"]),
            time_window=_pair(goal_data["window"], "goal.window"),
        )
        corridors = []
        for band in data.get("corridors") or []:
            try:
                label = Corridor(band["label"])
            except ValueError as exc:
                raise ScenarioError(f"unknown corridor label {band['label']!r}") from exc
            corridors.append(CorridorBand(label, *_pair(band["y"], "corridor.y")))
        block = data.get("block")
        return Environment(
            name=str(data.get("name", "custom")),
            bounds=_rect(data["bounds"], "bounds"),
            obstacles=tuple(
                _rect(item, f"obstacles[{i}]") for i, item in enumerate(data.get("obstacles") or [])
            ),
            goal=goal,
            start=tuple(float(v) for v in start.get("state", (-9.0, 0.0, 0.0))),
            t_init=float(start.get("time", 0.0)),
            t_f=float(data.get("final_time", 10.0)),
            block_x=_pair(block["x"], "block.x") if block else None,
            corridors=tuple(corridors),
        )
    except KeyError as exc:
        raise ScenarioError(f"environment document is missing {exc.args[0]!r}") from exc


def load_environment(path: Path) -> Environment:
    with path.open("r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return environment_from_mapping(data)


WORKSPACE = Rect(-10.0, 10.0, -10.0, 10.0)
DEFAULT_GOAL = GoalSet(center=(9.0, 0.0), radius=1.0, time_window=(9.5, 10.0))


def slit_block_world(
    name: str,
    block_x: tuple[float, float],
    block_y: tuple[float, float],
    gaps: list[tuple[float, float]],
    workspace: Rect = WORKSPACE,
    goal: GoalSet = DEFAULT_GOAL,
) -> Environment:
    """A solid block at ``block_x`` with horizontal gaps cut through it.

    Corridor bands are cut at the middle of each solid piece, so the band
    around a gap covers that gap and half of the solid on either side.
    """
    if len(gaps) == 1:
        labels = [Corridor.SLIT]
    elif len(gaps) == 2:
        labels = [Corridor.BOTTOM_SLIT, Corridor.TOP_SLIT]
    else:
        raise ScenarioError(f"a slit block needs one or two gaps, got {len(gaps)}")
    edges = [block_y[0]]
    for lo, hi in sorted(gaps):
        if not hi > lo:
            raise ScenarioError(f"slit height must be positive, got gap ({lo}, {hi})")
        edges.extend([lo, hi])
    edges.append(block_y[1])
    solids = [Rect(block_x[0], block_x[1], edges[i], edges[i + 1]) for i in range(0, len(edges), 2)]
    cuts = [0.5 * (rect.y_lo + rect.y_hi) for rect in solids]
    band_edges = [workspace.y_lo, *cuts, workspace.y_hi]
    band_labels = [Corridor.BOTTOM_CORNER, *labels, Corridor.TOP_CORNER]
    corridors = tuple(
        CorridorBand(label, band_edges[i], band_edges[i + 1]) for i, label in enumerate(band_labels)
    )
    return Environment(
        name=name,
        bounds=workspace,
        obstacles=tuple(solids),
        goal=goal,
        block_x=block_x,
        corridors=corridors,
    )


def single_slit_world(
    block_x: tuple[float, float] = (-0.5, 0.5),
    block_y: tuple[float, float] = (-3.5, 3.5),
    slit: tuple[float, float] = (-0.5, 0.5),
) -> Environment:
    return slit_block_world("single_slit", block_x, block_y, [slit])


def double_slit_world(
    block_x: tuple[float, float] = (-1.5, 1.5),
    block_y: tuple[float, float] = (-3.5, 3.5),
    slits: tuple[tuple[float, float], tuple[float, float]] = ((-2.5, -1.5), (1.5, 2.5)),
) -> Environment:
    return slit_block_world("double_slit", block_x, block_y, list(slits))


def open_field_world() -> Environment:
    return Environment(name="open_field", bounds=WORKSPACE, obstacles=(), goal=DEFAULT_GOAL)
