from __future__ import annotations

import copy
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Any

import yaml

from pirrt.world_models import Environment, ScenarioError, environment_from_mapping

if TYPE_CHECKING:
    from pirrt.rrt_planner import DistanceMetric

ALGORITHMS = ("rrt", "pirrt")
REPLAN_MODES = ("replan", "track")


def _expand_path(value: str | Path) -> Path:
    return Path(value).expanduser().resolve()


def _env_path(env_name: str, default: Path) -> Path:
    return _expand_path(os.getenv(env_name, str(default)))


def _xdg_base(env_name: str, fallback_suffix: str) -> Path:
    default = Path.home() / fallback_suffix
    return _expand_path(os.getenv(env_name, str(default)))


def _expand_env_vars(text: str) -> str:
    """Expand ${VAR} references in text using environment variables."""
    return os.path.expandvars(text)


def _load_yaml(path: Path) -> dict[str, Any]:
    if not path.exists():
        return {}
    with path.open("r", encoding="utf-8") as fh:
        raw = fh.read()
    data = yaml.safe_load(_expand_env_vars(raw)) or {}
    if not isinstance(data, dict):
        return {}
    return data


def presets_dir() -> Path:
    return Path(__file__).with_name("presets")


def default_sweep_path() -> Path:
    return presets_dir() / "sweep.yaml"


def default_sweep_text() -> str:
    return default_sweep_path().read_text(encoding="utf-8")


@dataclass(slots=True)
class PlannerParams:
    """Every tunable of the planner, the bundle and the mission loop."""

    dt: float = 0.1
    speed: float = 2.0
    turn_constant: float = 1.0
    control_bounds: tuple[float, float] = (-1.0, 1.0)
    steer_samples: int = 10
    steer_horizon: int = 10
    budget: int = 6000
    heading_weight: float = 1.0
    time_weight: float = 2.0
    goal_bias: float = 0.05
    steer_alpha: float | None = None
    steer_alpha_floor: float = 0.25
    bundle_size: int = 100
    execute_steps: int = 10
    terminal_weight: float = 1.0
    per_step_weights: bool = True
    min_effective_samples: float = 20.0
    completion_controls: int = 5
    pi_iterations: int = 1
    replan_mode: str = "replan"

    def __post_init__(self) -> None:
        bounds = tuple(float(v) for v in self.control_bounds)
        if len(bounds) != 2 or not bounds[0] < bounds[1]:
            raise ValueError(f"control_bounds must be (lo, hi) with lo < hi: {bounds}")
        self.control_bounds = bounds
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        for name in (
            "steer_samples",
            "steer_horizon",
            "execute_steps",
            "pi_iterations",
            "completion_controls",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("budget", "bundle_size"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError(f"goal_bias must be in [0, 1], got {self.goal_bias}")
        if self.steer_alpha is not None and self.steer_alpha < 0:
            raise ValueError(f"steer_alpha must be >= 0, got {self.steer_alpha}")
        if not self.steer_alpha_floor >= 0:
            raise ValueError(f"steer_alpha_floor must be >= 0, got {self.steer_alpha_floor}")
        if not self.min_effective_samples >= 0:
            raise ValueError(
                f"min_effective_samples must be >= 0, got {self.min_effective_samples}"
            )
        if self.replan_mode not in REPLAN_MODES:
            raise ValueError(f"replan_mode must be one of {REPLAN_MODES}, got {self.replan_mode!r}")

    @classmethod
    def from_mapping(cls, data: dict[str, Any] | None) -> PlannerParams:
        return cls().with_overrides(data or {})

    def with_overrides(self, overrides: dict[str, Any]) -> PlannerParams:
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ValueError(f"unknown parameter(s): {', '.join(unknown)}")
        return replace(self, **overrides)

    def resolve_steer_alpha(self, model_alpha: float) -> float:
        """Steering noise for the tree: the override, else the model alpha raised to the floor."""
        if self.steer_alpha is not None:
            return self.steer_alpha
        return max(model_alpha, self.steer_alpha_floor)

    def metric(self) -> DistanceMetric:
        from pirrt.rrt_planner import DistanceMetric

        return DistanceMetric(self.heading_weight, self.time_weight)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["control_bounds"] = list(self.control_bounds)
        return data


def normalize_algorithm(name: str) -> str:
    key = name.strip().lower().replace("-", "").replace("_", "")
    if key not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}")
    return key


@dataclass(slots=True)
class ExperimentConfig:
    scenario: str
    algorithm: str
    alpha: float
    trials: int = 100
    master_seed: int = 0
    paired: bool = False
    params: PlannerParams = field(default_factory=PlannerParams)
    geometry: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.algorithm = normalize_algorithm(self.algorithm)
        self.alpha = float(self.alpha)
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer: {self.master_seed}")

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown experiment key(s): {', '.join(unknown)}")
        missing = [key for key in ("scenario", "algorithm", "alpha") if key not in data]
        if missing:
            raise ValueError(f"experiment is missing {', '.join(missing)}")
        values = dict(data)
        values["params"] = PlannerParams.from_mapping(values.get("params"))
        values["geometry"] = dict(values.get("geometry") or {})
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "algorithm": self.algorithm,
            "alpha": self.alpha,
            "trials": self.trials,
            "master_seed": self.master_seed,
            "paired": self.paired,
            "params": self.params.to_dict(),
            "geometry": copy.deepcopy(self.geometry),
        }


@dataclass(slots=True)
class PirrtConfig:
    config_dir: Path
    cache_dir: Path
    data_dir: Path
    config_path: Path
    scenarios_dir: Path
    journal_path: Path
    output_dir: Path
    workers: int = 1
    mission_timeout: float = 60.0
    params: PlannerParams = field(default_factory=PlannerParams)
    config_data: dict[str, Any] = field(default_factory=dict)

    def scenario_path(self, name: str) -> Path | None:
        """User preset first, then the packaged one."""
        for folder in (self.scenarios_dir, presets_dir()):
            candidate = folder / f"{name}.yaml"
            if candidate.is_file():
                return candidate
        return None

    def scenario_names(self) -> list[str]:
        names = set()
        for folder in (presets_dir(), self.scenarios_dir):
            if folder.is_dir():
                names.update(p.stem for p in folder.glob("*.yaml") if _is_environment(p))
        return sorted(names)

    def load_scenario(self, name: str, geometry: dict[str, Any] | None = None) -> Environment:
        path = self.scenario_path(name)
        if path is None or not _is_environment(path):
            known = ", ".join(self.scenario_names())
            raise ScenarioError(f"unknown scenario {name!r} (known: {known})")
        data = _merge(_load_yaml(path), geometry or {})
        return environment_from_mapping(data)


def _is_environment(path: Path) -> bool:
    return "obstacles" in _load_yaml(path)


def _merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_experiments(path: Path, defaults: PlannerParams | None = None) -> list[ExperimentConfig]:
    """Read a sweep file: shared ``defaults`` plus a ``runs`` list or a grid."""
    data = _load_yaml(path)
    if not data:
        raise ValueError(f"sweep file {path} is missing or empty")
    shared = dict(data.get("defaults") or {})
    base_params = (defaults or PlannerParams()).with_overrides(shared.pop("params", None) or {})
    runs = list(data.get("runs") or [])
    if not runs:
        algorithms = data.get("algorithms") or []
        alphas = data.get("alphas") or []
        runs = [{"algorithm": a, "alpha": x} for a in algorithms for x in alphas]
    if not runs:
        raise ValueError(f"sweep file {path} defines no runs")
    configs = []
    for run in runs:
        entry = {**shared, **run}
        params = base_params.with_overrides(entry.pop("params", None) or {})
        config = ExperimentConfig.from_mapping({**entry, "params": params.to_dict()})
        configs.append(config)
    return configs


def load_config() -> PirrtConfig:
    xdg_config = _xdg_base("XDG_CONFIG_HOME", ".config")
    xdg_cache = _xdg_base("XDG_CACHE_HOME", ".cache")
    xdg_data = _xdg_base("XDG_DATA_HOME", ".local/share")

    config_dir = _env_path("PIRRT_CONFIG_DIR", xdg_config / "pirrt")
    cache_dir = _env_path("PIRRT_CACHE_DIR", xdg_cache / "pirrt")
    data_dir = _env_path("PIRRT_DATA_DIR", xdg_data / "pirrt")

    config_path = config_dir / "config.yaml"
    config_data = _load_yaml(config_path)

    output_raw = config_data.get("output_dir", str(data_dir / "runs"))
    output_dir = _expand_path(str(output_raw))
    workers = int(config_data.get("workers", 1))
    mission_timeout = float(config_data.get("mission_timeout", 60.0))
    params = PlannerParams.from_mapping(config_data.get("params"))

    return PirrtConfig(
        config_dir=config_dir,
        cache_dir=cache_dir,
        data_dir=data_dir,
        config_path=config_path,
        scenarios_dir=config_dir / "scenarios",
        journal_path=cache_dir / "runs.jsonl",
        output_dir=output_dir,
        workers=max(1, workers),
        mission_timeout=mission_timeout,
        params=params,
        config_data=config_data,
    )
