from __future__ import annotations

from pathlib import Path

import pytest
import yaml

from pirrt.config import (
    ExperimentConfig,
    PlannerParams,
    default_sweep_path,
    load_config,
    load_experiments,
    normalize_algorithm,
)
from pirrt.world_models import ScenarioError


def test_xdg_paths(xdg_env):
    config_home, cache_home, data_home = xdg_env
    cfg = load_config()
    assert cfg.config_dir == config_home / "pirrt"
    assert cfg.cache_dir == cache_home / "pirrt"
    assert cfg.data_dir == data_home / "pirrt"
    assert cfg.journal_path == cache_home / "pirrt" / "runs.jsonl"
    assert cfg.output_dir == data_home / "pirrt" / "runs"
    assert cfg.workers == 1
    assert cfg.params == PlannerParams()


def test_env_overrides(monkeypatch, tmp_path, xdg_env):
    monkeypatch.setenv("PIRRT_CONFIG_DIR", str(tmp_path / "custom-config"))
    monkeypatch.setenv("PIRRT_CACHE_DIR", str(tmp_path / "custom-cache"))
    monkeypatch.setenv("PIRRT_DATA_DIR", str(tmp_path / "custom-data"))
    cfg = load_config()
    assert cfg.config_dir == Path(tmp_path / "custom-config").resolve()
    assert cfg.cache_dir == Path(tmp_path / "custom-cache").resolve()
    assert cfg.data_dir == Path(tmp_path / "custom-data").resolve()


def test_user_config_file(write_user_config, monkeypatch, tmp_path):
    monkeypatch.setenv("PIRRT_TEST_OUT", str(tmp_path / "results"))
    write_user_config(
        {
            "output_dir": "${PIRRT_TEST_OUT}",
            "workers": 4,
            "mission_timeout": 5,
            "params": {"bundle_size": 20, "per_step_weights": False},
        }
    )
    cfg = load_config()
    assert cfg.output_dir == (tmp_path / "results").resolve()
    assert cfg.workers == 4
    assert cfg.mission_timeout == 5.0
    assert cfg.params.bundle_size == 20
    assert cfg.params.per_step_weights is False
    assert cfg.params.budget == PlannerParams().budget


def test_unknown_param_in_config_file(write_user_config):
    write_user_config({"params": {"bundel_size": 20}})
    with pytest.raises(ValueError, match="bundel_size"):
        load_config()


def test_builtin_scenarios(xdg_env):
    cfg = load_config()
    assert cfg.scenario_names() == ["double_slit", "open_field", "single_slit"]
    env = cfg.load_scenario("double_slit")
    assert len(env.obstacles) == 3
    assert cfg.scenario_path("double_slit").parent.name == "presets"


def test_user_scenario_shadows_builtin(xdg_env, short_hop):
    config_home, _, _ = xdg_env
    target = config_home / "pirrt" / "scenarios" / "single_slit.yaml"
    target.parent.mkdir(parents=True)
    target.write_text(yaml.safe_dump(short_hop.to_mapping()), encoding="utf-8")
    cfg = load_config()
    assert cfg.scenario_path("single_slit") == target
    assert cfg.load_scenario("single_slit").t_f == 2.0
    assert cfg.scenario_names().count("single_slit") == 1


def test_geometry_overrides_merge(xdg_env):
    cfg = load_config()
    env = cfg.load_scenario("open_field", {"final_time": 12.0, "goal": {"radius": 2.0}})
    assert env.t_f == 12.0
    assert env.goal.radius == 2.0
    assert env.goal.center == (9.0, 0.0)


def test_unknown_scenario(xdg_env):
    with pytest.raises(ScenarioError, match="double_slit"):
        load_config().load_scenario("triple_slit")


def test_default_sweep_grid():
    configs = load_experiments(default_sweep_path())
    assert len(configs) == 6
    assert {(c.algorithm, c.alpha) for c in configs} == {
        (a, x) for a in ("rrt", "pirrt") for x in (0.25, 0.5, 1.0)
    }
    assert all(c.scenario == "double_slit" and c.master_seed == 2024 for c in configs)
    assert configs[0].params.bundle_size == 100


def test_sweep_runs_list(tmp_path):
    path = tmp_path / "runs.yaml"
    path.write_text(
        yaml.safe_dump(
            {
                "defaults": {"scenario": "single_slit", "trials": 5, "params": {"budget": 100}},
                "runs": [
                    {"algorithm": "RRT", "alpha": 0.5},
                    {"algorithm": "PI-RRT", "alpha": 0.5, "params": {"bundle_size": 7}},
                ],
            }
        ),
        encoding="utf-8",
    )
    first, second = load_experiments(path, PlannerParams(steer_samples=3))
    assert (first.algorithm, second.algorithm) == ("rrt", "pirrt")
    assert first.params.budget == second.params.budget == 100
    assert first.params.steer_samples == 3
    assert first.params.bundle_size == 100
    assert second.params.bundle_size == 7
    assert second.trials == 5


def test_bad_sweep_files(tmp_path):
    with pytest.raises(ValueError):
        load_experiments(tmp_path / "missing.yaml")
    empty = tmp_path / "empty.yaml"
    empty.write_text(yaml.safe_dump({"defaults": {"scenario": "single_slit"}}), encoding="utf-8")
    with pytest.raises(ValueError, match="no runs"):
        load_experiments(empty)
    typo = tmp_path / "typo.yaml"
    typo.write_text(
        yaml.safe_dump({"runs": [{"scenario": "single_slit", "algorithm": "rrt", "alpa": 1}]}),
        encoding="utf-8",
    )
    with pytest.raises(ValueError, match="alpa"):
        load_experiments(typo)


def test_normalize_algorithm():
    assert normalize_algorithm("PI-RRT") == "pirrt"
    assert normalize_algorithm(" rrt ") == "rrt"
    with pytest.raises(ValueError):
        normalize_algorithm("prm")


def test_planner_params_validation():
    with pytest.raises(ValueError):
        PlannerParams(dt=0.0)
    with pytest.raises(ValueError):
        PlannerParams(control_bounds=(1.0, -1.0))
    with pytest.raises(ValueError):
        PlannerParams(execute_steps=0)
    with pytest.raises(ValueError):
        PlannerParams(goal_bias=1.5)
    with pytest.raises(ValueError):
        PlannerParams(replan_mode="teleport")
    with pytest.raises(ValueError):
        PlannerParams(pi_iterations=0)
    with pytest.raises(ValueError):
        PlannerParams(min_effective_samples=-1.0)
    with pytest.raises(ValueError):
        PlannerParams(completion_controls=0)
    assert PlannerParams(control_bounds=[-2, 2]).control_bounds == (-2.0, 2.0)


def test_resolve_steer_alpha():
    params = PlannerParams()
    assert params.resolve_steer_alpha(0.5) == 0.5
    assert params.resolve_steer_alpha(0.0) == params.steer_alpha_floor
    # a quiet model still steers with enough noise to turn
    assert params.resolve_steer_alpha(0.1) == 0.25
    assert PlannerParams(steer_alpha_floor=0.0).resolve_steer_alpha(0.1) == 0.1
    assert PlannerParams(steer_alpha=0.1).resolve_steer_alpha(0.5) == 0.1


def test_experiment_config_round_trip():
    config = ExperimentConfig(
        scenario="double_slit",
        algorithm="PI_RRT",
        alpha=1,
        trials=10,
        master_seed=9,
        params=PlannerParams(bundle_size=12),
        geometry={"final_time": 12.0},
    )
    assert config.algorithm == "pirrt"
    assert config.alpha == 1.0
    assert ExperimentConfig.from_mapping(config.to_dict()) == config
    with pytest.raises(ValueError):
        ExperimentConfig(scenario="double_slit", algorithm="rrt", alpha=-0.1)
    with pytest.raises(ValueError):
        ExperimentConfig.from_mapping({"scenario": "double_slit", "alpha": 0.5})
