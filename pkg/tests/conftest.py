from __future__ import annotations

import pytest
import yaml

from pirrt.config import PlannerParams
from pirrt.world_models import (
    WORKSPACE,
    Environment,
    GoalSet,
    KinematicCarModel,
    car_dynamics,
    open_field_world,
    single_slit_world,
)


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run slow Monte Carlo acceptance runs"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def xdg_env(monkeypatch: pytest.MonkeyPatch, tmp_path):
    config_home = tmp_path / "config"
    cache_home = tmp_path / "cache"
    data_home = tmp_path / "data"
    monkeypatch.setenv("XDG_CONFIG_HOME", str(config_home))
    monkeypatch.setenv("XDG_CACHE_HOME", str(cache_home))
    monkeypatch.setenv("XDG_DATA_HOME", str(data_home))
    monkeypatch.delenv("PIRRT_CONFIG_DIR", raising=False)
    monkeypatch.delenv("PIRRT_CACHE_DIR", raising=False)
    monkeypatch.delenv("PIRRT_DATA_DIR", raising=False)
    return config_home, cache_home, data_home


@pytest.fixture
def car():
    return car_dynamics(KinematicCarModel(alpha=0.25))


@pytest.fixture
def noiseless_car():
    return car_dynamics(KinematicCarModel(alpha=0.0))


@pytest.fixture
def open_field():
    return open_field_world()


@pytest.fixture
def single_slit():
    return single_slit_world()


@pytest.fixture
def tiny_params():
    """Small enough for a whole mission to run in well under a second."""
    return PlannerParams(budget=300, bundle_size=8, steer_samples=5, execute_steps=25)


@pytest.fixture
def write_user_config(xdg_env):
    config_home, _, _ = xdg_env

    def write(data):
        target = config_home / "pirrt" / "config.yaml"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(yaml.safe_dump(data), encoding="utf-8")
        return target

    return write


@pytest.fixture
def short_hop():
    """Open field with a 2 s horizon; straight ahead ends in the goal disc."""
    return Environment(
        name="short_hop",
        bounds=WORKSPACE,
        obstacles=(),
        goal=GoalSet(center=(2.0, 0.0), radius=1.0, time_window=(1.5, 2.0)),
        start=(-2.0, 0.0, 0.0),
        t_f=2.0,
    )


@pytest.fixture
def short_hop_scenario(xdg_env, short_hop):
    config_home, _, _ = xdg_env
    target = config_home / "pirrt" / "scenarios" / "short_hop.yaml"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(yaml.safe_dump(short_hop.to_mapping()), encoding="utf-8")
    return target
