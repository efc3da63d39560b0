from __future__ import annotations

import numpy as np
import pytest
import yaml

from pirrt.config import load_config
from pirrt.streams import Streams
from pirrt.world_models import (
    WORKSPACE,
    Corridor,
    Environment,
    GoalSet,
    KinematicCarModel,
    Rect,
    ScenarioError,
    car_dynamics,
    double_slit_world,
    environment_from_mapping,
    load_environment,
    single_slit_world,
    slit_block_world,
)


def _crossing_at(y: float) -> np.ndarray:
    return np.array([[-5.0, y, 0.0], [-0.8, y, 0.0], [0.8, y, 0.0], [5.0, y, 0.0]])


def test_car_drift_is_batched():
    model = car_dynamics(KinematicCarModel(speed=2.0))
    states = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, np.pi / 2]])
    drift = model.drift(states)
    np.testing.assert_allclose(drift, [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0]], atol=1e-12)
    gain = model.control_matrix(states)
    assert gain.shape == (2, 3, 1)
    assert gain[1, 2, 0] == 1.0


def test_car_parameters_are_validated():
    with pytest.raises(ValueError):
        KinematicCarModel(speed=0.0)
    with pytest.raises(ValueError):
        KinematicCarModel(alpha=-0.1)


def test_degenerate_rect_is_rejected():
    with pytest.raises(ScenarioError):
        Rect(0.0, 0.0, 0.0, 1.0)


def test_point_collisions_are_closed(single_slit):
    assert single_slit.point_collides(np.array([0.0, 2.0]))
    # boundary of the upper solid piece
    assert single_slit.point_collides(np.array([0.5, 0.5]))
    assert not single_slit.point_collides(np.array([0.0, 0.0]))
    assert single_slit.point_collides(np.array([10.5, 0.0]))
    hits = single_slit.point_collides(np.array([[0.0, 2.0], [0.0, 0.0]]))
    assert hits.tolist() == [True, False]


def test_segment_through_thin_block_collides(single_slit):
    a = np.array([[-1.0, 2.0], [-1.0, 0.0], [-1.0, 0.5], [-1.0, 4.0]])
    b = np.array([[1.0, 2.0], [1.0, 0.0], [1.0, 0.5], [1.0, 4.0]])
    assert single_slit.segments_collide(a, b).tolist() == [True, False, True, False]


def test_diagonal_segment_clipping():
    env = Environment(
        name="box",
        bounds=WORKSPACE,
        obstacles=(Rect(0.0, 1.0, 0.0, 1.0),),
        goal=GoalSet((9.0, 0.0), 1.0, (9.5, 10.0)),
    )
    a = np.array([[-1.0, 0.5], [-1.0, 1.6]])
    b = np.array([[0.5, 2.0], [1.6, -1.0]])
    # the first passes above the box, the second cuts through it
    assert env.segments_collide(a, b).tolist() == [False, True]


def test_first_collision_index(single_slit):
    states = np.array([[-2.0, 2.0, 0.0], [-1.0, 2.0, 0.0], [0.0, 2.0, 0.0], [1.0, 2.0, 0.0]])
    assert single_slit.first_collision(states) == 2
    assert single_slit.first_collision(_crossing_at(0.0)) is None
    assert single_slit.trajectory_collides(states)
    contact = single_slit.first_contact(states)
    assert contact.index == 2
    np.testing.assert_array_equal(contact.point, [0.0, 2.0])
    assert single_slit.first_contact(_crossing_at(0.0)) is None


def test_corner_clip_reports_the_entry_point(single_slit):
    # the segment clips the top corner of the upper piece; neither endpoint is inside
    states = np.array([[-0.6, 3.35, 0.0], [-0.4, 3.55, 0.0]])
    assert not single_slit.point_collides(states[:, :2]).any()
    contact = single_slit.first_contact(states)
    assert contact.index == 1
    np.testing.assert_allclose(contact.point, [-0.5, 3.45], atol=1e-12)
    assert single_slit.point_collides(contact.point)


@pytest.mark.parametrize(
    ("y", "label"),
    [(0.0, Corridor.SLIT), (5.0, Corridor.TOP_CORNER), (-5.0, Corridor.BOTTOM_CORNER)],
)
def test_single_slit_classification(single_slit, y, label):
    assert single_slit.classify(_crossing_at(y)) is label


@pytest.mark.parametrize(
    ("y", "label"),
    [
        (-2.0, Corridor.BOTTOM_SLIT),
        (2.0, Corridor.TOP_SLIT),
        (-6.0, Corridor.BOTTOM_CORNER),
        (6.0, Corridor.TOP_CORNER),
    ],
)
def test_double_slit_classification(y, label):
    assert double_slit_world().classify(_crossing_at(y)) is label


def test_classification_uses_the_interpolated_crossing():
    env = double_slit_world()
    # crosses x = 0 halfway between y = 1 and y = 5, i.e. at y = 3
    states = np.array([[-1.0, 1.0, 0.0], [1.0, 5.0, 0.0]])
    assert env.corridor_at(3.0) is Corridor.TOP_CORNER
    assert env.classify(states) is Corridor.TOP_CORNER


def test_no_crossing_means_no_label(single_slit):
    states = np.array([[-9.0, 0.0, 0.0], [-5.0, 0.0, 0.0]])
    assert single_slit.classify(states) is None
    assert single_slit.classify(states[:1]) is None


def test_slit_bands_cut_at_solid_midpoints():
    env = double_slit_world()
    cuts = [(band.label, band.y_lo, band.y_hi) for band in env.corridors]
    assert cuts == [
        (Corridor.BOTTOM_CORNER, -10.0, -3.0),
        (Corridor.BOTTOM_SLIT, -3.0, 0.0),
        (Corridor.TOP_SLIT, 0.0, 3.0),
        (Corridor.TOP_CORNER, 3.0, 10.0),
    ]
    with pytest.raises(ScenarioError):
        slit_block_world("bad", (-1, 1), (-3, 3), [(-2, -1), (0, 0.5), (1, 2)])


def test_goal_set_membership():
    goal = GoalSet((9.0, 0.0), 1.0, (9.5, 10.0))
    assert goal.contains(np.array([9.5, 0.5, 0.0]), 10.0)
    assert goal.contains(np.array([9.0, 0.0, 0.0]), 9.5 - 1e-12)
    assert not goal.contains(np.array([9.0, 0.0, 0.0]), 9.0)
    assert not goal.contains(np.array([7.9, 0.0, 0.0]), 10.0)


def test_goal_samples_stay_in_the_goal():
    goal = GoalSet((9.0, 0.0), 1.0, (9.5, 10.0))
    rng = Streams(3).generator("goal")
    for _ in range(200):
        state, time = goal.sample(rng)
        assert goal.contains(state, time)


def test_presets_match_builders(xdg_env):
    cfg = load_config()
    assert cfg.load_scenario("single_slit") == single_slit_world()
    assert cfg.load_scenario("double_slit") == double_slit_world()
    assert cfg.load_scenario("open_field").obstacles == ()


def test_mapping_round_trip(tmp_path):
    env = double_slit_world()
    assert environment_from_mapping(env.to_mapping()) == env
    path = tmp_path / "world.yaml"
    path.write_text(yaml.safe_dump(env.to_mapping()), encoding="utf-8")
    assert load_environment(path) == env


def test_bad_geometry_is_rejected():
    base = single_slit_world().to_mapping()
    missing_goal = {k: v for k, v in base.items() if k != "goal"}
    with pytest.raises(ScenarioError):
        environment_from_mapping(missing_goal)
    outside = dict(base, obstacles=[{"x": [9.0, 11.0], "y": [0.0, 1.0]}])
    with pytest.raises(ScenarioError):
        environment_from_mapping(outside)
    gap = dict(base, corridors=[{"label": "slit", "y": [-10.0, 0.0]}])
    with pytest.raises(ScenarioError):
        environment_from_mapping(gap)
    unknown = dict(base, corridors=[{"label": "chimney", "y": [-10.0, 10.0]}])
    with pytest.raises(ScenarioError):
        environment_from_mapping(unknown)


def test_corridor_titles():
    assert Corridor.BOTTOM_SLIT.title == "BottomSlit"
    assert Corridor.TOP_CORNER.is_slit is False
    assert Corridor.SLIT.is_slit
