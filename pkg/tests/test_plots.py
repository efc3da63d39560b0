from __future__ import annotations

import html
import json

import numpy as np
import pytest
from matplotlib.collections import LineCollection

from pirrt.config import ExperimentConfig
from pirrt.harness import run_experiment
from pirrt.pi_control import goal_distance_cost
from pirrt.pi_rrt import run_mission
from pirrt.plots import (
    emit_plots,
    experiment_figure,
    figure_description,
    mission_figure,
    save_svg,
    svg_text,
    tree_figure,
)
from pirrt.records import geometry_hash
from pirrt.rrt_planner import TreeGraph
from pirrt.sde_core import StateTimePoint
from pirrt.streams import Streams


def _collections(fig, gid):
    ax = fig.axes[0]
    return [c for c in ax.collections if isinstance(c, LineCollection) and c.get_gid() == gid]


@pytest.fixture
def mission(car, short_hop, tiny_params):
    start = StateTimePoint(np.asarray(short_hop.start, dtype=float), short_hop.t_init)
    return run_mission(
        car,
        short_hop,
        goal_distance_cost(short_hop),
        start,
        tiny_params,
        Streams(0),
        keep_trees=True,
    )


def test_root_only_tree_draws_no_edges(single_slit):
    tree = TreeGraph(StateTimePoint([-9.0, 0.0, 0.0], 0.0))
    fig = tree_figure(single_slit, tree)
    assert _collections(fig, "tree") == []
    assert "1 vertices" in fig.axes[0].get_title()


def test_mission_figure_layers(short_hop, mission, tiny_params):
    fig = mission_figure(short_hop, mission)
    bundle = _collections(fig, "bundle")
    assert len(bundle) == 1
    assert len(bundle[0].get_segments()) == tiny_params.bundle_size
    assert len(_collections(fig, "tree")) == 1
    gids = {line.get_gid() for line in fig.axes[0].lines}
    assert {"baseline", "executed"} <= gids


def test_svgs_embed_config_and_geometry(tmp_path, short_hop, mission, tiny_params):
    config = ExperimentConfig(
        scenario="short_hop", algorithm="pirrt", alpha=0.25, params=tiny_params
    ).to_dict()
    written = emit_plots(mission, tmp_path, short_hop, config)
    expected = figure_description(config, short_hop)
    doc = json.loads(expected)
    assert doc["config"] == json.loads(json.dumps(config))
    assert doc["geometry_hash"] == geometry_hash(short_hop)
    for path in written:
        text = path.read_text(encoding="utf-8")
        assert "<dc:description>" in text
        assert geometry_hash(short_hop) in text
        assert html.escape(expected, quote=False) in text


def test_svg_text_is_reproducible(short_hop, mission):
    first = svg_text(mission_figure(short_hop, mission))
    second = svg_text(mission_figure(short_hop, mission))
    assert first == second
    assert first.lstrip().startswith("<?xml")


def test_emit_mission_plots(tmp_path, short_hop, mission):
    written = emit_plots(mission, tmp_path, short_hop)
    assert [p.name for p in written] == ["mission.svg", "tree-00.svg"]
    assert all(p.stat().st_size > 0 for p in written)
    with pytest.raises(ValueError):
        emit_plots(mission, tmp_path)


def test_emit_experiment_plot(short_hop_scenario, tmp_path, tiny_params):
    config = ExperimentConfig(
        scenario="short_hop", algorithm="rrt", alpha=0.25, trials=2, params=tiny_params
    )
    result = run_experiment(config, journal=False)
    fig = experiment_figure(result)
    drawn = len(_collections(fig, "success")) + len(_collections(fig, "failure"))
    assert drawn >= 1
    assert "/2 success" in fig.axes[0].get_title()
    written = emit_plots(result, tmp_path)
    assert [p.name for p in written] == ["experiment.svg"]
    text = written[0].read_text(encoding="utf-8")
    assert geometry_hash(result.environment) in text


def test_save_svg_to_unwritable_path_raises(tmp_path, single_slit):
    blocker = tmp_path / "file"
    blocker.write_text("", encoding="utf-8")
    fig = tree_figure(single_slit, TreeGraph(StateTimePoint([-9.0, 0.0, 0.0], 0.0)))
    with pytest.raises(OSError):
        save_svg(fig, blocker / "tree.svg")
