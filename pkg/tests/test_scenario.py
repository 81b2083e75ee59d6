import json

import pytest

from fencesim.scenario import Scenario, ScenarioError, load_scenario, parse_scenario, to_dict
from fencesim.sim import build_setup


def setup_error(data, base="."):
    with pytest.raises(ScenarioError) as info:
        build_setup(parse_scenario(data, base))
    return info.value.path


def test_defaults_round_trip():
    sc = parse_scenario({})
    assert sc.version == 1 and sc.layouts[0].kind == "B"
    again = parse_scenario(to_dict(sc))
    assert to_dict(again) == to_dict(sc)


@pytest.mark.parametrize(
    "data,path",
    [
        ({"colour": 1}, "$.colour"),
        ({"field": {"width": 25, "hieght": 3}}, "$.field.hieght"),
        ({"layouts": [{"kind": "A", "spcing": 5}]}, "$.layouts[0].spcing"),
        ({"seed": "7"}, "$.seed"),
        ({"seed": True}, "$.seed"),
        ({"grid_resolution": "fine"}, "$.grid_resolution"),
        ({"layouts": {"kind": "A"}}, "$.layouts"),
        ({"version": 2}, "$.version"),
        ({"budget": [{"name": "x", "min": 1}]}, "$.budget[0].max"),
    ],
)
def test_schema_errors_name_the_field(data, path):
    with pytest.raises(ScenarioError) as info:
        parse_scenario(data)
    assert info.value.path == path


def test_non_object_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario([1, 2])


@pytest.mark.parametrize(
    "data,path",
    [
        ({"layouts": []}, "$.layouts"),
        ({"layouts": [{"kind": "Q"}]}, "$.layouts[0].kind"),
        ({"layouts": [{"kind": "B", "spacing": -2}]}, "$.layouts[0]"),
        ({"field": {"width": 0}}, "$.field"),
        ({"grid_resolution": 3.0}, "$.grid_resolution"),
        ({"band": 0.0}, "$.band"),
        ({"link": {"profile": "s9"}}, "$.link.profile"),
        ({"link": {"nodes": {"E": "s4-r4-500m"}}}, "$.link.nodes.E"),
        ({"link": {"slot_duration": 0}}, "$.link.slot_duration"),
        ({"predictor": {"time_tolerance": 0}}, "$.predictor"),
        ({"camera": {"model": "AlexNet"}}, "$.camera.model"),
        ({"camera": {"hfov": 200}}, "$.camera"),
        ({"notify": {"lte_delay": [0.6, 0.1]}}, "$.notify.lte_delay"),
        ({"evaluation": {"camera_distances": [5, -1]}}, "$.evaluation.camera_distances"),
        ({"budget": [{"name": "x", "min": -1, "max": 1}]}, "$.budget"),
        ({"cost": [{"device": "x", "unit_cost": 1, "quantity": -3}]}, "$.cost"),
        ({"movements": ["M1"]}, "$.movements"),
        ({"motion": {"sample_step": 0}}, "$.motion.sample_step"),
    ],
)
def test_semantic_errors_name_the_field(data, path):
    assert setup_error(data) == path


def test_trajectory_problems(tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps([{"id": "X", "waypoints": [[0, 0, 1], [1, 1, 0]]}]))
    assert setup_error({"trajectories": "bad.json"}, tmp_path) == "$.trajectories"
    (tmp_path / "ok.json").write_text(json.dumps([{"id": "X", "waypoints": [[0, 0, 0], [1, 1, 1]]}]))
    assert setup_error({"trajectories": "ok.json", "movements": ["Y"]}, tmp_path) == "$.movements"
    (tmp_path / "broken.json").write_text("[{")
    with pytest.raises(json.JSONDecodeError):
        build_setup(parse_scenario({"trajectories": "broken.json"}, tmp_path))
    with pytest.raises(OSError):
        build_setup(parse_scenario({"trajectories": "missing.json"}, tmp_path))


def test_env_seed_override(tmp_path, monkeypatch):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"seed": 5}))
    monkeypatch.delenv("FENCESIM_SEED", raising=False)
    assert load_scenario(path).seed == 5
    monkeypatch.setenv("FENCESIM_SEED", "42")
    assert load_scenario(path).seed == 42
    monkeypatch.setenv("FENCESIM_SEED", "x")
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_relative_paths_resolve_against_file(tmp_path):
    sub = tmp_path / "pack"
    sub.mkdir()
    (sub / "m.json").write_text(json.dumps([{"id": "Z", "waypoints": [[0, -1, 0], [5, -1, 5]]}]))
    (sub / "s.json").write_text(json.dumps({"trajectories": "m.json"}))
    setup = build_setup(load_scenario(sub / "s.json"))
    assert [s.id for s in setup.scripts] == ["Z"]


def test_node_profile_override():
    setup = build_setup(parse_scenario({"link": {"profile": "s4-r35-350m", "nodes": {"C": "s4-r4-500m"}}}))
    assert setup.uplinks["A"].base_latency == 0.7
    assert setup.uplinks["C"].base_latency == 4.0


def test_scenario_dataclass_is_plain():
    assert Scenario().name == "scenario"
