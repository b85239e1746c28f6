import pytest

from ranloop.scenario import (
    ObjectiveMode,
    PhyConfig,
    ScenarioError,
    SubproblemKind,
    decompose,
    generate_default_scenario,
    parse_scenario,
)

from conftest import desk_scenario


def test_phy_derived_bandwidths():
    phy = PhyConfig()
    assert phy.prb_bandwidth_hz == pytest.approx(720e3)
    assert phy.total_bandwidth_hz == pytest.approx(11.52e6)


def test_phy_rejects_indivisible_subcarriers():
    with pytest.raises(ScenarioError, match="num_subcarriers"):
        PhyConfig(num_subcarriers=63, num_prbs=16).validate()


def test_spec_roundtrip(small_spec):
    assert parse_scenario(small_spec.to_dict()) == small_spec


def test_parse_names_missing_field():
    with pytest.raises(ScenarioError, match="phy"):
        parse_scenario({"name": "x", "cells": [{"cell_id": 0, "position_m": [0, 0]}], "ues": []})


def test_validate_rejects_duplicate_ue_ids(small_spec):
    d = small_spec.to_dict()
    d["ues"][1]["ue_id"] = d["ues"][0]["ue_id"]
    with pytest.raises(ScenarioError, match="ue_id"):
        parse_scenario(d)


def test_validate_rejects_unknown_serving_cell(small_spec):
    d = small_spec.to_dict()
    d["ues"][0]["serving_cell"] = 99
    with pytest.raises(ScenarioError, match="serving cell"):
        parse_scenario(d)


def test_validate_rejects_ue_outside_radius(small_spec):
    d = small_spec.to_dict()
    d["ues"][0]["position_m"] = [5000.0, 0.0]
    with pytest.raises(ScenarioError, match="position"):
        parse_scenario(d)


def test_validate_requires_at_least_one_trial(small_spec):
    d = small_spec.to_dict()
    d["monte_carlo_trials"] = 0
    with pytest.raises(ScenarioError, match="monte_carlo_trials"):
        parse_scenario(d)


def test_default_scenario_is_deterministic_in_seed():
    a = generate_default_scenario(5)
    b = generate_default_scenario(5)
    c = generate_default_scenario(6)
    assert a == b
    assert a != c
    a.validate()
    assert a.num_cells == 3 and a.num_ues == 6 and a.num_prbs == 16


def test_default_scenario_geometry():
    spec = generate_default_scenario(1)
    # cells sit on an equilateral triangle with 200 m spacing
    (x0, y0), (x1, y1) = spec.cells[0].position_m, spec.cells[1].position_m
    assert ((x1 - x0) ** 2 + (y1 - y0) ** 2) ** 0.5 == pytest.approx(200.0, abs=0.01)
    for ue in spec.ues:
        cx, cy = spec.cell_by_id(ue.serving_cell).position_m
        dist = ((ue.position_m[0] - cx) ** 2 + (ue.position_m[1] - cy) ** 2) ** 0.5
        assert dist <= spec.cell_radius_m


@pytest.mark.parametrize(
    "objective,kinds",
    [
        (
            ObjectiveMode.PERFORMANCE_FIRST,
            [SubproblemKind.RB_ALLOCATION, SubproblemKind.POWER_CONTROL],
        ),
        (
            ObjectiveMode.ENERGY_FIRST,
            [
                SubproblemKind.DORMANCY_SELECTION,
                SubproblemKind.RB_ALLOCATION,
                SubproblemKind.POWER_CONTROL,
            ],
        ),
    ],
)
def test_decomposition_order(small_spec, objective, kinds):
    decomp = decompose(small_spec, objective)
    assert [s.kind for s in decomp.subproblems] == kinds


def test_decomposition_is_deterministic(small_spec):
    a = decompose(small_spec, ObjectiveMode.PERFORMANCE_FIRST)
    b = decompose(small_spec, ObjectiveMode.PERFORMANCE_FIRST)
    assert a == b


def test_desk_scenario_fixture_is_valid():
    desk_scenario(seed=3).validate()
