import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ranloop.channel import ChannelRealization, draw_channel
from ranloop.constraints import UNASSIGNED, AllocationPlan
from ranloop.scenario import CellSpec, PhyConfig, ScenarioSpec, UeSpec
from ranloop.simulate import (
    evaluate,
    evaluate_mc,
    export_trial_csv,
    jain_fairness,
    noise_power_w,
    per_user_rates,
)

from conftest import desk_scenario


def one_cell_spec(trials: int = 1) -> ScenarioSpec:
    return ScenarioSpec(
        name="single",
        phy=PhyConfig(num_prbs=1, num_subcarriers=4),
        cells=(CellSpec(0, (0.0, 0.0)),),
        ues=(UeSpec(0, 0, (30.0, 0.0)),),
        monte_carlo_trials=trials,
        base_seed=0,
    )


def full_power_plan(spec: ScenarioSpec, assignment: np.ndarray) -> AllocationPlan:
    power = np.zeros_like(assignment, dtype=float)
    for ci, cell in enumerate(spec.cells):
        budget = 10.0 ** ((cell.max_tx_power_dbm - 30.0) / 10.0)
        slots = assignment[ci] != UNASSIGNED
        if slots.any():
            power[ci, slots] = budget / slots.sum()
    return AllocationPlan(assignment=assignment, power_w=power)


def test_noise_power_spot_value():
    # -174 dBm/Hz + 7 dB NF over 720 kHz = -108.4 dBm
    spec = one_cell_spec()
    noise_dbm = 10 * math.log10(noise_power_w(spec)) + 30
    assert noise_dbm == pytest.approx(-174 + 7 + 10 * math.log10(720e3), abs=1e-6)


def test_rate_spot_value_at_known_sinr():
    # engineered gain so p*g/noise = 1000; rate must be 0.72*log2(1001) Mbps
    spec = one_cell_spec()
    plan = full_power_plan(spec, np.array([[0]]))
    gain = 1000.0 * noise_power_w(spec) / plan.power_w[0, 0]
    chan = ChannelRealization(
        gains=np.full((1, 1, 1), gain), trial_index=0, seed=0
    )
    report = evaluate(spec, plan, chan)
    assert report.total_rate_mbps == pytest.approx(0.72 * math.log2(1001.0), rel=1e-12)
    assert report.per_user_mean_sinr_db[0] == pytest.approx(30.0, abs=1e-9)


def test_jain_known_values():
    assert jain_fairness(np.array([5.0, 5.0, 5.0])) == pytest.approx(1.0)
    assert jain_fairness(np.array([1.0, 0.0, 0.0, 0.0])) == pytest.approx(0.25)
    # (1+2+3)^2 / (3 * 14) = 36/42
    assert jain_fairness(np.array([1.0, 2.0, 3.0])) == pytest.approx(36.0 / 42.0)
    assert jain_fairness(np.zeros(4)) == 1.0


@given(
    st.lists(
        st.floats(min_value=0.0, max_value=1e6, allow_nan=False),
        min_size=1,
        max_size=12,
    )
)
@settings(max_examples=1000)
def test_jain_bounds_property(rates):
    j = jain_fairness(np.array(rates))
    assert 1.0 / len(rates) - 1e-12 <= j <= 1.0 + 1e-12


def test_zero_prb_ue_has_zero_rate_and_zero_db_sinr():
    spec = desk_scenario(trials=2)
    assignment = np.full((spec.num_cells, spec.num_prbs), UNASSIGNED)
    assignment[0, :] = 0  # only ue 0 is scheduled
    plan = full_power_plan(spec, assignment)
    report = evaluate(spec, plan, draw_channel(spec, 0))
    assert report.per_user_rate_mbps[1] == 0.0
    assert report.per_user_mean_sinr_db[1] == 0.0
    assert report.per_user_rate_mbps[0] > 0.0


def test_rate_additivity_over_prbs():
    # splitting the same PRBs across two plans sums to the combined rate
    spec = desk_scenario(trials=1)
    chan = draw_channel(spec, 0)
    full = np.full((spec.num_cells, spec.num_prbs), UNASSIGNED)
    full[0, :] = 0
    half_a, half_b = full.copy(), full.copy()
    half_a[0, 8:] = UNASSIGNED
    half_b[0, :8] = UNASSIGNED
    plan = full_power_plan(spec, full)
    pa = AllocationPlan(half_a, np.where(half_a != UNASSIGNED, plan.power_w, 0.0))
    pb = AllocationPlan(half_b, np.where(half_b != UNASSIGNED, plan.power_w, 0.0))
    ra, _ = per_user_rates(spec, pa, chan.gains)
    rb, _ = per_user_rates(spec, pb, chan.gains)
    rf, _ = per_user_rates(spec, plan, chan.gains)
    assert rf[0] == pytest.approx(ra[0] + rb[0], rel=1e-12)


def test_interferer_removal_raises_sinr():
    # silencing a non-serving cell can only help any victim link
    spec = desk_scenario(seed=9, trials=1)
    chan = draw_channel(spec, 0)
    assignment = np.zeros((spec.num_cells, spec.num_prbs), dtype=int)
    for ci, cell in enumerate(spec.cells):
        ue_ids = [u.ue_id for u in spec.ues if u.serving_cell == cell.cell_id]
        assignment[ci, :] = ue_ids[0]
    plan = full_power_plan(spec, assignment)
    _, sinr_with = per_user_rates(spec, plan, chan.gains)

    silenced = assignment.copy()
    silenced[1, :] = UNASSIGNED
    plan2 = full_power_plan(spec, silenced)
    _, sinr_without = per_user_rates(spec, plan2, chan.gains)
    for ui, ue in enumerate(spec.ues):
        if ue.serving_cell != 1 and sinr_with[ui] > 0:
            assert sinr_without[ui] >= sinr_with[ui]


def test_trial_partition_mean_equality():
    # mean over all trials == weighted mean over a partition of the trials
    spec = desk_scenario(seed=5, trials=12)
    assignment = np.zeros((spec.num_cells, spec.num_prbs), dtype=int)
    for ci, cell in enumerate(spec.cells):
        ue_ids = [u.ue_id for u in spec.ues if u.serving_cell == cell.cell_id]
        for b in range(spec.num_prbs):
            assignment[ci, b] = ue_ids[b % len(ue_ids)]
    plan = full_power_plan(spec, assignment)
    all_report = evaluate_mc(spec, plan)
    first = evaluate_mc(spec, plan, trials=list(range(4)))
    rest = evaluate_mc(spec, plan, trials=list(range(4, 12)))
    merged = (4 * first.total_rate_mbps + 8 * rest.total_rate_mbps) / 12
    assert abs(merged - all_report.total_rate_mbps) <= 1e-9 * abs(all_report.total_rate_mbps)


def test_satisfaction_counted_from_mean_rates():
    spec = desk_scenario(trials=4)
    assignment = np.full((spec.num_cells, spec.num_prbs), UNASSIGNED)
    assignment[0, :] = 0
    plan = full_power_plan(spec, assignment)
    report = evaluate_mc(spec, plan)
    served = report.per_user_rate_mbps[0] >= spec.ues[0].min_rate_mbps
    assert report.satisfied_users == (1 if served else 0)
    assert report.qos_satisfaction_rate == pytest.approx(report.satisfied_users / 6)


def test_kpi_report_roundtrip():
    spec = desk_scenario(trials=2)
    assignment = np.full((spec.num_cells, spec.num_prbs), UNASSIGNED)
    assignment[0, :] = 0
    plan = full_power_plan(spec, assignment)
    report = evaluate_mc(spec, plan)
    assert type(report).from_dict(report.to_dict()) == report


def test_export_trial_csv_shape():
    spec = desk_scenario(trials=3)
    assignment = np.full((spec.num_cells, spec.num_prbs), UNASSIGNED)
    assignment[0, :] = 0
    plan = full_power_plan(spec, assignment)
    lines = export_trial_csv(spec, plan).strip().splitlines()
    assert lines[0] == "trial,ue_id,sinr_db,rate_mbps"
    assert len(lines) == 1 + 3 * spec.num_ues


def test_evaluate_rejects_mismatched_plan():
    spec = desk_scenario(trials=1)
    bad = AllocationPlan(
        assignment=np.full((1, 4), UNASSIGNED), power_w=np.zeros((1, 4))
    )
    with pytest.raises(ValueError):
        evaluate(spec, bad, draw_channel(spec, 0))
