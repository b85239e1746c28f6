import pytest
from dataclasses import replace

from ranloop.constraints import ConstraintSet
from ranloop.reflector import (
    EFFICIENCY_THRESHOLD_MBPS_PER_PRB,
    MAX_SUGGESTIONS,
    ExpectedEffect,
    ReflectionContext,
    ReflectionSuggestion,
    SuggestionKind,
    apply_suggestion,
    policy_context,
    policy_efficiency,
    policy_intent,
    reflect,
)
from ranloop.scenario import ObjectiveMode, TrafficContext
from ranloop.simulate import KpiReport

from conftest import desk_scenario


def report(rates, prbs, spec) -> KpiReport:
    n = len(rates)
    eff = [r / c if c else 0.0 for r, c in zip(rates, prbs)]
    sat = sum(
        1 for r, ue in zip(rates, spec.ues) if r >= ue.min_rate_mbps
    )
    return KpiReport(
        per_user_rate_mbps=tuple(rates),
        total_rate_mbps=float(sum(rates)),
        jain_fairness=1.0,
        per_user_prb_count=tuple(prbs),
        total_active_prbs=int(sum(prbs)),
        per_cell_active_prbs=(sum(prbs),),
        per_user_mean_sinr_db=tuple(0.0 for _ in rates),
        total_tx_power_w=6.0,
        satisfied_users=sat,
        qos_satisfaction_rate=sat / n,
        per_user_efficiency_mbps_per_prb=tuple(eff),
    )


def ctx(spec, kpis, constraints=None, qos=False):
    return ReflectionContext(
        spec=spec,
        history=((constraints or ConstraintSet(), kpis),),
        qos_floor_mode=qos,
    )


# ---------------------------------------------------------------- efficiency


def test_efficiency_halves_worst_hog():
    spec = desk_scenario()
    kpis = report([16.0, 50.0, 40.0, 45.0, 40.0, 42.0], [16, 6, 6, 6, 6, 8], spec)
    out = policy_efficiency(ctx(spec, kpis))
    assert out
    top = out[0]
    assert top.kind == SuggestionKind.TIGHTEN_PRB_CAP
    assert top.target_ue == 0 and top.value == 8  # 16 PRBs at 1 Mbps/PRB


def test_efficiency_halving_sequence():
    # repeatedly applying the policy walks the cap 16 -> 8 -> 4 -> 2 -> 1
    spec = desk_scenario()
    cons = ConstraintSet()
    count = 16
    seen = []
    while True:
        kpis = report([1.0 * count, 50, 50, 50, 50, 50], [count, 3, 3, 3, 3, 3], spec)
        out = policy_efficiency(ctx(spec, kpis, cons))
        ours = [s for s in out if s.target_ue == 0]
        if count == 1 or not ours:
            break
        cap = int(ours[0].value)
        seen.append(cap)
        cons = apply_suggestion(cons, ours[0])
        count = cap
    assert seen == [8, 4, 2, 1]


def test_efficiency_needs_two_prbs_and_low_efficiency():
    spec = desk_scenario()
    ok = report([100.0] * 6, [3, 3, 3, 3, 2, 2], spec)  # high Mbps/PRB
    assert policy_efficiency(ctx(spec, ok)) == []
    single = report([1.0, 50, 50, 50, 50, 50], [1, 3, 3, 3, 3, 3], spec)
    assert all(s.target_ue != 0 for s in policy_efficiency(ctx(spec, single)))


def test_efficiency_emits_at_most_two():
    spec = desk_scenario()
    kpis = report([2.0] * 6, [8, 8, 8, 8, 8, 8], spec)
    assert len(policy_efficiency(ctx(spec, kpis))) == 2


def test_efficiency_silent_outside_performance_mode():
    spec = desk_scenario()
    kpis = report([2.0] * 6, [8, 8, 8, 8, 8, 8], spec)
    cons = ConstraintSet(objective=ObjectiveMode.ENERGY_FIRST)
    assert policy_efficiency(ctx(spec, kpis, cons)) == []


# ---------------------------------------------------------------- intent


def test_intent_caps_most_overserved_and_floors_starved():
    spec = desk_scenario()
    # demand is 20: ue1 at 80 Mbps is 4x over; ue5 starved below its floor
    kpis = report([25.0, 80.0, 30.0, 30.0, 30.0, 1.0], [2, 8, 2, 2, 1, 1], spec)
    out = policy_intent(ctx(spec, kpis, qos=True))
    kinds = {(s.kind, s.target_ue) for s in out}
    assert (SuggestionKind.ADD_RATE_CEILING, 1) in kinds
    assert (SuggestionKind.ADD_RATE_FLOOR, 5) in kinds
    ceiling = next(s for s in out if s.kind == SuggestionKind.ADD_RATE_CEILING)
    assert ceiling.value == spec.ues[1].demand_mbps


def test_intent_requires_qos_mode():
    spec = desk_scenario()
    kpis = report([25.0, 80.0, 30.0, 30.0, 30.0, 1.0], [2, 8, 2, 2, 1, 1], spec)
    assert policy_intent(ctx(spec, kpis, qos=False)) == []


def test_intent_does_not_repeat_applied_refinements():
    spec = desk_scenario()
    kpis = report([25.0, 80.0, 30.0, 30.0, 30.0, 1.0], [2, 8, 2, 2, 1, 1], spec)
    cons = ConstraintSet(
        max_rate_mbps={1: spec.ues[1].demand_mbps},
        min_rate_mbps={5: spec.ues[5].min_rate_mbps},
    )
    out = policy_intent(ctx(spec, kpis, cons, qos=True))
    assert all(s.target_ue not in (1,) or s.kind != SuggestionKind.ADD_RATE_CEILING for s in out)
    assert all(s.target_ue not in (5,) or s.kind != SuggestionKind.ADD_RATE_FLOOR for s in out)


# ---------------------------------------------------------------- context


def test_context_switches_to_energy_when_off_peak():
    spec = desk_scenario()
    spec = replace(spec, traffic_context=TrafficContext.OFF_PEAK)
    kpis = report([30.0] * 6, [8] * 6, spec)
    out = policy_context(ctx(spec, kpis))
    kinds = [s.kind for s in out]
    assert SuggestionKind.SWITCH_OBJECTIVE in kinds
    assert SuggestionKind.ACTIVATE_DORMANCY in kinds


def test_context_switches_back_at_peak():
    spec = desk_scenario()
    kpis = report([30.0] * 6, [8] * 6, spec)
    cons = ConstraintSet(objective=ObjectiveMode.ENERGY_FIRST)
    out = policy_context(ctx(spec, kpis, cons))
    assert [s.kind for s in out] == [SuggestionKind.SWITCH_OBJECTIVE]
    assert out[0].value == ObjectiveMode.PERFORMANCE_FIRST.value


def test_context_quiet_when_aligned():
    spec = desk_scenario()
    kpis = report([30.0] * 6, [8] * 6, spec)
    assert policy_context(ctx(spec, kpis)) == []


# ---------------------------------------------------------------- reflect


def test_reflect_is_pure():
    spec = desk_scenario()
    kpis = report([2.0] * 6, [8] * 6, spec)
    c = ctx(spec, kpis)
    assert reflect(c) == reflect(c)


def test_reflect_length_bounds_and_stop():
    spec = desk_scenario()
    busy = report([2.0] * 6, [8] * 6, spec)
    out = reflect(ctx(spec, busy))
    assert 1 <= len(out) <= MAX_SUGGESTIONS

    quiet = report([100.0] * 6, [3, 3, 3, 3, 2, 2], spec)
    stopped = reflect(ctx(spec, quiet))
    assert len(stopped) == 1
    assert stopped[0].kind == SuggestionKind.STOP
    assert stopped[0].rationale


def test_reflect_ranking_follows_mode():
    spec = desk_scenario()
    spec = replace(spec, traffic_context=TrafficContext.OFF_PEAK)
    kpis = report([2.0] * 6, [8] * 6, spec)
    out = reflect(ctx(spec, kpis))
    # off-peak regime ranks PRB-cutting suggestions ahead of rate-raising
    assert out[0].expected_effect == ExpectedEffect.CUT_PRB_USAGE


def test_reflect_rejects_empty_history(small_spec):
    with pytest.raises(ValueError):
        reflect(ReflectionContext(spec=small_spec, history=()))


def test_reflect_ids_are_deterministic_and_distinct():
    spec = desk_scenario()
    kpis = report([2.0] * 6, [8] * 6, spec)
    out = reflect(ctx(spec, kpis))
    ids = [s.suggestion_id for s in out]
    assert len(set(ids)) == len(ids)


# ---------------------------------------------------------------- application


def test_apply_suggestion_kinds():
    cons = ConstraintSet()
    cap = ReflectionSuggestion(
        suggestion_id="a", kind=SuggestionKind.TIGHTEN_PRB_CAP, target_ue=1,
        value=4, rationale="r", expected_effect=ExpectedEffect.RAISE_TOTAL_RATE,
        policy_source="t",
    )
    cons = apply_suggestion(cons, cap)
    assert cons.max_prbs_per_ue == {1: 4}

    ceiling = ReflectionSuggestion(
        suggestion_id="b", kind=SuggestionKind.ADD_RATE_CEILING, target_ue=2,
        value=18.0, rationale="r", expected_effect=ExpectedEffect.RAISE_SATISFACTION,
        policy_source="t",
    )
    cons = apply_suggestion(cons, ceiling)
    assert cons.max_rate_mbps == {2: 18.0}

    switch = ReflectionSuggestion(
        suggestion_id="c", kind=SuggestionKind.SWITCH_OBJECTIVE,
        value="energy_first", rationale="r",
        expected_effect=ExpectedEffect.CUT_PRB_USAGE, policy_source="t",
    )
    cons = apply_suggestion(cons, switch)
    assert cons.objective == ObjectiveMode.ENERGY_FIRST


def test_apply_suggestion_does_not_mutate_input():
    cons = ConstraintSet()
    cap = ReflectionSuggestion(
        suggestion_id="a", kind=SuggestionKind.ADD_PRB_CAP, target_ue=1,
        value=4, rationale="r", expected_effect=ExpectedEffect.RAISE_TOTAL_RATE,
        policy_source="t",
    )
    apply_suggestion(cons, cap)
    assert cons.max_prbs_per_ue == {}


def test_suggestion_validation_bounds():
    with pytest.raises(ValueError):
        ReflectionSuggestion(
            suggestion_id="x", kind=SuggestionKind.TIGHTEN_PRB_CAP, target_ue=1,
            value=0, rationale="r",
            expected_effect=ExpectedEffect.RAISE_TOTAL_RATE, policy_source="t",
        ).validate()
    with pytest.raises(ValueError):
        ReflectionSuggestion(
            suggestion_id="x", kind=SuggestionKind.ADD_RATE_CEILING, target_ue=1,
            value=-5.0, rationale="r",
            expected_effect=ExpectedEffect.RAISE_SATISFACTION, policy_source="t",
        ).validate()
    with pytest.raises(ValueError):
        ReflectionSuggestion(
            suggestion_id="x", kind=SuggestionKind.STOP, rationale="",
            expected_effect=ExpectedEffect.RAISE_TOTAL_RATE, policy_source="t",
        ).validate()


def test_suggestion_roundtrip():
    s = ReflectionSuggestion(
        suggestion_id="abc", kind=SuggestionKind.ADD_RATE_FLOOR, target_ue=3,
        value=6.0, rationale="serve the starved user",
        expected_effect=ExpectedEffect.RAISE_SATISFACTION, policy_source="t",
    )
    assert ReflectionSuggestion.from_dict(s.to_dict()) == s
