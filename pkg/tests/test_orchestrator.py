import json

import pytest

from ranloop import messages
from ranloop.orchestrator import (
    ChoiceError,
    Orchestrator,
    RunError,
    load_run_from_log,
    replay_log,
)
from ranloop.reflector import SuggestionKind
from ranloop.scenario import ObjectiveMode

from conftest import desk_scenario, load_builtin


@pytest.fixture
def orch(tmp_path):
    return Orchestrator(data_dir=tmp_path)


def test_headless_run_terminates_with_reason(orch, small_spec):
    state = orch.run_headless(small_spec)
    assert state.status == "finished"
    assert state.terminal_reason in (
        "max_iterations",
        "reflector stop",
        "no acceptable suggestion",
    )
    assert 1 <= state.iterations_done <= state.max_iterations
    assert state.records[0].constraints_in.objective == ObjectiveMode.PERFORMANCE_FIRST


def test_max_iterations_bound(orch, small_spec):
    state = orch.run_headless(small_spec, max_iterations=1)
    assert state.iterations_done == 1
    assert state.status == "finished"


def test_every_iteration_carries_suggestions(orch, small_spec):
    state = orch.run_headless(small_spec)
    for r in state.records:
        assert 1 <= len(r.suggestions) <= 4


def test_rejected_constraint_sets_roll_back(orch):
    # accepted records never regress the performance objective by > 2%
    spec = load_builtin("usecase1.json")
    state = orch.run_headless(spec)
    rates = [r.kpis.total_rate_mbps for r in state.records]
    for prev, cur in zip(rates, rates[1:]):
        assert cur >= prev * 0.98


def test_hitl_run_awaits_and_advances(orch, small_spec):
    state = orch.start_run(small_spec, mode="hitl")
    assert state.status == "awaiting_human"
    first = state.records[-1]
    pick = first.suggestions[0].suggestion_id
    state = orch.step(state.run_id, pick)
    assert state.iterations_done >= 1
    decided = state.records[0]
    assert decided.chosen in (pick, None) or decided.accepted in (True, False)


def test_step_rejects_unknown_choice(orch, small_spec):
    state = orch.start_run(small_spec, mode="hitl")
    with pytest.raises(ChoiceError):
        orch.step(state.run_id, "not-a-suggestion-id")


def test_step_stop_finishes(orch, small_spec):
    state = orch.start_run(small_spec, mode="hitl")
    state = orch.step(state.run_id, "stop")
    assert state.status == "finished"
    with pytest.raises(RunError):
        orch.step(state.run_id, "stop")


def test_edited_suggestion_recorded(orch, small_spec):
    state = orch.start_run(small_spec, mode="hitl")
    base = next(
        s
        for s in state.records[-1].suggestions
        if s.kind != SuggestionKind.STOP
    )
    edit = {**base.to_dict(), "rationale": "operator override: gentler cap"}
    if base.kind in (SuggestionKind.TIGHTEN_PRB_CAP, SuggestionKind.ADD_PRB_CAP):
        edit["value"] = int(base.value) + 1
    state = orch.step(state.run_id, edit)
    decided = state.records[0]
    if decided.accepted:
        assert decided.human_edited is True
        assert decided.chooser == "human"
        assert decided.chosen.endswith("-edited")


def test_invalid_edit_rejected(orch, small_spec):
    state = orch.start_run(small_spec, mode="hitl")
    bad = {
        "kind": "tighten_prb_cap",
        "target_ue": 0,
        "value": 0,  # caps must be >= 1
        "rationale": "x",
        "expected_effect": "raise_total_rate",
    }
    with pytest.raises(ChoiceError):
        orch.step(state.run_id, bad)


def test_unknown_run_raises(orch):
    with pytest.raises(RunError):
        orch.get_run("missing")


def test_csv_export_matches_records(orch, small_spec):
    state = orch.run_headless(small_spec)
    lines = orch.export_run(state.run_id, "csv").strip().splitlines()
    assert lines[0] == (
        "iteration,total_rate_mbps,jain_fairness,total_active_prbs,"
        "satisfied_users,objective_mode"
    )
    assert len(lines) == 1 + state.iterations_done
    first = lines[1].split(",")
    assert int(first[0]) == 1
    assert float(first[1]) == pytest.approx(state.records[0].kpis.total_rate_mbps, abs=1e-5)


def test_message_log_validates_and_roundtrips(orch, small_spec):
    state = orch.run_headless(small_spec)
    log = orch.export_run(state.run_id, "log")
    for line in log.strip().splitlines():
        msg = messages.parse_message(line)
        messages.validate_message(msg)
        assert messages.parse_message(messages.serialize_message(msg)) == msg


def test_run_reconstructed_from_disk(tmp_path, small_spec):
    first = Orchestrator(data_dir=tmp_path)
    state = first.run_headless(small_spec)
    run_id = state.run_id

    fresh = Orchestrator(data_dir=tmp_path)  # simulates a restart
    recovered = fresh.get_run(run_id)
    assert recovered.status == "finished"
    assert recovered.iterations_done == state.iterations_done
    assert [r.record_hash() for r in recovered.records] == [
        r.record_hash() for r in state.records
    ]


def test_replay_reproduces_hashes(orch, small_spec):
    state = orch.run_headless(small_spec)
    log = orch.export_run(state.run_id, "log")
    identical, divergent = replay_log(log)
    assert identical and divergent is None


def test_replay_detects_tampering(orch, small_spec):
    state = orch.run_headless(small_spec)
    log = orch.export_run(state.run_id, "log")
    tampered = log.replace('"total_rate_mbps":', '"total_rate_mbps":9', 1)
    assert tampered != log
    identical, divergent = replay_log(tampered)
    assert not identical
    assert divergent is not None


def test_replay_covers_human_decisions(tmp_path, small_spec):
    orch = Orchestrator(data_dir=tmp_path)
    state = orch.start_run(small_spec, mode="hitl", max_iterations=3)
    while state.status == "awaiting_human":
        state = orch.step(state.run_id, state.records[-1].suggestions[0].suggestion_id)
    log = orch.export_run(state.run_id, "log")
    identical, _ = replay_log(log)
    assert identical


def test_load_run_from_log_rejects_garbage():
    with pytest.raises(messages.MessageError):
        load_run_from_log("")
    with pytest.raises(messages.MessageError):
        load_run_from_log('{"bad": "line"}\n')


def test_same_seed_runs_export_identically(tmp_path, small_spec):
    a = Orchestrator(data_dir=tmp_path / "a").run_headless(small_spec, run_id="same")
    b = Orchestrator(data_dir=tmp_path / "b").run_headless(small_spec, run_id="same")
    oa = Orchestrator(data_dir=tmp_path / "a")
    ob = Orchestrator(data_dir=tmp_path / "b")
    assert oa.export_run("same", "csv") == ob.export_run("same", "csv")
    assert oa.export_run("same", "log") == ob.export_run("same", "log")


def test_memory_store_appends_canonical_lines(tmp_path, small_spec):
    orch = Orchestrator(data_dir=tmp_path)
    orch.run_headless(small_spec)
    mem = (tmp_path / "memory.jsonl").read_text().strip().splitlines()
    assert mem
    for line in mem:
        entry = json.loads(line)
        assert "chosen_suggestion" in entry and "kpi_delta" in entry


def test_events_published_per_transition(orch, small_spec):
    state = orch.start_run(small_spec, mode="hitl")
    q = orch.subscribe(state.run_id)
    orch.step(state.run_id, "stop")
    events = []
    while not q.empty():
        events.append(q.get()["event"])
    assert events[-1] == "finished"
