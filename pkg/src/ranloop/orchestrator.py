"""Closed-loop orchestration: solve, simulate, reflect, decide, repeat.

One logical writer per run; every iteration is appended to a per-run
message log before the in-memory state advances (write-ahead), so a run
is always recoverable from its log alone.  Headless mode auto-applies
the top-ranked suggestion with a rollback-on-regression guard; HITL mode
parks the run awaiting a human decision after each iteration.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import messages
from .channel import mean_gains
from .constraints import AllocationPlan, ConstraintSet, InfeasibleError, audit_plan
from .reflector import (
    ReflectionContext,
    ReflectionSuggestion,
    SuggestionKind,
    apply_suggestion,
    reflect,
)
from .scenario import ObjectiveMode, ScenarioSpec
from .simulate import KpiReport, evaluate_mc
from .solver import solve_dormancy, solve_two_stage

DEFAULT_MAX_ITERATIONS = 6
REGRESSION_THRESHOLD = 0.02

CSV_HEADER = "iteration,total_rate_mbps,jain_fairness,total_active_prbs,satisfied_users,objective_mode"


class RunError(Exception):
    """Unknown run or invalid state transition."""


class ChoiceError(ValueError):
    """Decision not among the offered suggestions or invalid edit."""


@dataclass
class IterationRecord:
    iteration: int
    constraints_in: ConstraintSet
    plan: AllocationPlan
    kpis: KpiReport
    suggestions: list[ReflectionSuggestion]
    chosen: str | None = None  # suggestion_id or "stop"; filled by the decision
    chooser: str | None = None  # "auto" | "human"
    accepted: bool = True  # False when the applied suggestion was rolled back
    rejected_ids: list[str] = field(default_factory=list)
    human_edited: bool = False
    wall_time_ms: int = 0

    def canonical_dict(self) -> dict:
        """Serialization used for hashing and export; excludes wall time,
        which is volatile across replays."""
        return {
            "iteration": self.iteration,
            "constraints_in": self.constraints_in.to_dict(),
            "plan": self.plan.to_dict(),
            "kpis": self.kpis.to_dict(),
            "suggestions": [s.to_dict() for s in self.suggestions],
            "chosen": self.chosen,
            "chooser": self.chooser,
            "accepted": self.accepted,
            "rejected_ids": list(self.rejected_ids),
            "human_edited": self.human_edited,
        }

    def record_hash(self) -> str:
        return messages.hash64(self.canonical_dict())


@dataclass
class RunState:
    run_id: str
    spec: ScenarioSpec
    mode: str  # "headless" | "hitl"
    max_iterations: int
    qos_floor_mode: bool = False
    status: str = "running"  # running | awaiting_human | finished | failed
    terminal_reason: str | None = None
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def iterations_done(self) -> int:
        return len(self.records)

    def summary(self) -> dict:
        latest = self.records[-1].kpis if self.records else None
        return {
            "run_id": self.run_id,
            "scenario_name": self.spec.name,
            "status": self.status,
            "mode": self.mode,
            "iterations_done": self.iterations_done,
            "total_rate_mbps": latest.total_rate_mbps if latest else None,
            "qos_satisfaction_rate": latest.qos_satisfaction_rate if latest else None,
            "terminal_reason": self.terminal_reason,
        }

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "spec": self.spec.to_dict(),
            "mode": self.mode,
            "max_iterations": self.max_iterations,
            "qos_floor_mode": self.qos_floor_mode,
            "status": self.status,
            "terminal_reason": self.terminal_reason,
            "records": [
                {**r.canonical_dict(), "wall_time_ms": r.wall_time_ms}
                for r in self.records
            ],
        }


def _initial_constraints(spec: ScenarioSpec) -> ConstraintSet:
    # every run starts performance-first; the context policy reorients the
    # objective once the load level warrants it
    return ConstraintSet(objective=ObjectiveMode.PERFORMANCE_FIRST)


class Orchestrator:
    """Drives runs and persists their message logs under data_dir."""

    def __init__(self, data_dir: str | Path | None = None):
        self.data_dir = Path(data_dir) if data_dir else None
        if self.data_dir:
            (self.data_dir / "runs").mkdir(parents=True, exist_ok=True)
        self._runs: dict[str, RunState] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._stats_cache: dict[str, object] = {}
        self._subscribers: dict[str, list] = {}
        self._global_lock = threading.Lock()

    # ----- run lifecycle ---------------------------------------------------

    def start_run(
        self,
        spec: ScenarioSpec,
        mode: str = "headless",
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        qos_floor_mode: bool = False,
        run_id: str | None = None,
    ) -> RunState:
        if mode not in ("headless", "hitl"):
            raise ValueError(f"unknown mode {mode!r}")
        spec.validate()
        run_id = run_id or f"run-{uuid.uuid4().hex[:12]}"
        state = RunState(
            run_id=run_id,
            spec=spec,
            mode=mode,
            max_iterations=max_iterations,
            qos_floor_mode=qos_floor_mode,
        )
        with self._global_lock:
            if run_id in self._runs:
                raise RunError(f"run already exists: {run_id}")
            self._runs[run_id] = state
            self._locks[run_id] = threading.RLock()
            self._subscribers[run_id] = []
        self._append_message(
            state,
            "scenario",
            0,
            {
                "scenario": spec.to_dict(),
                "mode": mode,
                "max_iterations": max_iterations,
                "qos_floor_mode": qos_floor_mode,
            },
        )
        with self._locks[run_id]:
            self._execute_iteration(state, _initial_constraints(spec), decision=None)
        return state

    def step(self, run_id: str, choice) -> RunState:
        """Apply a decision to the run's pending suggestions and advance.

        choice: a suggestion_id, "auto-top", "stop", or a dict with edited
        suggestion fields.
        """
        state = self.get_run(run_id)
        with self._locks[run_id]:
            if state.status not in ("running", "awaiting_human"):
                raise RunError(f"run {run_id} is {state.status}")
            record = state.records[-1]
            suggestions = record.suggestions
            edited = False

            if choice == "stop":
                self._finalize_decision(state, record, "stop", "auto stop" if state.mode == "headless" else "human stop")
                return state
            if choice == "auto-top":
                ordered = list(suggestions)
                chooser = "auto"
            elif isinstance(choice, dict):
                try:
                    sugg = ReflectionSuggestion.from_dict(
                        {"policy_source": "human", "suggestion_id": choice.get("suggestion_id", "edited"), **choice}
                    )
                except (KeyError, ValueError) as e:
                    raise ChoiceError(f"invalid edited suggestion: {e}") from None
                base = {s.suggestion_id: s for s in suggestions}.get(sugg.suggestion_id)
                same_content = base is not None and {
                    k: v for k, v in base.to_dict().items()
                    if k not in ("suggestion_id", "policy_source")
                } == {
                    k: v for k, v in sugg.to_dict().items()
                    if k not in ("suggestion_id", "policy_source")
                }
                if not same_content:
                    content = {k: v for k, v in sugg.to_dict().items() if k != "suggestion_id"}
                    sugg = replace(
                        sugg, suggestion_id=messages.hash64(content)[:12] + "-edited"
                    )
                ordered = [sugg]
                chooser = "human"
                edited = not same_content
            else:
                match = [s for s in suggestions if s.suggestion_id == choice]
                if not match:
                    raise ChoiceError(f"choice {choice!r} is not among the offered suggestions")
                ordered = match
                chooser = "human"

            if ordered and ordered[0].kind == SuggestionKind.STOP:
                self._finalize_decision(state, record, ordered[0].suggestion_id, "reflector stop")
                return state

            self._apply_and_advance(state, record, ordered, chooser, edited)
            return state

    def run_headless(
        self,
        spec: ScenarioSpec,
        max_iterations: int = DEFAULT_MAX_ITERATIONS,
        qos_floor_mode: bool = False,
        run_id: str | None = None,
    ) -> RunState:
        state = self.start_run(
            spec,
            mode="headless",
            max_iterations=max_iterations,
            qos_floor_mode=qos_floor_mode,
            run_id=run_id,
        )
        while state.status == "running":
            self.step(state.run_id, "auto-top")
        return state

    # ----- internals -------------------------------------------------------

    def _stats_for(self, spec: ScenarioSpec):
        key = messages.hash64(spec.to_dict())
        if key not in self._stats_cache:
            self._stats_cache[key] = mean_gains(spec)
        return self._stats_cache[key]

    def _solve_pipeline(
        self, spec: ScenarioSpec, constraints: ConstraintSet
    ) -> tuple[ConstraintSet, AllocationPlan, KpiReport]:
        stats = self._stats_for(spec)
        if constraints.objective == ObjectiveMode.ENERGY_FIRST:
            constraints = solve_dormancy(spec, constraints, stats)
        plan = solve_two_stage(spec, constraints, stats)
        problems = audit_plan(spec, constraints, plan)
        if problems:
            raise RuntimeError(f"solver produced a plan failing audit: {problems}")
        kpis = evaluate_mc(spec, plan)
        return constraints, plan, kpis

    def _execute_iteration(
        self, state: RunState, constraints: ConstraintSet, decision
    ) -> IterationRecord:
        constraints, plan, kpis = self._solve_pipeline(state.spec, constraints)
        record = IterationRecord(
            iteration=state.iterations_done + 1,
            constraints_in=constraints,
            plan=plan,
            kpis=kpis,
            suggestions=[],
        )
        self._execute_iteration_from(state, record)
        return record

    def _apply_and_advance(
        self,
        state: RunState,
        record: IterationRecord,
        ordered: list[ReflectionSuggestion],
        chooser: str,
        edited: bool,
    ) -> None:
        prev_constraints = record.constraints_in
        prev_kpis = record.kpis
        rejected: list[str] = []
        applied: ReflectionSuggestion | None = None
        # rollback rule: an auto decision whose KPIs regress is rolled back
        # and the next-ranked suggestion is tried, at most once
        tries = ordered[:2] if chooser == "auto" else ordered[:1]
        candidates = [t for t in tries if t.kind != SuggestionKind.STOP]

        outcome = None
        for sugg in candidates:
            try:
                new_constraints = apply_suggestion(prev_constraints, sugg)
                if sugg.kind == SuggestionKind.ACTIVATE_DORMANCY:
                    new_constraints = replace(
                        new_constraints, objective=ObjectiveMode.ENERGY_FIRST
                    )
                solved_constraints, plan, kpis = self._solve_pipeline(
                    state.spec, new_constraints
                )
            except InfeasibleError:
                rejected.append(sugg.suggestion_id)
                continue
            if chooser == "auto" and self._regressed(
                state, prev_constraints, prev_kpis, solved_constraints, kpis
            ):
                rejected.append(sugg.suggestion_id)
                continue
            applied = sugg
            outcome = (solved_constraints, plan, kpis)
            break

        if applied is None:
            # nothing usable: keep the previous state, mark the iteration rejected
            record.chosen = candidates[0].suggestion_id if candidates else "stop"
            record.chooser = chooser
            record.accepted = False
            record.rejected_ids = rejected
            record.human_edited = edited
            if state.mode == "hitl" and state.iterations_done < state.max_iterations:
                self._append_decision(state, record)
                self._append_memory(state, record, kpi_delta=0.0)
                state.status = "awaiting_human"
                self._publish(state, "awaiting_human", record)
            else:
                self._append_decision(state, record, reason="no acceptable suggestion")
                self._append_memory(state, record, kpi_delta=0.0)
                self._finish(state, "no acceptable suggestion")
            return

        record.chosen = applied.suggestion_id
        record.chooser = chooser
        record.accepted = True
        record.rejected_ids = rejected
        record.human_edited = edited
        self._append_decision(state, record, applied=applied.to_dict())
        delta = self._relative_delta(prev_kpis, outcome[2], outcome[0])
        self._append_memory(state, record, kpi_delta=delta)
        state.status = "running"
        new_constraints, plan, kpis = outcome
        new_record = IterationRecord(
            iteration=state.iterations_done + 1,
            constraints_in=new_constraints,
            plan=plan,
            kpis=kpis,
            suggestions=[],
        )
        # reuse pipeline path to also reflect + persist + publish
        self._execute_iteration_from(state, new_record)

    def _execute_iteration_from(self, state: RunState, record: IterationRecord) -> None:
        t0 = time.monotonic()
        context = self._context(state, extra=(record.constraints_in, record.kpis))
        record.suggestions = reflect(context)
        record.wall_time_ms = int((time.monotonic() - t0) * 1000)
        self._persist_iteration(state, record)
        state.records.append(record)
        self._publish(state, "iteration_completed", record)
        only_stop = (
            len(record.suggestions) == 1
            and record.suggestions[0].kind == SuggestionKind.STOP
        )
        if state.iterations_done >= state.max_iterations:
            if only_stop:
                self._finalize_decision(
                    state, record, record.suggestions[0].suggestion_id, "reflector stop"
                )
            else:
                self._finalize_decision(state, record, "stop", "max_iterations")
        elif only_stop and state.mode == "headless":
            self._finalize_decision(
                state, record, record.suggestions[0].suggestion_id, "reflector stop"
            )
        elif state.mode == "hitl":
            state.status = "awaiting_human"
            self._publish(state, "awaiting_human", record)

    def _context(self, state: RunState, extra=None) -> ReflectionContext:
        history = [(r.constraints_in, r.kpis) for r in state.records]
        if extra is not None:
            history.append(extra)
        return ReflectionContext(
            spec=state.spec,
            history=tuple(history),
            qos_floor_mode=state.qos_floor_mode,
        )

    def _regressed(
        self,
        state: RunState,
        old_constraints: ConstraintSet,
        old: KpiReport,
        new_constraints: ConstraintSet,
        new: KpiReport,
    ) -> bool:
        if old_constraints.objective != new_constraints.objective:
            return False  # objective switch: metrics are incommensurable
        if state.qos_floor_mode:
            if new.satisfied_users < old.satisfied_users:
                return True
            if new.satisfied_users == old.satisfied_users:
                return new.total_rate_mbps < old.total_rate_mbps * 0.90
            return False
        if new_constraints.objective == ObjectiveMode.ENERGY_FIRST:
            if new.total_active_prbs > old.total_active_prbs:
                return True
            floors = {
                u.ue_id: new_constraints.effective_min_rate(state.spec, u.ue_id)
                for u in state.spec.ues
            }
            return any(
                new.per_user_rate_mbps[ui] < floors[u.ue_id]
                for ui, u in enumerate(state.spec.ues)
            )
        return new.total_rate_mbps < old.total_rate_mbps * (1 - REGRESSION_THRESHOLD)

    def _relative_delta(
        self, old: KpiReport, new: KpiReport, constraints: ConstraintSet
    ) -> float:
        if constraints.objective == ObjectiveMode.ENERGY_FIRST:
            denom = max(old.total_active_prbs, 1)
            return (old.total_active_prbs - new.total_active_prbs) / denom
        denom = max(old.total_rate_mbps, 1e-9)
        return (new.total_rate_mbps - old.total_rate_mbps) / denom

    def _finalize_decision(
        self, state: RunState, record: IterationRecord, chosen: str, reason: str
    ) -> None:
        record.chosen = chosen if chosen == "stop" else chosen
        record.chooser = "auto" if state.mode == "headless" else "human"
        self._append_decision(state, record, reason=reason)
        self._finish(state, reason)

    def _finish(self, state: RunState, reason: str) -> None:
        state.status = "finished"
        state.terminal_reason = reason
        self._publish(state, "finished", state.records[-1] if state.records else None)

    # ----- queries and export ----------------------------------------------

    def get_run(self, run_id: str) -> RunState:
        with self._global_lock:
            state = self._runs.get(run_id)
        if state is None:
            state = self._load_from_disk(run_id)
        if state is None:
            raise RunError(f"unknown run: {run_id}")
        return state

    def list_runs(self) -> list[RunState]:
        # dict preserves insertion order; newest run first
        with self._global_lock:
            return list(self._runs.values())[::-1]

    def export_run(self, run_id: str, fmt: str) -> str:
        state = self.get_run(run_id)
        if fmt == "csv":
            lines = [CSV_HEADER]
            for r in state.records:
                lines.append(
                    f"{r.iteration},{r.kpis.total_rate_mbps:.6f},"
                    f"{r.kpis.jain_fairness:.6f},{r.kpis.total_active_prbs},"
                    f"{r.kpis.satisfied_users},{r.constraints_in.objective.value}"
                )
            return "\n".join(lines) + "\n"
        if fmt in ("log", "message-log"):
            return "".join(
                messages.serialize_message(m) + "\n" for m in self._messages_of(state)
            )
        raise ValueError(f"unknown export format {fmt!r}")

    # ----- persistence ------------------------------------------------------

    def _log_path(self, run_id: str) -> Path | None:
        if not self.data_dir:
            return None
        return self.data_dir / "runs" / f"{run_id}.log"

    def _append_message(self, state: RunState, msg_type: str, iteration: int, payload: dict):
        msg = messages.make_message(msg_type, state.run_id, iteration, payload)
        state.__dict__.setdefault("_messages", []).append(msg)
        path = self._log_path(state.run_id)
        if path:
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(messages.serialize_message(msg) + "\n")
                fh.flush()

    def _messages_of(self, state: RunState) -> list[dict]:
        return state.__dict__.get("_messages", [])

    def _persist_iteration(self, state: RunState, record: IterationRecord) -> None:
        it = record.iteration
        self._append_message(
            state,
            "solve_request",
            it,
            {"constraints": record.constraints_in.to_dict()},
        )
        self._append_message(state, "plan", it, record.plan.to_dict())
        self._append_message(state, "kpi_report", it, record.kpis.to_dict())
        self._append_message(
            state,
            "reflection",
            it,
            {"suggestions": [s.to_dict() for s in record.suggestions]},
        )

    def _append_decision(
        self,
        state: RunState,
        record: IterationRecord,
        reason: str | None = None,
        applied: dict | None = None,
    ):
        payload = {
            "chosen": record.chosen,
            "chooser": record.chooser,
            "accepted": record.accepted,
            "rejected_ids": list(record.rejected_ids),
            "human_edited": record.human_edited,
        }
        if reason:
            payload["reason"] = reason
        if applied is not None:
            payload["applied"] = applied
        self._append_message(state, "decision", record.iteration, payload)

    def _append_memory(self, state: RunState, record: IterationRecord, kpi_delta: float):
        if not self.data_dir:
            return
        chosen = next(
            (s for s in record.suggestions if s.suggestion_id == record.chosen), None
        )
        entry = {
            "scenario_fingerprint": messages.hash64(state.spec.to_dict()),
            "chosen_suggestion": chosen.to_dict() if chosen else {"suggestion_id": record.chosen},
            "kpi_delta": kpi_delta,
            "human_edited": record.human_edited,
            "timestamp": time.time(),
        }
        with open(self.data_dir / "memory.jsonl", "a", encoding="utf-8") as fh:
            fh.write(messages.canonical_json(entry) + "\n")

    def _load_from_disk(self, run_id: str) -> RunState | None:
        path = self._log_path(run_id)
        if not path or not path.exists():
            return None
        state = load_run_from_log(path.read_text(encoding="utf-8"))
        with self._global_lock:
            self._runs[run_id] = state
            self._locks.setdefault(run_id, threading.RLock())
            self._subscribers.setdefault(run_id, [])
        return state

    # ----- events -----------------------------------------------------------

    def subscribe(self, run_id: str):
        import queue

        q: "queue.Queue" = queue.Queue()
        with self._global_lock:
            if run_id not in self._runs:
                raise RunError(f"unknown run: {run_id}")
            self._subscribers.setdefault(run_id, []).append(q)
        return q

    def unsubscribe(self, run_id: str, q) -> None:
        with self._global_lock:
            subs = self._subscribers.get(run_id, [])
            if q in subs:
                subs.remove(q)

    def _publish(self, state: RunState, event: str, record: IterationRecord | None):
        payload = {
            "event": event,
            "run_id": state.run_id,
            "status": state.status,
            "terminal_reason": state.terminal_reason,
            "record": (
                {**record.canonical_dict(), "wall_time_ms": record.wall_time_ms}
                if record
                else None
            ),
        }
        with self._global_lock:
            subs = list(self._subscribers.get(state.run_id, []))
        for q in subs:
            q.put(payload)


# ----- log reconstruction and replay ----------------------------------------


def load_run_from_log(log_text: str) -> RunState:
    """Rebuild a RunState purely from its persisted message log."""
    lines = [ln for ln in log_text.splitlines() if ln.strip()]
    if not lines:
        raise messages.MessageError("empty message log")
    msgs = [messages.parse_message(ln) for ln in lines]
    head = msgs[0]
    if head["msg_type"] != "scenario":
        raise messages.MessageError("log must start with a scenario message")
    payload = head["payload"]
    spec = ScenarioSpec.from_dict(payload["scenario"])
    state = RunState(
        run_id=head["run_id"],
        spec=spec,
        mode=payload.get("mode", "headless"),
        max_iterations=payload.get("max_iterations", DEFAULT_MAX_ITERATIONS),
        qos_floor_mode=payload.get("qos_floor_mode", False),
    )
    by_iter: dict[int, dict] = {}
    for m in msgs[1:]:
        by_iter.setdefault(m["iteration"], {})[m["msg_type"]] = m["payload"]
    last_decision_reason = None
    for it in sorted(by_iter):
        parts = by_iter[it]
        if "solve_request" not in parts:
            continue
        record = IterationRecord(
            iteration=it,
            constraints_in=ConstraintSet.from_dict(parts["solve_request"]["constraints"]),
            plan=AllocationPlan.from_dict(parts["plan"]),
            kpis=KpiReport.from_dict(parts["kpi_report"]),
            suggestions=[
                ReflectionSuggestion.from_dict(s)
                for s in parts.get("reflection", {}).get("suggestions", [])
            ],
        )
        if "decision" in parts:
            d = parts["decision"]
            record.chosen = d.get("chosen")
            record.chooser = d.get("chooser")
            record.accepted = d.get("accepted", True)
            record.rejected_ids = list(d.get("rejected_ids", []))
            record.human_edited = d.get("human_edited", False)
            last_decision_reason = d.get("reason")
        state.records.append(record)
    last = state.records[-1] if state.records else None
    if last and last.chosen is not None and (
        last.chosen == "stop"
        or last_decision_reason
        or state.iterations_done >= state.max_iterations
    ):
        state.status = "finished"
        state.terminal_reason = last_decision_reason or (
            "max_iterations" if state.iterations_done >= state.max_iterations else "stop"
        )
    elif state.mode == "hitl":
        state.status = "awaiting_human"
    else:
        state.status = "running"
    state.__dict__["_messages"] = msgs
    return state


def replay_log(log_text: str) -> tuple[bool, int | None]:
    """Re-execute a persisted headless run and compare record hashes.

    Returns (identical, first_divergent_iteration).
    """
    original = load_run_from_log(log_text)
    raw_msgs = original.__dict__.get("_messages", [])
    decisions = {
        m["iteration"]: m["payload"] for m in raw_msgs if m["msg_type"] == "decision"
    }
    orch = Orchestrator(data_dir=None)
    state = orch.start_run(
        original.spec,
        mode=original.mode,
        max_iterations=original.max_iterations,
        qos_floor_mode=original.qos_floor_mode,
        run_id=original.run_id,
    )
    while state.status in ("running", "awaiting_human"):
        it = state.records[-1].iteration
        d = decisions.get(it)
        if d is None:
            break
        if d.get("chosen") == "stop":
            choice = "stop"
        elif d.get("chooser") == "auto":
            choice = "auto-top"
        elif d.get("human_edited") and d.get("applied"):
            choice = d["applied"]
        else:
            choice = d.get("applied", {}).get("suggestion_id", d.get("chosen"))
        orch.step(state.run_id, choice)

    for orig, new in zip(original.records, state.records):
        if orig.record_hash() != new.record_hash():
            return False, orig.iteration
    if len(original.records) != len(state.records):
        return False, min(len(original.records), len(state.records)) + 1
    return True, None
