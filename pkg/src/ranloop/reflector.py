"""Reflection engine: turns KPI evidence into ranked refinement suggestions.

Three deterministic policies cover the loop's behaviors: an efficiency
policy that halves the PRB cap of inefficient resource hogs, an intent
policy that converts rate patterns into ceilings and floors, and a
context policy that swaps the objective with the load level.  Output is
a pure function of the reflection context, so runs replay identically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

from . import messages
from .constraints import ConstraintSet
from .scenario import ObjectiveMode, ScenarioSpec, TrafficContext
from .simulate import KpiReport

EFFICIENCY_THRESHOLD_MBPS_PER_PRB = 15.0
OVERSERVE_FACTOR = 1.5
STAGNATION_WINDOW = 2
STAGNATION_REL_CHANGE = 0.005
MAX_SUGGESTIONS = 4
MAX_EFFICIENCY_SUGGESTIONS = 2

LOAD_LEVELS = {TrafficContext.PEAK: 0.9, TrafficContext.OFF_PEAK: 0.3}


class SuggestionKind(str, enum.Enum):
    ADD_PRB_CAP = "add_prb_cap"
    TIGHTEN_PRB_CAP = "tighten_prb_cap"
    ADD_RATE_CEILING = "add_rate_ceiling"
    ADD_RATE_FLOOR = "add_rate_floor"
    SWITCH_OBJECTIVE = "switch_objective"
    ACTIVATE_DORMANCY = "activate_dormancy"
    STOP = "stop"


class ExpectedEffect(str, enum.Enum):
    RAISE_TOTAL_RATE = "raise_total_rate"
    RAISE_FAIRNESS = "raise_fairness"
    RAISE_SATISFACTION = "raise_satisfaction"
    CUT_PRB_USAGE = "cut_prb_usage"


@dataclass(frozen=True)
class ReflectionSuggestion:
    suggestion_id: str
    kind: SuggestionKind
    rationale: str
    expected_effect: ExpectedEffect
    policy_source: str
    target_ue: int | None = None
    target_cell: int | None = None
    value: float | int | None = None

    def validate(self) -> None:
        if not self.rationale:
            raise ValueError("rationale must be non-empty")
        if self.kind in (SuggestionKind.ADD_PRB_CAP, SuggestionKind.TIGHTEN_PRB_CAP):
            if self.value is None or int(self.value) < 1:
                raise ValueError("PRB cap suggestions require value >= 1")
            if self.target_ue is None:
                raise ValueError("PRB cap suggestions require a target UE")
        elif self.kind == SuggestionKind.ADD_RATE_CEILING:
            if self.value is None or float(self.value) <= 0:
                raise ValueError("rate ceiling must be > 0")
            if self.target_ue is None:
                raise ValueError("rate ceiling requires a target UE")
        elif self.kind == SuggestionKind.ADD_RATE_FLOOR:
            if self.value is None or float(self.value) < 0:
                raise ValueError("rate floor must be >= 0")
            if self.target_ue is None:
                raise ValueError("rate floor requires a target UE")
        elif self.kind == SuggestionKind.SWITCH_OBJECTIVE:
            if self.value not in (m.value for m in ObjectiveMode):
                raise ValueError(f"unknown objective mode {self.value!r}")

    def to_dict(self) -> dict:
        return {
            "suggestion_id": self.suggestion_id,
            "kind": self.kind.value,
            "target_ue": self.target_ue,
            "target_cell": self.target_cell,
            "value": self.value,
            "rationale": self.rationale,
            "expected_effect": self.expected_effect.value,
            "policy_source": self.policy_source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReflectionSuggestion":
        s = cls(
            suggestion_id=str(d["suggestion_id"]),
            kind=SuggestionKind(d["kind"]),
            target_ue=d.get("target_ue"),
            target_cell=d.get("target_cell"),
            value=d.get("value"),
            rationale=str(d.get("rationale", "")),
            expected_effect=ExpectedEffect(d["expected_effect"]),
            policy_source=str(d.get("policy_source", "external")),
        )
        s.validate()
        return s


@dataclass(frozen=True)
class ReflectionContext:
    spec: ScenarioSpec
    history: tuple[tuple[ConstraintSet, KpiReport], ...]
    qos_floor_mode: bool = False
    min_relative_gain: float = 0.10

    @property
    def load_level(self) -> float:
        return LOAD_LEVELS[self.spec.traffic_context]

    @property
    def current_constraints(self) -> ConstraintSet:
        return self.history[-1][0]

    @property
    def current_kpis(self) -> KpiReport:
        return self.history[-1][1]


def _sid(kind: SuggestionKind, target_ue, value, iteration: int) -> str:
    return messages.hash64(
        {"kind": kind.value, "target_ue": target_ue, "value": value, "iter": iteration}
    )[:12]


def policy_efficiency(context: ReflectionContext) -> list[ReflectionSuggestion]:
    """Halve the PRB cap of multi-PRB UEs whose Mbps/PRB is below threshold."""
    constraints = context.current_constraints
    if constraints.objective != ObjectiveMode.PERFORMANCE_FIRST:
        return []
    kpis = context.current_kpis
    it = len(context.history)
    candidates = []
    for ui, ue in enumerate(context.spec.ues):
        count = kpis.per_user_prb_count[ui]
        eff = kpis.per_user_efficiency_mbps_per_prb[ui]
        if count >= 2 and eff < EFFICIENCY_THRESHOLD_MBPS_PER_PRB:
            candidates.append((ue.ue_id, count, eff))
    candidates.sort(key=lambda t: (-t[1], t[2], t[0]))
    out = []
    for ue_id, count, eff in candidates[:MAX_EFFICIENCY_SUGGESTIONS]:
        cap = max(1, count // 2)
        existing = constraints.max_prbs_per_ue.get(ue_id)
        if existing is not None and existing <= cap:
            continue
        out.append(
            ReflectionSuggestion(
                suggestion_id=_sid(SuggestionKind.TIGHTEN_PRB_CAP, ue_id, cap, it),
                kind=SuggestionKind.TIGHTEN_PRB_CAP,
                target_ue=ue_id,
                value=cap,
                rationale=(
                    f"ue {ue_id} holds {count} PRBs at only {eff:.1f} Mbps/PRB "
                    f"(threshold {EFFICIENCY_THRESHOLD_MBPS_PER_PRB:.0f}); capping it at "
                    f"{cap} frees low-yield PRBs for better-placed users"
                ),
                expected_effect=ExpectedEffect.RAISE_TOTAL_RATE,
                policy_source="policy_efficiency",
            )
        )
    return out


def policy_intent(context: ReflectionContext) -> list[ReflectionSuggestion]:
    """Infer intent from rate patterns: ceiling for the most over-served UE,
    floors for UEs below their QoS requirement."""
    if not context.qos_floor_mode:
        return []
    kpis = context.current_kpis
    constraints = context.current_constraints
    it = len(context.history)
    out = []

    over = []
    for ui, ue in enumerate(context.spec.ues):
        rate = kpis.per_user_rate_mbps[ui]
        if rate > OVERSERVE_FACTOR * ue.demand_mbps:
            existing = constraints.max_rate_mbps.get(ue.ue_id)
            if existing is None or existing > ue.demand_mbps:
                over.append((rate / ue.demand_mbps, ue))
    if over:
        _, ue = max(over, key=lambda t: (t[0], -t[1].ue_id))
        out.append(
            ReflectionSuggestion(
                suggestion_id=_sid(SuggestionKind.ADD_RATE_CEILING, ue.ue_id, ue.demand_mbps, it),
                kind=SuggestionKind.ADD_RATE_CEILING,
                target_ue=ue.ue_id,
                value=ue.demand_mbps,
                rationale=(
                    f"ue {ue.ue_id} receives well above its {ue.demand_mbps:.0f} Mbps demand; "
                    "capping its rate releases resources to under-served users"
                ),
                expected_effect=ExpectedEffect.RAISE_SATISFACTION,
                policy_source="policy_intent",
            )
        )
    for ui, ue in enumerate(context.spec.ues):
        rate = kpis.per_user_rate_mbps[ui]
        if ue.min_rate_mbps > 0 and rate < ue.min_rate_mbps:
            existing = constraints.min_rate_mbps.get(ue.ue_id)
            if existing is not None and existing >= ue.min_rate_mbps:
                continue
            out.append(
                ReflectionSuggestion(
                    suggestion_id=_sid(SuggestionKind.ADD_RATE_FLOOR, ue.ue_id, ue.min_rate_mbps, it),
                    kind=SuggestionKind.ADD_RATE_FLOOR,
                    target_ue=ue.ue_id,
                    value=ue.min_rate_mbps,
                    rationale=(
                        f"ue {ue.ue_id} gets {rate:.1f} Mbps, below its "
                        f"{ue.min_rate_mbps:.0f} Mbps requirement; enforcing the floor "
                        "forces the solver to serve it first"
                    ),
                    expected_effect=ExpectedEffect.RAISE_SATISFACTION,
                    policy_source="policy_intent",
                )
            )
    return out


def policy_context(context: ReflectionContext) -> list[ReflectionSuggestion]:
    """Align the objective mode with the traffic load level."""
    constraints = context.current_constraints
    it = len(context.history)
    out = []
    if context.load_level < 0.5 and constraints.objective == ObjectiveMode.PERFORMANCE_FIRST:
        out.append(
            ReflectionSuggestion(
                suggestion_id=_sid(SuggestionKind.SWITCH_OBJECTIVE, None, ObjectiveMode.ENERGY_FIRST.value, it),
                kind=SuggestionKind.SWITCH_OBJECTIVE,
                value=ObjectiveMode.ENERGY_FIRST.value,
                rationale=(
                    "off-peak load with full-power operation wastes resources; "
                    "switch to the energy-efficiency-first objective"
                ),
                expected_effect=ExpectedEffect.CUT_PRB_USAGE,
                policy_source="policy_context",
            )
        )
        out.append(
            ReflectionSuggestion(
                suggestion_id=_sid(SuggestionKind.ACTIVATE_DORMANCY, None, None, it),
                kind=SuggestionKind.ACTIVATE_DORMANCY,
                rationale=(
                    "deactivate underperforming PRBs while holding every "
                    "minimum-rate guarantee"
                ),
                expected_effect=ExpectedEffect.CUT_PRB_USAGE,
                policy_source="policy_context",
            )
        )
    elif context.load_level >= 0.5 and constraints.objective == ObjectiveMode.ENERGY_FIRST:
        out.append(
            ReflectionSuggestion(
                suggestion_id=_sid(SuggestionKind.SWITCH_OBJECTIVE, None, ObjectiveMode.PERFORMANCE_FIRST.value, it),
                kind=SuggestionKind.SWITCH_OBJECTIVE,
                value=ObjectiveMode.PERFORMANCE_FIRST.value,
                rationale="peak load detected; return to the performance-first objective",
                expected_effect=ExpectedEffect.RAISE_TOTAL_RATE,
                policy_source="policy_context",
            )
        )
    return out


def _effect_priority(context: ReflectionContext) -> list[ExpectedEffect]:
    """Ranking order of expected effects for the active regime."""
    objective = context.current_constraints.objective
    if context.qos_floor_mode:
        return [
            ExpectedEffect.RAISE_SATISFACTION,
            ExpectedEffect.RAISE_TOTAL_RATE,
            ExpectedEffect.RAISE_FAIRNESS,
            ExpectedEffect.CUT_PRB_USAGE,
        ]
    if objective == ObjectiveMode.ENERGY_FIRST or context.load_level < 0.5:
        return [
            ExpectedEffect.CUT_PRB_USAGE,
            ExpectedEffect.RAISE_SATISFACTION,
            ExpectedEffect.RAISE_TOTAL_RATE,
            ExpectedEffect.RAISE_FAIRNESS,
        ]
    return [
        ExpectedEffect.RAISE_TOTAL_RATE,
        ExpectedEffect.RAISE_SATISFACTION,
        ExpectedEffect.RAISE_FAIRNESS,
        ExpectedEffect.CUT_PRB_USAGE,
    ]


def _objective_metric(constraints: ConstraintSet, kpis: KpiReport) -> float:
    if constraints.objective == ObjectiveMode.ENERGY_FIRST:
        return -float(kpis.total_active_prbs)
    return kpis.total_rate_mbps


def _stagnated(context: ReflectionContext) -> bool:
    if len(context.history) < STAGNATION_WINDOW + 1:
        return False
    vals = [
        _objective_metric(c, k) for c, k in context.history[-(STAGNATION_WINDOW + 1):]
    ]
    for prev, cur in zip(vals, vals[1:]):
        denom = max(abs(prev), 1e-9)
        if abs(cur - prev) / denom >= STAGNATION_REL_CHANGE:
            return False
    return True


def stop_suggestion(context: ReflectionContext, reason: str) -> ReflectionSuggestion:
    return ReflectionSuggestion(
        suggestion_id=_sid(SuggestionKind.STOP, None, None, len(context.history)),
        kind=SuggestionKind.STOP,
        rationale=reason,
        expected_effect=ExpectedEffect.RAISE_TOTAL_RATE,
        policy_source="reflect",
    )


def reflect(context: ReflectionContext) -> list[ReflectionSuggestion]:
    """Union of the three policies, deduplicated, ranked and truncated to 4.

    Emits a single stop suggestion when no policy fires (converged or
    stagnated state).  Pure function of the context.
    """
    if not context.history:
        raise ValueError("reflection context has empty history")
    raw = policy_efficiency(context) + policy_intent(context) + policy_context(context)
    seen = set()
    suggestions = []
    for s in raw:
        key = (s.kind, s.target_ue, s.target_cell, s.value)
        if key in seen:
            continue
        seen.add(key)
        s.validate()
        suggestions.append(s)
    if not suggestions:
        reason = (
            "objective stagnated (< 0.5% change over 2 iterations) and no policy fires"
            if _stagnated(context)
            else "no policy fires: targets met for the current context"
        )
        return [stop_suggestion(context, reason)]
    order = {e: i for i, e in enumerate(_effect_priority(context))}
    suggestions.sort(key=lambda s: order[s.expected_effect])
    return suggestions[:MAX_SUGGESTIONS]


def apply_suggestion(
    constraints: ConstraintSet, suggestion: ReflectionSuggestion
) -> ConstraintSet:
    """Return the constraint set with one suggestion folded in.

    activate_dormancy does not edit the set here; the orchestrator runs
    dormancy selection as part of the solve pipeline.
    """
    suggestion.validate()
    kind = suggestion.kind
    if kind in (SuggestionKind.ADD_PRB_CAP, SuggestionKind.TIGHTEN_PRB_CAP):
        caps = dict(constraints.max_prbs_per_ue)
        caps[int(suggestion.target_ue)] = int(suggestion.value)
        return replace(constraints, max_prbs_per_ue=caps)
    if kind == SuggestionKind.ADD_RATE_CEILING:
        ceilings = dict(constraints.max_rate_mbps)
        ceilings[int(suggestion.target_ue)] = float(suggestion.value)
        return replace(constraints, max_rate_mbps=ceilings)
    if kind == SuggestionKind.ADD_RATE_FLOOR:
        floors = dict(constraints.min_rate_mbps)
        floors[int(suggestion.target_ue)] = float(suggestion.value)
        return replace(constraints, min_rate_mbps=floors)
    if kind == SuggestionKind.SWITCH_OBJECTIVE:
        return replace(constraints, objective=ObjectiveMode(suggestion.value))
    if kind in (SuggestionKind.ACTIVATE_DORMANCY, SuggestionKind.STOP):
        return constraints
    raise ValueError(f"unknown suggestion kind {kind!r}")
