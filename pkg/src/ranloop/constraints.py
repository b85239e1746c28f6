"""Constraint sets, allocation plans, validation and the plan audit.

The audit is deliberately independent of the solver: it re-checks every
hard constraint against a finished plan from first principles, so solver
bugs cannot hide behind their own bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import messages
from .scenario import ObjectiveMode, ScenarioSpec

UNASSIGNED = -1

# conservative capacity screen: assume 1 bit/s/Hz when sizing floors
SCREEN_SPECTRAL_EFF_BPS_HZ = 1.0


class InfeasibleError(Exception):
    """Constraint set cannot be satisfied; message names the binding constraints."""


@dataclass(frozen=True)
class ConstraintSet:
    max_prbs_per_ue: dict[int, int] = field(default_factory=dict)
    min_rate_mbps: dict[int, float] = field(default_factory=dict)
    max_rate_mbps: dict[int, float] = field(default_factory=dict)
    dormant_prbs: dict[int, frozenset[int]] = field(default_factory=dict)
    objective: ObjectiveMode = ObjectiveMode.PERFORMANCE_FIRST
    max_cell_power_dbm: dict[int, float] = field(default_factory=dict)

    def cell_power_budget_w(self, spec: ScenarioSpec, cell_id: int) -> float:
        dbm = self.max_cell_power_dbm.get(
            cell_id, spec.cell_by_id(cell_id).max_tx_power_dbm
        )
        return 10.0 ** ((dbm - 30.0) / 10.0)

    def dormant_of(self, cell_id: int) -> frozenset[int]:
        return self.dormant_prbs.get(cell_id, frozenset())

    def constraint_floor(self, ue_id: int) -> float:
        """Rate floor imposed by accumulated refinements only (0 if none).

        The scenario's per-UE QoS floor drives the satisfaction KPI; the
        solver reacts to floors only once reflection writes them here.
        """
        return self.min_rate_mbps.get(ue_id, 0.0)

    def effective_min_rate(self, spec: ScenarioSpec, ue_id: int) -> float:
        """Strictest of the constraint floor and the UE's scenario QoS floor."""
        spec_floor = 0.0
        for u in spec.ues:
            if u.ue_id == ue_id:
                spec_floor = u.min_rate_mbps
                break
        return max(self.constraint_floor(ue_id), spec_floor)

    def to_dict(self) -> dict:
        return {
            "max_prbs_per_ue": {str(k): v for k, v in sorted(self.max_prbs_per_ue.items())},
            "min_rate_mbps": {str(k): v for k, v in sorted(self.min_rate_mbps.items())},
            "max_rate_mbps": {str(k): v for k, v in sorted(self.max_rate_mbps.items())},
            "dormant_prbs": {str(k): sorted(v) for k, v in sorted(self.dormant_prbs.items())},
            "objective": self.objective.value,
            "max_cell_power_dbm": {str(k): v for k, v in sorted(self.max_cell_power_dbm.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSet":
        return cls(
            max_prbs_per_ue={int(k): int(v) for k, v in d.get("max_prbs_per_ue", {}).items()},
            min_rate_mbps={int(k): float(v) for k, v in d.get("min_rate_mbps", {}).items()},
            max_rate_mbps={int(k): float(v) for k, v in d.get("max_rate_mbps", {}).items()},
            dormant_prbs={
                int(k): frozenset(int(b) for b in v)
                for k, v in d.get("dormant_prbs", {}).items()
            },
            objective=ObjectiveMode(d.get("objective", "performance_first")),
            max_cell_power_dbm={int(k): float(v) for k, v in d.get("max_cell_power_dbm", {}).items()},
        )

    def stable_hash(self) -> str:
        return messages.hash64(self.to_dict())


@dataclass(frozen=True)
class AllocationPlan:
    """assignment[c][b] = ue_id or UNASSIGNED; power_w[c][b] in watts."""

    assignment: np.ndarray
    power_w: np.ndarray
    provenance: str = ""

    @property
    def num_cells(self) -> int:
        return self.assignment.shape[0]

    @property
    def num_prbs(self) -> int:
        return self.assignment.shape[1]

    def prb_count_of_ue(self, ue_id: int) -> int:
        return int(np.sum(self.assignment == ue_id))

    def active_prbs_per_cell(self) -> np.ndarray:
        return np.sum((self.assignment != UNASSIGNED) & (self.power_w > 0), axis=1)

    def total_active_prbs(self) -> int:
        return int(self.active_prbs_per_cell().sum())

    def to_dict(self) -> dict:
        return {
            "assignment": self.assignment.astype(int).tolist(),
            "power_w": [[float(p) for p in row] for row in self.power_w],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationPlan":
        return cls(
            assignment=np.array(d["assignment"], dtype=int),
            power_w=np.array(d["power_w"], dtype=float),
            provenance=d.get("provenance", ""),
        )


@dataclass(frozen=True)
class ValidationVerdict:
    ok: bool
    violations: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


def validate(constraints: ConstraintSet, spec: ScenarioSpec) -> ValidationVerdict:
    """Check a constraint set for bounds violations and obvious infeasibility.

    Violations make the verdict not-ok; the conservative capacity screen
    only warns (it assumes 1 bit/s/Hz, far below typical efficiency).
    """
    violations: list[str] = []
    warnings: list[str] = []
    ue_ids = {u.ue_id for u in spec.ues}
    cell_ids = {c.cell_id for c in spec.cells}

    for ue_id, cap in constraints.max_prbs_per_ue.items():
        if ue_id not in ue_ids:
            violations.append(f"max_prbs_per_ue: unknown ue {ue_id}")
        if cap < 0:
            violations.append(f"max_prbs_per_ue: negative cap for ue {ue_id}")
    for ue_id, floor in constraints.min_rate_mbps.items():
        if ue_id not in ue_ids:
            violations.append(f"min_rate_mbps: unknown ue {ue_id}")
        if floor < 0:
            violations.append(f"min_rate_mbps: negative floor for ue {ue_id}")
        ceiling = constraints.max_rate_mbps.get(ue_id)
        if ceiling is not None and floor > ceiling:
            violations.append(f"min_rate_mbps: floor above ceiling for ue {ue_id}")
    for ue_id, ceiling in constraints.max_rate_mbps.items():
        if ue_id not in ue_ids:
            violations.append(f"max_rate_mbps: unknown ue {ue_id}")
        if ceiling <= 0:
            violations.append(f"max_rate_mbps: non-positive ceiling for ue {ue_id}")
    for cell_id, prbs in constraints.dormant_prbs.items():
        if cell_id not in cell_ids:
            violations.append(f"dormant_prbs: unknown cell {cell_id}")
            continue
        for b in prbs:
            if not 0 <= b < spec.num_prbs:
                violations.append(
                    f"dormant_prbs: PRB index out of range (cell {cell_id}, prb {b})"
                )
    for cell_id in constraints.max_cell_power_dbm:
        if cell_id not in cell_ids:
            violations.append(f"max_cell_power_dbm: unknown cell {cell_id}")

    # capacity screen per cell at a conservative 1 bit/s/Hz
    prb_rate_mbps = spec.phy.prb_bandwidth_hz * SCREEN_SPECTRAL_EFF_BPS_HZ / 1e6
    for cell in spec.cells:
        available = spec.num_prbs - len(constraints.dormant_of(cell.cell_id))
        needed = 0
        for i in spec.ues_of_cell(cell.cell_id):
            ue = spec.ues[i]
            floor = constraints.constraint_floor(ue.ue_id)
            if floor > 0:
                needed += max(1, math.ceil(floor / prb_rate_mbps))
        if needed > available:
            warnings.append(
                f"infeasibility: cell {cell.cell_id} needs ~{needed} PRBs at "
                f"{SCREEN_SPECTRAL_EFF_BPS_HZ} bit/s/Hz to honor rate floors "
                f"but only {available} are available"
            )

    return ValidationVerdict(ok=not violations, violations=tuple(violations), warnings=tuple(warnings))


def audit_plan(
    spec: ScenarioSpec, constraints: ConstraintSet, plan: AllocationPlan
) -> list[str]:
    """Independent post-hoc constraint audit; returns violation strings."""
    problems: list[str] = []
    if plan.assignment.shape != (spec.num_cells, spec.num_prbs):
        return [f"plan shape {plan.assignment.shape} does not match scenario"]
    if plan.power_w.shape != plan.assignment.shape:
        return ["power tensor shape differs from assignment tensor"]

    ue_by_id = {u.ue_id: u for u in spec.ues}
    for ci, cell in enumerate(spec.cells):
        dormant = constraints.dormant_of(cell.cell_id)
        budget = constraints.cell_power_budget_w(spec, cell.cell_id)
        total = float(plan.power_w[ci].sum())
        if total > budget * (1 + 1e-9) + 1e-15:
            problems.append(
                f"cell {cell.cell_id}: power {total:.6g} W exceeds budget {budget:.6g} W"
            )
        for b in range(spec.num_prbs):
            ue_id = int(plan.assignment[ci, b])
            p = float(plan.power_w[ci, b])
            if p < 0:
                problems.append(f"cell {cell.cell_id} prb {b}: negative power")
            if ue_id == UNASSIGNED:
                if p != 0.0:
                    problems.append(f"cell {cell.cell_id} prb {b}: power on unassigned PRB")
                continue
            if ue_id not in ue_by_id:
                problems.append(f"cell {cell.cell_id} prb {b}: unknown ue {ue_id}")
                continue
            if ue_by_id[ue_id].serving_cell != cell.cell_id:
                problems.append(
                    f"cell {cell.cell_id} prb {b}: ue {ue_id} is not served by this cell"
                )
            if b in dormant and p != 0.0:
                problems.append(f"cell {cell.cell_id} prb {b}: power on dormant PRB")

    for ue_id, cap in constraints.max_prbs_per_ue.items():
        count = plan.prb_count_of_ue(ue_id)
        if count > cap:
            problems.append(f"ue {ue_id}: holds {count} PRBs, cap is {cap}")
    return problems


def apply_dormancy(constraints: ConstraintSet, dormant: dict[int, frozenset[int]]) -> ConstraintSet:
    return replace(constraints, dormant_prbs=dict(dormant))
