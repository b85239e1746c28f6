"""Two-stage resource solver, dormancy selection and exhaustive oracle.

The solver sees only across-trials mean gains; KPIs always come from
per-trial simulation.  Stage 1 assigns PRBs greedily by estimated
marginal rate, stage 2 water-fills each cell's power budget against an
interference estimate that is refined over a fixed number of rounds.
The exhaustive oracle enumerates tiny instances exactly and exists to
keep the heuristic honest.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import replace

import numpy as np

from .constraints import (
    UNASSIGNED,
    AllocationPlan,
    ConstraintSet,
    InfeasibleError,
    validate,
)
from .scenario import ObjectiveMode, Priority, ScenarioSpec
from .simulate import noise_power_w, per_user_rates

# interference re-estimation rounds after the initial uniform-power fill
WATERFILL_REFINE_ROUNDS = 2
# dormancy stops before the estimated total rate drops below this share
# of the pre-dormancy estimate (rate floors are checked independently)
DORMANCY_MAX_RATE_LOSS = 0.08

_EXHAUSTIVE_MAX_SLOTS = 8
_EXHAUSTIVE_MAX_UES = 4
_EXHAUSTIVE_MAX_LEVELS = 4


def water_fill(channel_quality: np.ndarray, budget: float) -> np.ndarray:
    """Classic water-filling: maximize sum log(1 + p_i q_i), sum p = budget.

    channel_quality q_i is gain over interference-plus-noise; powers are
    floored at zero and the full budget is spent.
    """
    q = np.asarray(channel_quality, dtype=float)
    n = q.size
    if n == 0 or budget <= 0:
        return np.zeros(n)
    inv = 1.0 / q
    order = np.argsort(inv, kind="stable")
    inv_sorted = inv[order]
    # largest k with water level above the k-th worst channel
    powers = np.zeros(n)
    for k in range(n, 0, -1):
        mu = (budget + inv_sorted[:k].sum()) / k
        if mu > inv_sorted[k - 1]:
            p_sorted = np.zeros(n)
            p_sorted[:k] = mu - inv_sorted[:k]
            powers[order] = p_sorted
            break
    return powers


def estimated_rates(
    spec: ScenarioSpec, plan: AllocationPlan, stats: np.ndarray
) -> np.ndarray:
    """Per-UE rate estimate (Mbps) of a plan under the mean-gain channel."""
    rates, _ = per_user_rates(spec, plan, stats)
    return rates


def estimated_total_rate(
    spec: ScenarioSpec, plan: AllocationPlan, stats: np.ndarray
) -> float:
    return float(estimated_rates(spec, plan, stats).sum())


def prb_rate_contributions(
    spec: ScenarioSpec, plan: AllocationPlan, stats: np.ndarray
) -> np.ndarray:
    """Estimated rate (Mbps) carried on each (cell, prb) slot of a plan."""
    noise = noise_power_w(spec)
    bw_mhz = spec.phy.prb_bandwidth_hz / 1e6
    rx = plan.power_w[None, :, :] * stats
    total_rx = rx.sum(axis=1)
    out = np.zeros(plan.assignment.shape)
    ue_index = {u.ue_id: i for i, u in enumerate(spec.ues)}
    for ci in range(plan.num_cells):
        for b in range(plan.num_prbs):
            ue_id = int(plan.assignment[ci, b])
            if ue_id == UNASSIGNED:
                continue
            ui = ue_index[ue_id]
            signal = rx[ui, ci, b]
            interference = total_rx[ui, b] - signal
            out[ci, b] = bw_mhz * math.log2(1.0 + signal / (interference + noise))
    return out


def solve_two_stage(
    spec: ScenarioSpec, constraints: ConstraintSet, stats: np.ndarray
) -> AllocationPlan:
    """Greedy PRB assignment then refined water-filling power control.

    Deterministic in (spec, constraints, stats).  Raises InfeasibleError
    when a rate-floor UE cannot receive any PRB at all.
    """
    verdict = validate(constraints, spec)
    if not verdict.ok:
        raise InfeasibleError("; ".join(verdict.violations))

    n_cell, n_prb = spec.num_cells, spec.num_prbs
    noise = noise_power_w(spec)
    bw_mhz = spec.phy.prb_bandwidth_hz / 1e6

    budgets = np.array(
        [constraints.cell_power_budget_w(spec, c.cell_id) for c in spec.cells]
    )
    active_mask = np.ones((n_cell, n_prb), dtype=bool)
    for ci, cell in enumerate(spec.cells):
        for b in constraints.dormant_of(cell.cell_id):
            active_mask[ci, b] = False
    n_active = active_mask.sum(axis=1)
    uniform_p = np.where(n_active > 0, budgets / np.maximum(n_active, 1), 0.0)

    # interference estimate at uniform power on every non-dormant PRB
    interf = np.zeros((spec.num_ues, n_prb))
    for ui in range(spec.num_ues):
        serving = spec.cell_index(spec.ues[ui].serving_cell)
        for ci in range(n_cell):
            if ci == serving:
                continue
            interf[ui] += uniform_p[ci] * stats[ui, ci] * active_mask[ci]

    assignment = np.full((n_cell, n_prb), UNASSIGNED, dtype=int)
    est_rate = {u.ue_id: 0.0 for u in spec.ues}
    prb_used = {u.ue_id: 0 for u in spec.ues}

    for ci, cell in enumerate(spec.cells):
        served = [spec.ues[i] for i in spec.ues_of_cell(cell.cell_id)]
        if not served or n_active[ci] == 0:
            continue
        # per-PRB rate estimate if given to each served UE at uniform power
        served_idx = {u.ue_id: spec.ues.index(u) for u in served}
        rate_est = {}
        for u in served:
            ui = served_idx[u.ue_id]
            sinr = uniform_p[ci] * stats[ui, ci] / (interf[ui] + noise)
            rate_est[u.ue_id] = bw_mhz * np.log2(1.0 + sinr)
        best_gain = np.max(
            np.stack([stats[served_idx[u.ue_id], ci] for u in served]), axis=0
        )
        prb_order = [b for b in np.argsort(-best_gain, kind="stable") if active_mask[ci, b]]

        for b in prb_order:
            candidates = []
            for u in served:
                cap = constraints.max_prbs_per_ue.get(u.ue_id)
                if cap is not None and prb_used[u.ue_id] >= cap:
                    continue
                ceiling = constraints.max_rate_mbps.get(u.ue_id)
                if ceiling is not None and est_rate[u.ue_id] >= ceiling:
                    continue
                candidates.append(u)
            if not candidates:
                continue
            # UEs still below their rate floor get first claim
            needy = [
                u
                for u in candidates
                if est_rate[u.ue_id] < constraints.constraint_floor(u.ue_id)
            ]
            pool = needy if needy else candidates

            def utility(u):
                gain = float(rate_est[u.ue_id][b])
                ceiling = constraints.max_rate_mbps.get(u.ue_id)
                if ceiling is not None:
                    gain = min(gain, ceiling - est_rate[u.ue_id])
                return gain

            chosen = max(
                pool,
                key=lambda u: (utility(u), u.priority == Priority.HIGH, -u.ue_id),
            )
            assignment[ci, b] = chosen.ue_id
            est_rate[chosen.ue_id] += float(rate_est[chosen.ue_id][b])
            prb_used[chosen.ue_id] += 1

    # stage 2: water-filling with refined interference estimates
    power = np.zeros((n_cell, n_prb))
    for ci in range(n_cell):
        slots = (assignment[ci] != UNASSIGNED) & active_mask[ci]
        if slots.any():
            power[ci, slots] = budgets[ci] / slots.sum()

    ue_index = {u.ue_id: i for i, u in enumerate(spec.ues)}
    for _ in range(1 + WATERFILL_REFINE_ROUNDS):
        rx = power[None, :, :] * stats  # [u, c, b]
        new_power = np.zeros_like(power)
        for ci in range(n_cell):
            slot_idx = np.flatnonzero((assignment[ci] != UNASSIGNED) & active_mask[ci])
            if slot_idx.size == 0:
                continue
            quality = np.empty(slot_idx.size)
            for k, b in enumerate(slot_idx):
                ui = ue_index[int(assignment[ci, b])]
                interference = rx[ui, :, b].sum() - rx[ui, ci, b]
                quality[k] = stats[ui, ci, b] / (noise + interference)
            filled = water_fill(quality, budgets[ci])
            new_power[ci, slot_idx] = filled
        power = new_power

    plan = AllocationPlan(
        assignment=assignment,
        power_w=power,
        provenance=f"two_stage:{constraints.stable_hash()}",
    )
    plan = _enforce_rate_ceilings(spec, constraints, plan, stats)

    for u in spec.ues:
        floor = constraints.constraint_floor(u.ue_id)
        if floor > 0 and plan.prb_count_of_ue(u.ue_id) == 0:
            raise InfeasibleError(
                f"min_rate_mbps >= {floor} for ue {u.ue_id} is unreachable: "
                "no PRB could be assigned (binding constraints: "
                f"max_prbs_per_ue={constraints.max_prbs_per_ue.get(u.ue_id)})"
            )
    return plan


def _enforce_rate_ceilings(
    spec: ScenarioSpec,
    constraints: ConstraintSet,
    plan: AllocationPlan,
    stats: np.ndarray,
) -> AllocationPlan:
    """Scale a UE's PRB powers down when power control pushed it over its
    rate ceiling; a few passes absorb cross-UE interference effects."""
    if not constraints.max_rate_mbps:
        return plan
    power = plan.power_w.copy()
    noise = noise_power_w(spec)
    bw_mhz = spec.phy.prb_bandwidth_hz / 1e6
    ue_index = {u.ue_id: i for i, u in enumerate(spec.ues)}

    for _ in range(3):
        adjusted = False
        rx = power[None, :, :] * stats
        total_rx = rx.sum(axis=1)
        for ue_id, ceiling in sorted(constraints.max_rate_mbps.items()):
            ui = ue_index.get(ue_id)
            if ui is None:
                continue
            ci = spec.cell_index(spec.ues[ui].serving_cell)
            slots = np.flatnonzero(plan.assignment[ci] == ue_id)
            if slots.size == 0:
                continue
            sig = power[ci, slots] * stats[ui, ci, slots]
            inm = total_rx[ui, slots] - sig + noise

            def rate_at(scale):
                return float(np.sum(bw_mhz * np.log2(1.0 + scale * sig / inm)))

            if rate_at(1.0) <= ceiling * (1 + 1e-9):
                continue
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if rate_at(mid) > ceiling:
                    hi = mid
                else:
                    lo = mid
            power[ci, slots] *= lo
            adjusted = True
        if not adjusted:
            break
    return replace(plan, power_w=power)


def solve_dormancy(
    spec: ScenarioSpec,
    constraints: ConstraintSet,
    stats: np.ndarray,
    max_rate_loss: float = DORMANCY_MAX_RATE_LOSS,
) -> ConstraintSet:
    """Greedy PRB dormancy: repeatedly sleep the lowest-utility active PRB,
    re-solving after each step; revert and stop when a rate floor breaks
    or the estimated total rate drops more than the allowed share."""
    work = replace(constraints, objective=ObjectiveMode.ENERGY_FIRST)
    plan = solve_two_stage(spec, work, stats)
    base_total = estimated_total_rate(spec, plan, stats)
    floors = {
        u.ue_id: work.effective_min_rate(spec, u.ue_id) for u in spec.ues
    }

    while True:
        contrib = prb_rate_contributions(spec, plan, stats)
        active = [
            (ci, b)
            for ci in range(spec.num_cells)
            for b in range(spec.num_prbs)
            if plan.assignment[ci, b] != UNASSIGNED and plan.power_w[ci, b] > 0
        ]
        if len(active) <= spec.num_ues:
            break
        ci, b = min(active, key=lambda cb: (contrib[cb[0], cb[1]], cb[0], cb[1]))
        cell_id = spec.cells[ci].cell_id
        trial_dormant = dict(work.dormant_prbs)
        trial_dormant[cell_id] = work.dormant_of(cell_id) | {b}
        trial = replace(work, dormant_prbs=trial_dormant)
        try:
            trial_plan = solve_two_stage(spec, trial, stats)
        except InfeasibleError:
            break
        rates = estimated_rates(spec, trial_plan, stats)
        floors_ok = all(
            rates[ui] >= floors[u.ue_id] for ui, u in enumerate(spec.ues)
        )
        total_ok = rates.sum() >= (1.0 - max_rate_loss) * base_total
        if not (floors_ok and total_ok):
            break
        work, plan = trial, trial_plan
    return work


def solve_exhaustive(
    spec: ScenarioSpec,
    constraints: ConstraintSet,
    stats: np.ndarray,
    power_levels: list[float],
) -> AllocationPlan:
    """Exact enumeration oracle for tiny instances.

    Enumerates every (assignment, quantized power) combination, filters
    by budget, caps, floors and ceilings, and returns the objective-
    optimal plan.  Guarded against anything non-tiny.
    """
    n_cell, n_prb = spec.num_cells, spec.num_prbs
    n_slots = n_cell * n_prb
    if n_slots > _EXHAUSTIVE_MAX_SLOTS:
        raise ValueError(f"instance too large: {n_slots} slots > {_EXHAUSTIVE_MAX_SLOTS}")
    if spec.num_ues > _EXHAUSTIVE_MAX_UES:
        raise ValueError(f"instance too large: {spec.num_ues} UEs > {_EXHAUSTIVE_MAX_UES}")
    if len(power_levels) > _EXHAUSTIVE_MAX_LEVELS:
        raise ValueError(f"instance too large: {len(power_levels)} power levels")

    verdict = validate(constraints, spec)
    if not verdict.ok:
        raise InfeasibleError("; ".join(verdict.violations))

    noise = noise_power_w(spec)
    bw_mhz = spec.phy.prb_bandwidth_hz / 1e6
    nonzero_levels = sorted({float(p) for p in power_levels if p > 0})
    slots = [(ci, b) for ci in range(n_cell) for b in range(n_prb)]

    # per-slot choice list: (ue_id, power); dormant slots stay off
    choices: list[list[tuple[int, float]]] = []
    for ci, b in slots:
        cell = spec.cells[ci]
        opts: list[tuple[int, float]] = [(UNASSIGNED, 0.0)]
        if b not in constraints.dormant_of(cell.cell_id):
            for i in spec.ues_of_cell(cell.cell_id):
                for lvl in nonzero_levels:
                    opts.append((spec.ues[i].ue_id, lvl))
        choices.append(opts)

    combos = np.array(
        list(itertools.product(*[range(len(c)) for c in choices])), dtype=int
    )
    m = combos.shape[0]
    assigned = np.empty((m, n_slots), dtype=int)
    power = np.empty((m, n_slots))
    for s, opts in enumerate(choices):
        ue_arr = np.array([o[0] for o in opts])
        pw_arr = np.array([o[1] for o in opts])
        assigned[:, s] = ue_arr[combos[:, s]]
        power[:, s] = pw_arr[combos[:, s]]

    feasible = np.ones(m, dtype=bool)
    for ci, cell in enumerate(spec.cells):
        cell_slots = [s for s, (c, _) in enumerate(slots) if c == ci]
        budget = constraints.cell_power_budget_w(spec, cell.cell_id)
        feasible &= power[:, cell_slots].sum(axis=1) <= budget * (1 + 1e-9)
    for ue_id, cap in constraints.max_prbs_per_ue.items():
        feasible &= (assigned == ue_id).sum(axis=1) <= cap

    # vectorized rate computation over all combos
    rates = np.zeros((m, spec.num_ues))
    rx_total = np.zeros((m, spec.num_ues, n_prb))
    for s, (ci, b) in enumerate(slots):
        for ui in range(spec.num_ues):
            rx_total[:, ui, b] += power[:, s] * stats[ui, ci, b]
    for s, (ci, b) in enumerate(slots):
        for ui, ue in enumerate(spec.ues):
            if spec.cell_index(ue.serving_cell) != ci:
                continue
            mask = assigned[:, s] == ue.ue_id
            if not mask.any():
                continue
            sig = power[mask, s] * stats[ui, ci, b]
            inm = rx_total[mask, ui, b] - sig + noise
            rates[mask, ui] += bw_mhz * np.log2(1.0 + sig / inm)

    for ui, ue in enumerate(spec.ues):
        floor = constraints.constraint_floor(ue.ue_id)
        if floor > 0:
            feasible &= rates[:, ui] >= floor
        ceiling = constraints.max_rate_mbps.get(ue.ue_id)
        if ceiling is not None:
            feasible &= rates[:, ui] <= ceiling * (1 + 1e-9)

    if not feasible.any():
        raise InfeasibleError("no feasible (assignment, power) combination")

    total = rates.sum(axis=1)
    idx = np.flatnonzero(feasible)
    if constraints.objective == ObjectiveMode.ENERGY_FIRST:
        active = (power[idx] > 0).sum(axis=1)
        best = idx[np.lexsort((-total[idx], active))[0]]
    else:
        best = idx[np.argmax(total[idx])]

    plan_assign = np.full((n_cell, n_prb), UNASSIGNED, dtype=int)
    plan_power = np.zeros((n_cell, n_prb))
    for s, (ci, b) in enumerate(slots):
        plan_assign[ci, b] = assigned[best, s]
        plan_power[ci, b] = power[best, s]
    return AllocationPlan(
        assignment=plan_assign,
        power_w=plan_power,
        provenance=f"exhaustive:{constraints.stable_hash()}",
    )
