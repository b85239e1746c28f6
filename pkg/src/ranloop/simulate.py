"""KPI evaluation of allocation plans against channel realizations.

Per-PRB SINR with full inter-cell interference, Shannon-rate throughput,
Jain fairness, PRB usage, radiated power and QoS satisfaction.  The
Monte Carlo wrapper averages the real-valued KPIs over seeded trials;
trial randomness is counter-derived, so any partition of trial indices
across workers merges to the same mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, draw_channel
from .constraints import UNASSIGNED, AllocationPlan
from .scenario import ScenarioSpec


@dataclass(frozen=True)
class KpiReport:
    per_user_rate_mbps: tuple[float, ...]
    total_rate_mbps: float
    jain_fairness: float
    per_user_prb_count: tuple[int, ...]
    total_active_prbs: int
    per_cell_active_prbs: tuple[int, ...]
    per_user_mean_sinr_db: tuple[float, ...]
    total_tx_power_w: float
    satisfied_users: int
    qos_satisfaction_rate: float
    per_user_efficiency_mbps_per_prb: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "per_user_rate_mbps": list(self.per_user_rate_mbps),
            "total_rate_mbps": self.total_rate_mbps,
            "jain_fairness": self.jain_fairness,
            "per_user_prb_count": list(self.per_user_prb_count),
            "total_active_prbs": self.total_active_prbs,
            "per_cell_active_prbs": list(self.per_cell_active_prbs),
            "per_user_mean_sinr_db": list(self.per_user_mean_sinr_db),
            "total_tx_power_w": self.total_tx_power_w,
            "satisfied_users": self.satisfied_users,
            "qos_satisfaction_rate": self.qos_satisfaction_rate,
            "per_user_efficiency_mbps_per_prb": list(self.per_user_efficiency_mbps_per_prb),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KpiReport":
        return cls(
            per_user_rate_mbps=tuple(d["per_user_rate_mbps"]),
            total_rate_mbps=d["total_rate_mbps"],
            jain_fairness=d["jain_fairness"],
            per_user_prb_count=tuple(int(x) for x in d["per_user_prb_count"]),
            total_active_prbs=int(d["total_active_prbs"]),
            per_cell_active_prbs=tuple(int(x) for x in d["per_cell_active_prbs"]),
            per_user_mean_sinr_db=tuple(d["per_user_mean_sinr_db"]),
            total_tx_power_w=d["total_tx_power_w"],
            satisfied_users=int(d["satisfied_users"]),
            qos_satisfaction_rate=d["qos_satisfaction_rate"],
            per_user_efficiency_mbps_per_prb=tuple(d["per_user_efficiency_mbps_per_prb"]),
        )


def noise_power_w(spec: ScenarioSpec) -> float:
    """Per-PRB thermal noise power incl. UE noise figure, linear watts."""
    phy = spec.phy
    psd_w_hz = 10.0 ** ((phy.noise_psd_dbm_hz - 30.0) / 10.0)
    nf = 10.0 ** (phy.ue_noise_figure_db / 10.0)
    return psd_w_hz * phy.prb_bandwidth_hz * nf


def jain_fairness(rates: np.ndarray) -> float:
    """Jain index (sum r)^2 / (N sum r^2); 1.0 by convention at zero rate."""
    total = float(rates.sum())
    square_sum = float(np.square(rates).sum())
    # subnormal rates can square to zero; treat as the all-zero case
    if total <= 0.0 or square_sum <= 0.0:
        return 1.0
    return float(total * total / (len(rates) * square_sum))


def per_user_rates(
    spec: ScenarioSpec, plan: AllocationPlan, gains: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-UE Shannon rates (Mbps) and mean assigned-PRB SINR (linear).

    SINR on PRB b for a UE served by cell c uses the serving power and
    gain against the sum of all other cells' power-weighted gains plus
    per-PRB noise.  Rate is additive over the UE's assigned PRBs.
    """
    n_ue = spec.num_ues
    n_cell, n_prb = plan.assignment.shape
    noise = noise_power_w(spec)
    bw_mhz = spec.phy.prb_bandwidth_hz / 1e6

    # rx[u, c, b]: power received at UE u from cell c on PRB b
    rx = plan.power_w[None, :, :] * gains
    total_rx = rx.sum(axis=1)  # [u, b]

    rates = np.zeros(n_ue)
    sinr_sum = np.zeros(n_ue)
    prb_counts = np.zeros(n_ue, dtype=int)
    for ui, ue in enumerate(spec.ues):
        ci = spec.cell_index(ue.serving_cell)
        assigned = np.flatnonzero(plan.assignment[ci] == ue.ue_id)
        for b in assigned:
            signal = rx[ui, ci, b]
            interference = total_rx[ui, b] - signal
            sinr = signal / (interference + noise)
            rates[ui] += bw_mhz * np.log2(1.0 + sinr)
            sinr_sum[ui] += sinr
            prb_counts[ui] += 1
    mean_sinr = np.where(prb_counts > 0, sinr_sum / np.maximum(prb_counts, 1), 0.0)
    return rates, mean_sinr


def evaluate(
    spec: ScenarioSpec, plan: AllocationPlan, chan: ChannelRealization
) -> KpiReport:
    """KPIs of one plan against one channel realization.  Pure function."""
    _check_plan(spec, plan, chan)
    rates, mean_sinr_lin = per_user_rates(spec, plan, chan.gains)
    return _build_report(spec, plan, rates, _sinr_db(mean_sinr_lin, plan, spec))


def evaluate_mc(
    spec: ScenarioSpec, plan: AllocationPlan, trials: list[int] | None = None
) -> KpiReport:
    """Arithmetic mean of per-trial KPIs; satisfaction from mean rates.

    Integer PRB-usage fields come from the plan; real-valued fields are
    averaged over the trial indices (default: all of them).
    """
    idx = list(range(spec.monte_carlo_trials)) if trials is None else trials
    rate_acc = np.zeros(spec.num_ues)
    sinr_db_acc = np.zeros(spec.num_ues)
    jain_acc = 0.0
    for t in idx:
        chan = draw_channel(spec, t)
        _check_plan(spec, plan, chan)
        rates, mean_sinr_lin = per_user_rates(spec, plan, chan.gains)
        rate_acc += rates
        sinr_db_acc += _sinr_db(mean_sinr_lin, plan, spec)
        jain_acc += jain_fairness(rates)
    n = len(idx)
    mean_rates = rate_acc / n
    return _build_report(
        spec, plan, mean_rates, sinr_db_acc / n, jain_override=jain_acc / n
    )


def export_trial_csv(spec: ScenarioSpec, plan: AllocationPlan) -> str:
    """One row per (trial, ue) with mean assigned-PRB SINR and rate."""
    lines = ["trial,ue_id,sinr_db,rate_mbps"]
    for t in range(spec.monte_carlo_trials):
        chan = draw_channel(spec, t)
        rates, mean_sinr_lin = per_user_rates(spec, plan, chan.gains)
        sinr_db = _sinr_db(mean_sinr_lin, plan, spec)
        for ui, ue in enumerate(spec.ues):
            lines.append(f"{t},{ue.ue_id},{sinr_db[ui]:.4f},{rates[ui]:.6f}")
    return "\n".join(lines) + "\n"


def _sinr_db(mean_sinr_lin: np.ndarray, plan: AllocationPlan, spec: ScenarioSpec) -> np.ndarray:
    """dB conversion; UEs holding no PRBs report 0.0 by convention."""
    out = np.zeros(spec.num_ues)
    for ui, ue in enumerate(spec.ues):
        if plan.prb_count_of_ue(ue.ue_id) > 0 and mean_sinr_lin[ui] > 0:
            out[ui] = 10.0 * np.log10(mean_sinr_lin[ui])
    return out


def _check_plan(spec: ScenarioSpec, plan: AllocationPlan, chan: ChannelRealization) -> None:
    expected = (spec.num_cells, spec.num_prbs)
    if plan.assignment.shape != expected or plan.power_w.shape != expected:
        raise ValueError(f"plan shape mismatch: expected {expected}")
    if chan.gains.shape != (spec.num_ues, spec.num_cells, spec.num_prbs):
        raise ValueError("channel shape mismatch with scenario")
    # single UE per PRB per cell holds structurally (one slot per PRB);
    # reject assignments naming UEs not served by the cell
    for ci, cell in enumerate(spec.cells):
        served = {spec.ues[i].ue_id for i in spec.ues_of_cell(cell.cell_id)}
        for b in range(spec.num_prbs):
            ue_id = int(plan.assignment[ci, b])
            if ue_id != UNASSIGNED and ue_id not in served:
                raise ValueError(
                    f"plan assigns prb {b} of cell {cell.cell_id} to non-served ue {ue_id}"
                )


def _build_report(
    spec: ScenarioSpec,
    plan: AllocationPlan,
    rates: np.ndarray,
    sinr_db: np.ndarray,
    jain_override: float | None = None,
) -> KpiReport:
    n = spec.num_ues
    prb_counts = np.array([plan.prb_count_of_ue(u.ue_id) for u in spec.ues])
    satisfied = sum(
        1 for ui, ue in enumerate(spec.ues) if rates[ui] >= ue.min_rate_mbps
    )
    efficiency = np.where(prb_counts > 0, rates / np.maximum(prb_counts, 1), 0.0)
    jain = jain_fairness(rates) if jain_override is None else jain_override
    return KpiReport(
        per_user_rate_mbps=tuple(float(r) for r in rates),
        total_rate_mbps=float(rates.sum()),
        jain_fairness=float(jain),
        per_user_prb_count=tuple(int(c) for c in prb_counts),
        total_active_prbs=plan.total_active_prbs(),
        per_cell_active_prbs=tuple(int(c) for c in plan.active_prbs_per_cell()),
        per_user_mean_sinr_db=tuple(float(s) for s in sinr_db),
        total_tx_power_w=float(plan.power_w.sum()),
        satisfied_users=satisfied,
        qos_satisfaction_rate=satisfied / n,
        per_user_efficiency_mbps_per_prb=tuple(float(e) for e in efficiency),
    )
