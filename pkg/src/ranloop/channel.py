"""Seeded channel realizations for the downlink simulator.

Link gain model: UMi street-canyon NLOS path loss (antenna heights folded
into the constants), log-normal shadowing fixed per (ue, cell) per trial,
and unit-mean exponential (Rayleigh power) fading drawn per (ue, cell,
prb).  Every draw is counter-based, so any tensor entry is reproducible
in isolation and trials are order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .scenario import ScenarioSpec

SHADOWING_STD_DB = 7.82
MIN_DISTANCE_M = 5.0  # clamp to avoid the log-distance singularity


@dataclass(frozen=True)
class ChannelRealization:
    """Linear power gains, shape [num_ues, num_cells, num_prbs]."""

    gains: np.ndarray
    trial_index: int
    seed: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.gains)) or np.any(self.gains <= 0):
            raise ValueError("channel gains must be strictly positive and finite")


def path_loss_db(distance_m, carrier_freq_ghz: float):
    """UMi-NLOS path loss in dB; distance clamped to 5 m."""
    d = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    return 22.4 + 35.3 * np.log10(d) + 21.3 * np.log10(carrier_freq_ghz)


def distance_matrix(spec: ScenarioSpec) -> np.ndarray:
    """UE-to-cell distances in metres, shape [num_ues, num_cells]."""
    ue_pos = np.array([u.position_m for u in spec.ues], dtype=float)
    cell_pos = np.array([c.position_m for c in spec.cells], dtype=float)
    diff = ue_pos[:, None, :] - cell_pos[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def draw_channel(spec: ScenarioSpec, trial_index: int) -> ChannelRealization:
    """One seeded channel realization for the given trial."""
    if not 0 <= trial_index < spec.monte_carlo_trials:
        raise ValueError(
            f"trial index out of range: {trial_index} not in [0, {spec.monte_carlo_trials})"
        )
    n_ue, n_cell, n_prb = spec.num_ues, spec.num_cells, spec.num_prbs
    dist = distance_matrix(spec)
    pl_db = path_loss_db(dist, spec.phy.carrier_freq_ghz)

    u_idx, c_idx = np.meshgrid(np.arange(n_ue), np.arange(n_cell), indexing="ij")
    shadow_db = SHADOWING_STD_DB * rng.normal(
        spec.base_seed, rng.TAG_SHADOWING, trial_index, u_idx, c_idx
    )

    u3, c3, b3 = np.meshgrid(
        np.arange(n_ue), np.arange(n_cell), np.arange(n_prb), indexing="ij"
    )
    fade = rng.exponential(spec.base_seed, rng.TAG_FADING, trial_index, u3, c3, b3)

    large_scale = 10.0 ** (-(pl_db + shadow_db) / 10.0)
    gains = large_scale[:, :, None] * fade
    return ChannelRealization(gains=gains, trial_index=trial_index, seed=spec.base_seed)


def mean_gains(spec: ScenarioSpec, trials: int | None = None) -> np.ndarray:
    """Across-trials mean of the gain tensor (the solver's channel view)."""
    n = spec.monte_carlo_trials if trials is None else trials
    acc = np.zeros((spec.num_ues, spec.num_cells, spec.num_prbs))
    for t in range(n):
        acc += draw_channel(spec, t).gains
    return acc / n
