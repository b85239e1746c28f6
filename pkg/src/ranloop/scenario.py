"""Scenario model: network specifications and problem decomposition.

A scenario is a declarative description of cells, users and PHY
numerology.  Parsing validates every invariant and fills derived fields;
decomposition maps an objective mode onto an ordered list of solver
subproblems via a static rule table.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng


class ScenarioError(ValueError):
    """Schema or invariant violation in a scenario document."""


class ObjectiveMode(str, enum.Enum):
    PERFORMANCE_FIRST = "performance_first"
    ENERGY_FIRST = "energy_first"


class TrafficContext(str, enum.Enum):
    PEAK = "peak"
    OFF_PEAK = "off_peak"


class Priority(str, enum.Enum):
    STANDARD = "standard"
    HIGH = "high"


# defaults for fields a scenario document may omit
DEFAULT_CARRIER_FREQ_GHZ = 3.5
DEFAULT_SUBCARRIER_SPACING_KHZ = 180.0
DEFAULT_NUM_SUBCARRIERS = 64
DEFAULT_NUM_PRBS = 16
DEFAULT_NOISE_PSD_DBM_HZ = -174.0
DEFAULT_UE_NOISE_FIGURE_DB = 7.0
DEFAULT_MAX_TX_POWER_DBM = 38.0
DEFAULT_BS_HEIGHT_M = 10.0
DEFAULT_CELL_RADIUS_M = 100.0
DEFAULT_INTER_SITE_DISTANCE_M = 200.0
DEFAULT_DEMAND_MBPS = 20.0
DEFAULT_MIN_RATE_MBPS = 6.0
DEFAULT_MONTE_CARLO_TRIALS = 100


@dataclass(frozen=True)
class PhyConfig:
    carrier_freq_ghz: float = DEFAULT_CARRIER_FREQ_GHZ
    subcarrier_spacing_khz: float = DEFAULT_SUBCARRIER_SPACING_KHZ
    num_subcarriers: int = DEFAULT_NUM_SUBCARRIERS
    num_prbs: int = DEFAULT_NUM_PRBS
    noise_psd_dbm_hz: float = DEFAULT_NOISE_PSD_DBM_HZ
    ue_noise_figure_db: float = DEFAULT_UE_NOISE_FIGURE_DB

    @property
    def prb_bandwidth_hz(self) -> float:
        return self.subcarrier_spacing_khz * 1e3 * (self.num_subcarriers / self.num_prbs)

    @property
    def total_bandwidth_hz(self) -> float:
        return self.subcarrier_spacing_khz * 1e3 * self.num_subcarriers

    def validate(self) -> None:
        if self.num_prbs < 1:
            raise ScenarioError("phy.num_prbs: must be >= 1")
        if self.num_subcarriers < 1:
            raise ScenarioError("phy.num_subcarriers: must be >= 1")
        if self.num_subcarriers % self.num_prbs != 0:
            raise ScenarioError(
                "phy.num_subcarriers: must be divisible by num_prbs "
                f"({self.num_subcarriers} % {self.num_prbs} != 0)"
            )
        if not (self.subcarrier_spacing_khz > 0 and math.isfinite(self.subcarrier_spacing_khz)):
            raise ScenarioError("phy.subcarrier_spacing_khz: must be finite and > 0")
        if not math.isfinite(self.noise_psd_dbm_hz):
            raise ScenarioError("phy.noise_psd_dbm_hz: must be finite")

    def to_dict(self) -> dict:
        return {
            "carrier_freq_ghz": self.carrier_freq_ghz,
            "subcarrier_spacing_khz": self.subcarrier_spacing_khz,
            "num_subcarriers": self.num_subcarriers,
            "num_prbs": self.num_prbs,
            "noise_psd_dbm_hz": self.noise_psd_dbm_hz,
            "ue_noise_figure_db": self.ue_noise_figure_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhyConfig":
        cfg = cls(
            carrier_freq_ghz=_num(d, "phy.carrier_freq_ghz", d.get("carrier_freq_ghz", DEFAULT_CARRIER_FREQ_GHZ)),
            subcarrier_spacing_khz=_num(d, "phy.subcarrier_spacing_khz", d.get("subcarrier_spacing_khz", DEFAULT_SUBCARRIER_SPACING_KHZ)),
            num_subcarriers=_int(d, "phy.num_subcarriers", d.get("num_subcarriers", DEFAULT_NUM_SUBCARRIERS)),
            num_prbs=_int(d, "phy.num_prbs", d.get("num_prbs", DEFAULT_NUM_PRBS)),
            noise_psd_dbm_hz=_num(d, "phy.noise_psd_dbm_hz", d.get("noise_psd_dbm_hz", DEFAULT_NOISE_PSD_DBM_HZ)),
            ue_noise_figure_db=_num(d, "phy.ue_noise_figure_db", d.get("ue_noise_figure_db", DEFAULT_UE_NOISE_FIGURE_DB)),
        )
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class CellSpec:
    cell_id: int
    position_m: tuple[float, float]
    max_tx_power_dbm: float = DEFAULT_MAX_TX_POWER_DBM
    bs_height_m: float = DEFAULT_BS_HEIGHT_M

    def to_dict(self) -> dict:
        return {
            "cell_id": self.cell_id,
            "position_m": list(self.position_m),
            "max_tx_power_dbm": self.max_tx_power_dbm,
            "bs_height_m": self.bs_height_m,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellSpec":
        pos = d.get("position_m")
        if not (isinstance(pos, (list, tuple)) and len(pos) == 2):
            raise ScenarioError("cells[].position_m: must be a 2-element coordinate")
        c = cls(
            cell_id=_int(d, "cells[].cell_id", d.get("cell_id")),
            position_m=(float(pos[0]), float(pos[1])),
            max_tx_power_dbm=_num(d, "cells[].max_tx_power_dbm", d.get("max_tx_power_dbm", DEFAULT_MAX_TX_POWER_DBM)),
            bs_height_m=_num(d, "cells[].bs_height_m", d.get("bs_height_m", DEFAULT_BS_HEIGHT_M)),
        )
        if not math.isfinite(c.max_tx_power_dbm):
            raise ScenarioError("cells[].max_tx_power_dbm: must be finite")
        return c


@dataclass(frozen=True)
class UeSpec:
    ue_id: int
    serving_cell: int
    position_m: tuple[float, float]
    min_rate_mbps: float = DEFAULT_MIN_RATE_MBPS
    demand_mbps: float = DEFAULT_DEMAND_MBPS
    priority: Priority = Priority.STANDARD

    def to_dict(self) -> dict:
        return {
            "ue_id": self.ue_id,
            "serving_cell": self.serving_cell,
            "position_m": list(self.position_m),
            "min_rate_mbps": self.min_rate_mbps,
            "demand_mbps": self.demand_mbps,
            "priority": self.priority.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UeSpec":
        pos = d.get("position_m")
        if not (isinstance(pos, (list, tuple)) and len(pos) == 2):
            raise ScenarioError("ues[].position_m: must be a 2-element coordinate")
        try:
            prio = Priority(d.get("priority", "standard"))
        except ValueError:
            raise ScenarioError(f"ues[].priority: unknown value {d.get('priority')!r}") from None
        u = cls(
            ue_id=_int(d, "ues[].ue_id", d.get("ue_id")),
            serving_cell=_int(d, "ues[].serving_cell", d.get("serving_cell")),
            position_m=(float(pos[0]), float(pos[1])),
            min_rate_mbps=_num(d, "ues[].min_rate_mbps", d.get("min_rate_mbps", DEFAULT_MIN_RATE_MBPS)),
            demand_mbps=_num(d, "ues[].demand_mbps", d.get("demand_mbps", DEFAULT_DEMAND_MBPS)),
            priority=prio,
        )
        if u.min_rate_mbps < 0:
            raise ScenarioError(f"ues[].min_rate_mbps: must be >= 0 (ue {u.ue_id})")
        if u.demand_mbps <= 0:
            raise ScenarioError(f"ues[].demand_mbps: must be > 0 (ue {u.ue_id})")
        if u.min_rate_mbps > u.demand_mbps:
            raise ScenarioError(
                f"ues[].min_rate_mbps: exceeds demand_mbps for ue {u.ue_id}"
            )
        return u


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    phy: PhyConfig
    cells: tuple[CellSpec, ...]
    ues: tuple[UeSpec, ...]
    cell_radius_m: float = DEFAULT_CELL_RADIUS_M
    traffic_context: TrafficContext = TrafficContext.PEAK
    monte_carlo_trials: int = DEFAULT_MONTE_CARLO_TRIALS
    base_seed: int = 0
    description: str = ""

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_ues(self) -> int:
        return len(self.ues)

    @property
    def num_prbs(self) -> int:
        return self.phy.num_prbs

    def cell_by_id(self, cell_id: int) -> CellSpec:
        for c in self.cells:
            if c.cell_id == cell_id:
                return c
        raise ScenarioError(f"serving cell not found: {cell_id}")

    def cell_index(self, cell_id: int) -> int:
        for i, c in enumerate(self.cells):
            if c.cell_id == cell_id:
                return i
        raise ScenarioError(f"serving cell not found: {cell_id}")

    def ues_of_cell(self, cell_id: int) -> list[int]:
        """Indices (into self.ues) of the UEs served by a cell."""
        return [i for i, u in enumerate(self.ues) if u.serving_cell == cell_id]

    def validate(self) -> None:
        self.phy.validate()
        if len(self.cells) < 1:
            raise ScenarioError("cells: at least one cell required")
        if len(self.ues) < 1:
            raise ScenarioError("ues: at least one UE required")
        if self.monte_carlo_trials < 1:
            raise ScenarioError("monte_carlo_trials: must be >= 1")
        if self.cell_radius_m <= 0:
            raise ScenarioError("cell_radius_m: must be > 0")
        cell_ids = [c.cell_id for c in self.cells]
        if len(set(cell_ids)) != len(cell_ids):
            raise ScenarioError("cells: duplicate cell_id")
        positions = {c.position_m for c in self.cells}
        if len(positions) != len(self.cells):
            raise ScenarioError("cells: positions must be distinct")
        ue_ids = [u.ue_id for u in self.ues]
        if len(set(ue_ids)) != len(ue_ids):
            raise ScenarioError("ues: duplicate ue_id")
        for u in self.ues:
            if u.serving_cell not in cell_ids:
                raise ScenarioError(
                    f"serving cell not found: ue {u.ue_id} references cell {u.serving_cell}"
                )
            cell = self.cell_by_id(u.serving_cell)
            d = math.dist(u.position_m, cell.position_m)
            if d > self.cell_radius_m + 1e-9:
                raise ScenarioError(
                    f"ues[].position_m: ue {u.ue_id} is {d:.1f} m from its serving cell, "
                    f"beyond the {self.cell_radius_m:.1f} m cell radius"
                )

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "phy": self.phy.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
            "ues": [u.to_dict() for u in self.ues],
            "cell_radius_m": self.cell_radius_m,
            "traffic_context": self.traffic_context.value,
            "monte_carlo_trials": self.monte_carlo_trials,
            "base_seed": self.base_seed,
        }
        if self.description:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        if not isinstance(d, dict):
            raise ScenarioError("scenario: document must be an object")
        for key in ("phy", "cells", "ues"):
            if key not in d:
                raise ScenarioError(f"{key}: missing required field")
        for key in ("cells", "ues"):
            if not isinstance(d[key], list):
                raise ScenarioError(f"{key}: must be a list")
        try:
            ctx = TrafficContext(d.get("traffic_context", "peak"))
        except ValueError:
            raise ScenarioError(
                f"traffic_context: unknown value {d.get('traffic_context')!r}"
            ) from None
        spec = cls(
            name=str(d.get("name", "unnamed")),
            phy=PhyConfig.from_dict(d["phy"]),
            cells=tuple(CellSpec.from_dict(c) for c in d["cells"]),
            ues=tuple(UeSpec.from_dict(u) for u in d["ues"]),
            cell_radius_m=_num(d, "cell_radius_m", d.get("cell_radius_m", DEFAULT_CELL_RADIUS_M)),
            traffic_context=ctx,
            monte_carlo_trials=_int(d, "monte_carlo_trials", d.get("monte_carlo_trials", DEFAULT_MONTE_CARLO_TRIALS)),
            base_seed=_int(d, "base_seed", d.get("base_seed", 0)),
            description=str(d.get("description", "")),
        )
        spec.validate()
        return spec


class SubproblemKind(str, enum.Enum):
    RB_ALLOCATION = "rb_allocation"
    POWER_CONTROL = "power_control"
    DORMANCY_SELECTION = "dormancy_selection"


@dataclass(frozen=True)
class Subproblem:
    kind: SubproblemKind
    objective: ObjectiveMode
    depends_on: tuple[int, ...] = ()


@dataclass(frozen=True)
class ProblemDecomposition:
    subproblems: tuple[Subproblem, ...]

    def kinds(self) -> list[SubproblemKind]:
        return [s.kind for s in self.subproblems]


# Static decomposition rule table keyed on objective mode.  Each entry is
# an ordered list of (kind, depends_on) pairs; new decompositions can be
# added here without touching the solver.
DECOMPOSITION_RULES: dict[ObjectiveMode, list[tuple[SubproblemKind, tuple[int, ...]]]] = {
    ObjectiveMode.PERFORMANCE_FIRST: [
        (SubproblemKind.RB_ALLOCATION, ()),
        (SubproblemKind.POWER_CONTROL, (0,)),
    ],
    ObjectiveMode.ENERGY_FIRST: [
        (SubproblemKind.DORMANCY_SELECTION, ()),
        (SubproblemKind.RB_ALLOCATION, (0,)),
        (SubproblemKind.POWER_CONTROL, (1,)),
    ],
}


def decompose(spec: ScenarioSpec, objective: ObjectiveMode) -> ProblemDecomposition:
    """Map an objective mode onto ordered solver subproblems."""
    rules = DECOMPOSITION_RULES[objective]
    return ProblemDecomposition(
        subproblems=tuple(Subproblem(kind=k, objective=objective, depends_on=deps) for k, deps in rules)
    )


def parse_scenario(document: dict) -> ScenarioSpec:
    """Parse and validate a scenario document (JSON-compatible object)."""
    return ScenarioSpec.from_dict(document)


def generate_default_scenario(seed: int, name: str = "default-3cell") -> ScenarioSpec:
    """Three cells on an equilateral triangle (200 m ISD), 2 UEs per cell
    placed uniformly at random within 100 m of their serving cell.

    Pure function of the seed: same seed, byte-identical scenario.
    """
    isd = DEFAULT_INTER_SITE_DISTANCE_M
    h = isd * math.sqrt(3.0) / 2.0
    cell_positions = [(0.0, 0.0), (isd, 0.0), (isd / 2.0, h)]
    cells = tuple(
        CellSpec(cell_id=i, position_m=(round(x, 6), round(y, 6)))
        for i, (x, y) in enumerate(cell_positions)
    )
    ues = []
    ue_id = 0
    for cell in cells:
        for k in range(2):
            # uniform over the disc via sqrt-radius transform
            u1 = float(rng.uniform(seed, 101, cell.cell_id, k, 0))
            u2 = float(rng.uniform(seed, 101, cell.cell_id, k, 1))
            r = DEFAULT_CELL_RADIUS_M * math.sqrt(u1)
            theta = 2.0 * math.pi * u2
            pos = (
                round(cell.position_m[0] + r * math.cos(theta), 3),
                round(cell.position_m[1] + r * math.sin(theta), 3),
            )
            ues.append(UeSpec(ue_id=ue_id, serving_cell=cell.cell_id, position_m=pos))
            ue_id += 1
    spec = ScenarioSpec(
        name=name,
        phy=PhyConfig(),
        cells=cells,
        ues=tuple(ues),
        base_seed=seed,
    )
    spec.validate()
    return spec


def _num(d, name, value) -> float:
    if value is None or isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{name}: expected a number, got {value!r}")
    return float(value)


def _int(d, name, value) -> int:
    if value is None or isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{name}: expected an integer, got {value!r}")
    return int(value)
