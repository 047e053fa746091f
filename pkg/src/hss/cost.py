"""Energy and EDP accounting from activity counts and a per-action cost table.

The shipped table in ``configs/default_costs.json`` is illustrative. Its
values keep the usual orderings (a GLB byte costs far more than an RF access,
which costs more than a MAC, which costs more than a 2:1 mux select) but are
not silicon measurements.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Iterable

from .highlight import ActivityCounts, SimReport

DEFAULT_COSTS = "default_costs.json"


@dataclass(frozen=True)
class CostTable:
    # energy per action, pJ
    glb_read_per_byte: float = 6.0
    rf_access: float = 1.5
    reg_access: float = 0.1
    mac_op: float = 0.4
    mac_gated: float = 0.04
    mux2_select: float = 0.01
    vfmu_shift: float = 0.2
    metadata_read_per_byte: float = 6.0
    data_word_bytes: float = 1.0
    dstc_accum_multiplier: float = 1.0
    # area per component, um^2 (informational)
    macs: float = 1024.0
    buffers: float = 4096.0
    saf_muxes: float = 40.0
    vfmu: float = 24.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be a finite non-negative number, got {v!r}")
        if self.mac_gated > self.mac_op:
            raise ValueError("a gated MAC cannot cost more than a performed one")

    @classmethod
    def from_dict(cls, obj: dict) -> "CostTable":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown cost table fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in obj.items()})

    @classmethod
    def load(cls, path) -> "CostTable":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def default(cls) -> "CostTable":
        text = resources.files("hss").joinpath("configs").joinpath(DEFAULT_COSTS).read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)

    def scaled(self, k: float) -> "CostTable":
        """Every energy entry multiplied by ``k``; area entries unchanged."""
        keep = {"data_word_bytes", "dstc_accum_multiplier", "macs", "buffers", "saf_muxes", "vfmu"}
        return CostTable(**{n: (v if n in keep else v * k) for n, v in self.to_dict().items()})


@dataclass(frozen=True)
class EnergyBreakdown:
    buffers_pj: float
    compute_pj: float
    saf_pj: float

    @property
    def total_pj(self) -> float:
        return self.buffers_pj + self.compute_pj + self.saf_pj

    def to_dict(self) -> dict:
        return {"buffers_pj": self.buffers_pj, "compute_pj": self.compute_pj,
                "saf_pj": self.saf_pj, "total_pj": self.total_pj}


def energy_of(counts: ActivityCounts, table: CostTable | None = None) -> EnergyBreakdown:
    t = table or CostTable.default()
    c = counts
    buffers = (t.glb_read_per_byte * t.data_word_bytes * (c.glb_a_reads + c.glb_b_reads)
               + t.rf_access * (c.rf_updates + t.dstc_accum_multiplier * c.accum_buffer_accesses)
               + t.reg_access * c.reg_writes)
    compute = t.mac_op * (c.mac_effectual + c.mac_ineffectual) + t.mac_gated * c.mac_gated
    saf = (t.mux2_select * c.mux2_activations + t.vfmu_shift * c.vfmu_shifts
           + t.metadata_read_per_byte * c.glb_meta_bits / 8)
    return EnergyBreakdown(float(buffers), float(compute), float(saf))


def _cycles(report) -> int:
    cycles = report.cycles if isinstance(report, SimReport) else report[1]
    if cycles <= 0:
        raise ValueError("EDP needs a positive cycle count")
    return cycles


def _energy(report, table) -> float:
    if isinstance(report, SimReport):
        return energy_of(report.counts, table).total_pj
    return float(report[0])


def edp(report: SimReport | tuple[float, int], table: CostTable | None = None) -> float:
    """Energy (pJ) times cycles. Also accepts an ``(energy, cycles)`` pair."""
    cycles = _cycles(report)
    return _energy(report, table) * cycles


def ed2(report: SimReport | tuple[float, int], table: CostTable | None = None) -> float:
    cycles = _cycles(report)
    return _energy(report, table) * cycles * cycles


def geomean(values: Iterable[float]) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("geomean of an empty list")
    if any(not v > 0 for v in vals):
        raise ValueError("geomean needs strictly positive values")
    if len(vals) == 1:
        return vals[0]
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def saf_area_fraction(table: CostTable | None = None) -> float:
    """Share of total area spent on sparsity support (muxes plus the VFMU)."""
    t = table or CostTable.default()
    total = t.macs + t.buffers + t.saf_muxes + t.vfmu
    return (t.saf_muxes + t.vfmu) / total if total else 0.0
