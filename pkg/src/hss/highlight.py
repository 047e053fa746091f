"""Timing and functional model of the HighLight accelerator, with activity counts.

Operand A (the structured operand) is held stationary in the PEs while B
streams past. Skipping happens at two levels: the PE-array level picks the
occupied groups of Rank0 blocks out of a VFMU window (Rank1), and each PE picks
the occupied values inside its block (Rank0). Zero B values are gated.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .codec import (
    decode_blocked_csr,
    encode_blocked_csr,
    encode_hier_cp,
    metadata_bits,
)
from .pattern import PatternSpec, as_pattern, validate_against_arch
from .tensor import AT_MOST, MaskedTensor, conforms
from .workloads import MMWorkload


class UnsupportedWorkload(Exception):
    """The design cannot run this workload (pattern or operand form unsupported)."""


@dataclass(frozen=True)
class ArchConfig:
    pe_arrays: int = 4
    pe_rows: int = 32
    pe_cols: int = 2
    macs_per_pe: int = 4
    h1_max: int = 8
    h0_max: int = 4
    rank1_g: int = 2
    rank0_g: int = 2
    glb_data_kib: int = 256
    glb_meta_kib: int = 64
    rf_kib: int = 2
    dsso_enabled: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name != "dsso_enabled" and (not isinstance(v, int) or v < 1):
                raise ValueError(f"{f.name} must be a positive integer, got {v!r}")
        if self.h1_max < 2 or self.h0_max < 2:
            raise ValueError("h1_max and h0_max must be at least 2")
        if self.macs_per_pe < self.rank0_g:
            raise ValueError("a PE needs at least rank0_g MAC lanes")
        if self.rank0_g > self.h0_max or self.rank1_g > self.h1_max:
            raise ValueError("g must not exceed the matching h_max")

    @property
    def total_macs(self) -> int:
        return self.pe_arrays * self.pe_rows * self.pe_cols * self.macs_per_pe

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ArchConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown ArchConfig fields: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "ArchConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ActivityCounts:
    glb_a_reads: int = 0
    glb_b_reads: int = 0
    glb_meta_reads: int = 0
    vfmu_shifts: int = 0
    rank1_mux_selects: int = 0
    rank0_mux_selects: int = 0
    reg_writes: int = 0
    rf_updates: int = 0
    mac_effectual: int = 0
    mac_gated: int = 0
    # MACs issued on a zero operand without gating (designs lacking a gating SAF)
    mac_ineffectual: int = 0
    mux2_activations: int = 0
    glb_meta_bits: int = 0
    accum_buffer_accesses: int = 0

    def __post_init__(self):
        for f in fields(self):
            v = int(getattr(self, f.name))
            if v < 0:
                raise ValueError(f"{f.name} must be non-negative, got {v}")
            setattr(self, f.name, v)

    def to_dict(self) -> dict:
        return asdict(self)

    def scaled(self, k: int) -> "ActivityCounts":
        return ActivityCounts(**{n: v * k for n, v in self.to_dict().items()})

    def __add__(self, other: "ActivityCounts") -> "ActivityCounts":
        a, b = self.to_dict(), other.to_dict()
        return ActivityCounts(**{n: a[n] + b[n] for n in a})

    @property
    def mac_slots(self) -> int:
        return self.mac_effectual + self.mac_gated + self.mac_ineffectual


@dataclass
class SimReport:
    design: str
    workload_id: str
    output: np.ndarray | None
    cycles: int
    counts: ActivityCounts
    utilization: Fraction
    config: dict
    swapped: bool = False

    def to_dict(self, include_output: bool = False) -> dict:
        out = {
            "design": self.design,
            "workload_id": self.workload_id,
            "cycles": self.cycles,
            "utilization": str(self.utilization),
            "counts": self.counts.to_dict(),
            "config": self.config,
            "swapped": self.swapped,
        }
        if include_output and self.output is not None:
            out["output"] = self.output.tolist()
        return out

    def to_json(self, include_output: bool = False) -> str:
        return json.dumps(self.to_dict(include_output), indent=2, sort_keys=True)


def theoretical_speedup(spec: PatternSpec | str) -> Fraction:
    spec = as_pattern(spec)
    if spec.has_unconstrained:
        raise ValueError("speedup of an unconstrained rank depends on the data")
    return math.prod((Fraction(h, g) for g, h in spec.gh_params()), start=Fraction(1))


# ---------------------------------------------------------------- VFMU

@dataclass(frozen=True)
class VfmuStep:
    fetched: tuple[tuple[int, int], ...]
    """Aligned [start, end) block windows pulled from the GLB before this step."""
    evicted: tuple[tuple[int, int], ...]
    read_start: int
    shift: int
    emitted: tuple[int, ...]
    """Block ids handed to the Rank1 muxes; DUMMY marks padding."""
    occupancy: int


@dataclass(frozen=True)
class VfmuSchedule:
    h1: int
    h1_max: int
    steps: tuple[VfmuStep, ...]

    DUMMY = -1

    @property
    def max_occupancy(self) -> int:
        return max((s.occupancy for s in self.steps), default=0)

    def fetches(self) -> list[tuple[int, int]]:
        return [w for s in self.steps for w in s.fetched]


def vfmu_schedule(h1: int, num_groups: int, cfg: ArchConfig | None = None) -> VfmuSchedule:
    """Blocks of B delivered per step when Rank1 fibers are h1 blocks wide.

    GLB fetches are always aligned windows of h1_max blocks. The read pointer
    moves h1 blocks per step; windows fully behind it are dropped.
    """
    cfg = cfg or ArchConfig()
    hmax = cfg.h1_max
    if not 2 <= h1 <= hmax:
        raise ValueError(f"h1={h1} outside [2, {hmax}]")
    if num_groups < 0:
        raise ValueError("num_groups must be non-negative")
    held: list[tuple[int, int]] = []
    next_window = 0
    steps = []
    for step in range(num_groups):
        p = step * h1
        evicted = tuple(w for w in held if w[1] <= p)
        held = [w for w in held if w[1] > p]
        fetched = []
        while next_window * hmax < p + h1:
            w = (next_window * hmax, (next_window + 1) * hmax)
            next_window += 1
            if w[1] <= p:
                continue
            fetched.append(w)
            held.append(w)
        emitted = tuple(range(p, p + h1)) + (VfmuSchedule.DUMMY,) * (hmax - h1)
        steps.append(VfmuStep(tuple(fetched), evicted, p, h1, emitted,
                              sum(e - s for s, e in held)))
    return VfmuSchedule(h1, hmax, tuple(steps))


# ---------------------------------------------------------------- shared helpers

def _ceil(a: int, b: int) -> int:
    return -(-a // b)


def _tiles(m: int, n: int, cfg: ArchConfig) -> tuple[int, int]:
    return _ceil(m, cfg.pe_rows), _ceil(n, cfg.pe_arrays)


def dense_cycles(m: int, k: int, n: int, cfg: ArchConfig) -> int:
    rt, ct = _tiles(m, n, cfg)
    return rt * ct * _ceil(k, cfg.pe_cols * cfg.macs_per_pe)


def mac_split(a: MaskedTensor, b: MaskedTensor) -> tuple[int, int, int]:
    """(both nonzero, A nonzero and B zero, A zero) over every (m, k, n) triple."""
    nz_a = a.nonzero_mask()
    nz_b = b.nonzero_mask()
    col_a = nz_a.sum(axis=0).astype(np.int64)
    row_b = nz_b.sum(axis=1).astype(np.int64)
    n = b.cols
    eff = int(col_a @ row_b)
    gated = int(col_a @ (n - row_b))
    ineff = (a.rows * a.cols - int(col_a.sum())) * n
    return eff, gated, ineff


def _check_dims(w: MMWorkload):
    if w.a.cols != w.b.rows:
        raise ValueError(f"dimension mismatch: A {w.a.shape}, B {w.b.shape}")


def _b_stream(b: MaskedTensor, block: int, row_tiles: int):
    """B as fetched from the GLB: (values read, metadata bits, metadata reads, dense B)."""
    k, n = b.shape
    if b.mask.all():
        return row_tiles * k * n, 0, 0, b.effective()
    enc = encode_blocked_csr(b.transpose(), block, pad=True)
    bits = metadata_bits(enc)
    dense_b = decode_blocked_csr(enc).transpose().effective()
    nnz = b.nnz()
    return row_tiles * nnz, row_tiles * bits, row_tiles * nnz, dense_b


def _gather_matmul(enc, b_dense: np.ndarray) -> np.ndarray:
    out = np.zeros((enc.rows, b_dense.shape[1]))
    for i in range(enc.rows):
        pos = enc.positions(i)
        if pos.size:
            out[i] = enc.payload(i) @ b_dense[pos]
    return out


# ---------------------------------------------------------------- simulate

def _a_levels(spec: PatternSpec, cfg: ArchConfig):
    """(g1, h1, g0, h0) for the skipping levels, or None for a dense A."""
    params = spec.gh_params()
    if not params:
        return None
    g0, h0 = params[0]
    g1, h1 = params[1] if len(params) > 1 else (1, 1)
    return g1, h1, g0, h0


def simulate(w: MMWorkload, cfg: ArchConfig | None = None, functional: bool = True) -> SimReport:
    """Run ``w`` on HighLight. ``functional=False`` skips the output computation."""
    cfg = cfg or ArchConfig()
    _check_dims(w)
    spec = w.a_spec
    if spec is None:
        raise UnsupportedWorkload("HighLight needs a structured (or dense) operand A")
    if not validate_against_arch(spec, cfg):
        raise UnsupportedWorkload(f"pattern {spec} is outside the hardware's G:H ranges")
    m, k, n = w.dims
    levels = _a_levels(spec, cfg)
    if levels is not None and k % spec.block_size():
        raise UnsupportedWorkload(f"K={k} is not a multiple of the block size {spec.block_size()}")
    if not conforms(w.a, spec, AT_MOST):
        raise UnsupportedWorkload(f"operand A does not conform to {spec}")
    return _run(w, cfg, levels, functional, "highlight")


def _run(w: MMWorkload, cfg: ArchConfig, levels, functional: bool, design: str,
         dual_side: bool = False) -> SimReport:
    m, k, n = w.dims
    rt, ct = _tiles(m, n, cfg)
    eff, gated_b, ineff = mac_split(w.a, w.b)
    counts = ActivityCounts()

    if levels is None:
        # no skipping: every PE fills all of its MAC lanes
        block = cfg.macs_per_pe
        steps = _ceil(k, cfg.pe_cols * block)
        slots_total = m * n * k
        counts.glb_a_reads = m * k
        counts.mac_effectual = eff
        counts.mac_gated = gated_b
        counts.mac_ineffectual = ineff
        a_enc = None
    else:
        g1, h1, g0, h0 = levels
        block = h0
        groups = k // (h1 * h0)
        slots = groups * g1
        lanes = cfg.pe_cols * (cfg.macs_per_pe // g0)
        steps = _ceil(slots, lanes)
        slots_total = m * n * slots * g0
        # the hardware still issues the A-side zeros it stores; they are gated
        # along with null selects
        counts.mac_effectual = eff
        counts.mac_gated = slots_total - eff
        a_enc = encode_hier_cp(w.a, w.a_spec, check=False)
        counts.glb_a_reads = a_enc.nnz()
        counts.glb_meta_reads = a_enc.nnz()
        counts.glb_meta_bits = metadata_bits(a_enc)
        counts.rank0_mux_selects = m * n * slots * g0
        if h1 > 1:
            counts.rank1_mux_selects = m * n * slots
            counts.vfmu_shifts = rt * n * groups
        counts.mux2_activations = (counts.rank1_mux_selects * (cfg.h1_max - 1)
                                   + counts.rank0_mux_selects * (cfg.h0_max - 1))
        if dual_side:
            # one extra 2:1 mux per MAC lane picks between the two operand-B sources
            counts.mux2_activations += counts.rank0_mux_selects

    b_reads, b_bits, b_meta, b_dense = _b_stream(w.b, block, rt)
    counts.glb_b_reads = b_reads
    counts.glb_meta_bits += b_bits
    counts.glb_meta_reads += b_meta
    counts.reg_writes = counts.glb_a_reads * min(cfg.pe_arrays, n) + b_reads
    counts.rf_updates = m * n * steps
    cycles = rt * ct * steps

    output = None
    if functional:
        if a_enc is None:
            output = w.a.effective() @ b_dense
        else:
            output = _gather_matmul(a_enc, b_dense)
    util = Fraction(counts.mac_effectual, cycles * cfg.total_macs) if cycles else Fraction(0)
    return SimReport(design, w.id, output, cycles, counts, util, cfg.to_dict())


# ---------------------------------------------------------------- DSSO

def _b_rank1(w: MMWorkload, h0: int, cfg: ArchConfig):
    """(g1, h1) of B's structured upper rank, or None when B brings no structure."""
    spec = w.b_spec
    if spec is None:
        if w.b.mask.all():
            return None
        raise UnsupportedWorkload("dual-side mode needs a structured or dense operand B")
    params = spec.gh_params()
    if not params:
        return None
    low_dense = not spec.ranks[-1].rule.is_gh
    if not low_dense and params[0] == (h0, h0):
        params = params[1:]  # lowest rank written out as a full h0:h0 block
        low_dense = True
    if len(params) != 1 or not low_dense:
        raise UnsupportedWorkload(
            f"operand B pattern {spec} must have one G:H rank above a dense lowest rank")
    g1, h1 = params[0]
    if g1 != cfg.rank1_g or not 2 <= h1 <= cfg.h1_max:
        raise UnsupportedWorkload(f"operand B pattern {spec} is outside the Rank1 range")
    b_view = as_pattern(f"C1({g1}:{h1})->C0({h0}:{h0})")
    if w.b.rows % (h1 * h0) or not conforms(w.b.transpose(), b_view, AT_MOST):
        raise UnsupportedWorkload(f"operand B does not conform to {spec} over blocks of {h0}")
    return g1, h1


def simulate_dsso(w: MMWorkload, cfg: ArchConfig | None = None,
                  functional: bool = True) -> SimReport:
    """Dual-side mode: Rank0 skipping on A's lowest rank, Rank1 skipping on B's upper rank."""
    cfg = cfg or ArchConfig(dsso_enabled=True)
    if not cfg.dsso_enabled:
        raise UnsupportedWorkload("dual-side mode is disabled in this configuration")
    _check_dims(w)
    spec = w.a_spec
    if spec is None or spec.has_unconstrained:
        raise UnsupportedWorkload("dual-side mode needs a structured (or dense) operand A")
    params = spec.gh_params()
    if len(params) > 1:
        raise UnsupportedWorkload(f"operand A pattern {spec} must have dense upper ranks")
    if params:
        g0, h0 = params[0]
        if g0 != cfg.rank0_g or not 2 <= h0 <= cfg.h0_max:
            raise UnsupportedWorkload(f"operand A pattern {spec} is outside the Rank0 range")
    else:
        g0 = h0 = cfg.macs_per_pe
    b_rank = _b_rank1(w, h0, cfg)
    if b_rank is None:
        return replace(simulate(w, cfg, functional), design="highlight-dsso")
    g1, h1 = b_rank
    m, k, n = w.dims
    if k % (h1 * h0):
        raise UnsupportedWorkload(f"K={k} is not a multiple of {h1 * h0}")
    if not conforms(w.a, as_pattern(f"C0({g0}:{h0})"), AT_MOST):
        raise UnsupportedWorkload(f"operand A does not conform to {spec}")
    levels = (g1, h1, g0, h0)
    if not params:
        return _dsso_dense_a(w, cfg, levels, functional)
    rep = _run(w, cfg, levels, False, "highlight-dsso", dual_side=True)
    # B's structure is carried by its own hierarchical CP metadata
    rt = _ceil(m, cfg.pe_rows)
    b_enc = encode_hier_cp(w.b.transpose(), as_pattern(f"C1({g1}:{h1})->C0({h0}:{h0})"),
                           check=False)
    c = rep.counts
    c.glb_b_reads = rt * b_enc.nnz()
    c.glb_meta_bits = metadata_bits(_a_enc(w, g0, h0)) + rt * metadata_bits(b_enc)
    c.glb_meta_reads = int(w.a.mask.sum()) + rt * b_enc.nnz()
    c.reg_writes = c.glb_a_reads * min(cfg.pe_arrays, n) + c.glb_b_reads
    if functional:
        rep.output = _dsso_output(w, g0, h0, h1)
    return rep


def _a_enc(w: MMWorkload, g0: int, h0: int):
    return encode_hier_cp(w.a, as_pattern(f"C0({g0}:{h0})"), check=False)


def _dsso_output(w: MMWorkload, g0: int, h0: int, h1: int) -> np.ndarray:
    """Products limited to the Rank0 blocks that both operands keep."""
    enc = _a_enc(w, g0, h0)
    b = w.b.effective()
    k, n = b.shape
    kept = w.b.mask.reshape(k // h0, h0, n).any(axis=1)  # B blocks present, per column
    out = np.zeros((w.a.rows, n))
    for i in range(enc.rows):
        pos = enc.positions(i)
        if pos.size:
            sel = kept[pos // h0]
            out[i] = (enc.payload(i)[:, None] * b[pos] * sel).sum(axis=0)
    return out


def _dsso_dense_a(w: MMWorkload, cfg: ArchConfig, levels, functional: bool) -> SimReport:
    """Dense A in dual-side mode: only B's upper rank is skipped."""
    g1, h1, _, h0 = levels
    m, k, n = w.dims
    rt, ct = _tiles(m, n, cfg)
    groups = k // (h1 * h0)
    slots = groups * g1
    steps = _ceil(slots, cfg.pe_cols)
    eff, _, _ = mac_split(w.a, w.b)
    counts = ActivityCounts()
    counts.glb_a_reads = m * k
    counts.mac_effectual = eff
    counts.mac_gated = m * n * slots * h0 - eff
    counts.rank1_mux_selects = m * n * slots
    counts.mux2_activations = counts.rank1_mux_selects * (cfg.h1_max - 1)
    counts.vfmu_shifts = rt * n * groups
    b_enc = encode_hier_cp(w.b.transpose(), as_pattern(f"C1({g1}:{h1})->C0({h0}:{h0})"),
                           check=False)
    counts.glb_b_reads = rt * b_enc.nnz()
    counts.glb_meta_reads = rt * b_enc.nnz()
    counts.glb_meta_bits = rt * metadata_bits(b_enc)
    counts.reg_writes = counts.glb_a_reads * min(cfg.pe_arrays, n) + counts.glb_b_reads
    counts.rf_updates = m * n * steps
    cycles = rt * ct * steps
    output = w.a.effective() @ w.b.effective() if functional else None
    util = Fraction(eff, cycles * cfg.total_macs) if cycles else Fraction(0)
    return SimReport("highlight-dsso", w.id, output, cycles, counts, util, cfg.to_dict())
