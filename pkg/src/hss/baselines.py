"""Reference accelerators sharing HighLight's compute and storage envelope.

TC runs everything densely. STC skips 2:4 sparsity in A only. DSTC skips any
zero on both sides but pays for load imbalance and an accumulation buffer.
S2TA skips G:8 structure on both sides but cannot run a dense A.
"""

from __future__ import annotations

import enum
from dataclasses import replace
from fractions import Fraction

import numpy as np

from .codec import encode_hier_cp
from .highlight import (
    ActivityCounts,
    ArchConfig,
    SimReport,
    UnsupportedWorkload,
    _ceil,
    _check_dims,
    _gather_matmul,
    _tiles,
    mac_split,
)
from .pattern import as_pattern
from .tensor import AT_MOST, conforms
from .workloads import MMWorkload

DSTC_LANES = 32
DSTC_TILE_ROWS = 64
S2TA_BLOCK = 8
S2TA_MAX_G_A = 4


class BaselineKind(str, enum.Enum):
    TC = "tc"
    STC = "stc"
    DSTC = "dstc"
    S2TA = "s2ta"


def _report(design: str, w: MMWorkload, cfg: ArchConfig, cycles: int, counts: ActivityCounts,
            output, util: Fraction | None = None) -> SimReport:
    if util is None:
        util = Fraction(counts.mac_effectual, cycles * cfg.total_macs) if cycles else Fraction(0)
    return SimReport(design, w.id, output, cycles, counts, min(util, Fraction(1)), cfg.to_dict())


def _dense_stream(w: MMWorkload, cfg: ArchConfig, k_eff: int, a_reads: int) -> tuple[int, ActivityCounts]:
    """Cycles and traffic for an A-stationary dense schedule over ``k_eff`` reduction slots."""
    m, _, n = w.dims
    rt, ct = _tiles(m, n, cfg)
    steps = _ceil(k_eff, cfg.pe_cols * cfg.macs_per_pe)
    c = ActivityCounts()
    c.glb_a_reads = a_reads
    c.glb_b_reads = rt * w.b.rows * n  # B is never compressed
    c.reg_writes = a_reads * min(cfg.pe_arrays, n) + c.glb_b_reads
    c.rf_updates = m * n * steps
    return rt * ct * steps, c


def simulate_tc(w: MMWorkload, cfg: ArchConfig | None = None, functional: bool = True) -> SimReport:
    cfg = cfg or ArchConfig()
    _check_dims(w)
    m, k, n = w.dims
    cycles, c = _dense_stream(w, cfg, k, m * k)
    eff, _, _ = mac_split(w.a, w.b)
    c.mac_effectual = eff
    c.mac_ineffectual = m * k * n - eff
    out = w.a.effective() @ w.b.effective() if functional else None
    return _report("tc", w, cfg, cycles, c, out)


def simulate_stc(w: MMWorkload, cfg: ArchConfig | None = None, functional: bool = True) -> SimReport:
    """2:4 skipping on A (2x at most); dense A runs at 1x; B sparsity is ignored."""
    cfg = cfg or ArchConfig()
    _check_dims(w)
    m, k, n = w.dims
    two_four = as_pattern("C0(2:4)")
    if k % 4 == 0 and w.a_spec is not None and conforms(w.a, two_four, AT_MOST) \
            and not w.a_spec.is_dense:
        enc = encode_hier_cp(w.a, two_four, check=False)
        # every 4-wide block stores two values (zero-filled when fewer survive)
        stored = m * k // 2
        cycles, c = _dense_stream(w, cfg, k // 2, stored)
        eff, _, _ = mac_split(w.a, w.b)
        c.mac_effectual = eff
        c.mac_ineffectual = m * n * (k // 2) - eff
        c.rank0_mux_selects = m * n * (k // 2)
        c.mux2_activations = c.rank0_mux_selects * 3
        c.glb_meta_reads = stored
        c.glb_meta_bits = stored * 2
        out = _gather_matmul(enc, w.b.effective()) if functional else None
        return _report("stc", w, cfg, cycles, c, out)
    if w.a_spec is not None and w.a_spec.is_dense:
        return replace(simulate_tc(w, cfg, functional), design="stc")
    raise UnsupportedWorkload("STC runs only a dense or C0(2:4) operand A")


def dstc_utilization(a_mask: np.ndarray, tile_rows: int = DSTC_TILE_ROWS,
                     lanes: int = DSTC_LANES) -> Fraction:
    """Mean lane utilization over the non-empty column tiles of A.

    Each tile is ``tile_rows`` consecutive entries of one column; its occupied
    entries are spread over ``lanes`` multipliers in ceil(occ / lanes) passes.
    """
    a_mask = np.asarray(a_mask, dtype=bool)
    m, k = a_mask.shape
    n_tiles = _ceil(m, tile_rows)
    padded = np.zeros((n_tiles * tile_rows, k), dtype=bool)
    padded[:m] = a_mask
    occ = padded.reshape(n_tiles, tile_rows, k).sum(axis=1).ravel()
    occ = occ[occ > 0]
    if occ.size == 0:
        return Fraction(1)
    # group equal occupancies to keep the exact sum cheap
    values, mult = np.unique(occ, return_counts=True)
    total = sum((Fraction(int(v) * int(c), lanes * int(-(-v // lanes)))
                 for v, c in zip(values, mult)), Fraction(0))
    return total / occ.size


def simulate_dstc(w: MMWorkload, cfg: ArchConfig | None = None, functional: bool = True) -> SimReport:
    """Outer-product dual-side skipping; cycles scale with both densities over the balance."""
    cfg = cfg or ArchConfig()
    _check_dims(w)
    m, k, n = w.dims
    rt, ct = _tiles(m, n, cfg)
    dense = rt * ct * _ceil(k, cfg.pe_cols * cfg.macs_per_pe)
    nz_a, nz_b = w.a.nonzero_mask(), w.b.nonzero_mask()
    d_a = Fraction(int(nz_a.sum()), m * k)
    d_b = Fraction(int(nz_b.sum()), k * n)
    # A columns spread over one lane axis, B rows over the other
    util = dstc_utilization(nz_a) * dstc_utilization(nz_b.T)
    cycles = max(1, min(dense, _ceil_frac(dense * d_a * d_b / util)))
    eff, _, _ = mac_split(w.a, w.b)
    c = ActivityCounts()
    c.glb_a_reads = int(nz_a.sum())
    c.glb_b_reads = int(nz_b.sum())
    c.glb_meta_bits = m * k + k * n  # one bitmask bit per position
    c.glb_meta_reads = _ceil(c.glb_meta_bits, 8)
    c.reg_writes = c.glb_a_reads + c.glb_b_reads
    c.mac_effectual = eff
    c.accum_buffer_accesses = eff
    out = None
    if functional:
        a, b = w.a.effective() * nz_a, w.b.effective() * nz_b
        out = np.zeros((m, n))
        for kk in np.flatnonzero(nz_a.any(axis=0) & nz_b.any(axis=1)):
            out += np.outer(a[:, kk], b[kk])
    return _report("dstc", w, cfg, cycles, c, out, util)


def _ceil_frac(x: Fraction) -> int:
    return -(-x.numerator // x.denominator)


def _max_block_occupancy(mask: np.ndarray, block: int) -> int:
    rows, cols = mask.shape
    return int(mask.reshape(rows, cols // block, block).sum(axis=-1).max(initial=0))


def simulate_s2ta(w: MMWorkload, cfg: ArchConfig | None = None, functional: bool = True) -> SimReport:
    """Dual-side G:8 skipping with the worst block occupancy on each side."""
    cfg = cfg or ArchConfig()
    _check_dims(w)
    m, k, n = w.dims
    if k % S2TA_BLOCK:
        raise UnsupportedWorkload(f"S2TA needs K divisible by {S2TA_BLOCK}")
    if w.a_spec is None or w.a_spec.is_dense:
        raise UnsupportedWorkload("S2TA cannot run a dense or unstructured operand A")
    if not conforms(w.a, as_pattern(f"C0({S2TA_MAX_G_A}:{S2TA_BLOCK})"), AT_MOST):
        raise UnsupportedWorkload(f"operand A exceeds {S2TA_MAX_G_A}:{S2TA_BLOCK}")
    if w.b_spec is None and not w.b.mask.all():
        raise UnsupportedWorkload("S2TA cannot run an unstructured operand B")
    g_a = max(1, _max_block_occupancy(w.a.mask, S2TA_BLOCK))
    g_b = max(1, _max_block_occupancy(w.b.mask.T, S2TA_BLOCK))
    rt, ct = _tiles(m, n, cfg)
    dense_steps = _ceil(k, cfg.pe_cols * cfg.macs_per_pe)
    steps = _ceil_frac(Fraction(dense_steps * g_a * g_b, S2TA_BLOCK * S2TA_BLOCK))
    cycles = rt * ct * steps
    blocks = k // S2TA_BLOCK
    slots = m * n * blocks * g_a * g_b // S2TA_BLOCK
    eff, _, _ = mac_split(w.a, w.b)
    c = ActivityCounts()
    c.glb_a_reads = m * blocks * g_a
    c.glb_b_reads = rt * n * blocks * g_b
    c.glb_meta_reads = c.glb_a_reads + c.glb_b_reads
    c.glb_meta_bits = 3 * c.glb_meta_reads
    c.reg_writes = c.glb_a_reads * min(cfg.pe_arrays, n) + c.glb_b_reads
    c.rf_updates = m * n * steps
    c.mac_effectual = eff
    c.mac_ineffectual = max(0, slots - eff)
    c.rank0_mux_selects = slots
    c.mux2_activations = slots * 2 * (S2TA_BLOCK - 1)
    out = w.a.effective() @ w.b.effective() if functional else None
    return _report("s2ta", w, cfg, cycles, c, out)


SIMULATORS = {
    BaselineKind.TC: simulate_tc,
    BaselineKind.STC: simulate_stc,
    BaselineKind.DSTC: simulate_dstc,
    BaselineKind.S2TA: simulate_s2ta,
}


def best_of_swap(kind: BaselineKind | str, w: MMWorkload, cfg: ArchConfig | None = None,
                 table=None, functional: bool = True) -> SimReport:
    """Run the baseline on (A, B) and on (B^T, A^T); keep the lower-EDP result."""
    from .cost import CostTable, edp

    kind = BaselineKind(kind)
    cfg = cfg or ArchConfig()
    table = table or CostTable.default()
    sim = SIMULATORS[kind]
    candidates = []
    errors = []
    for swapped, work in ((False, w), (True, w.swapped())):
        try:
            rep = sim(work, cfg, functional)
        except UnsupportedWorkload as exc:
            errors.append(str(exc))
            continue
        if swapped:
            rep.swapped = True
            rep.workload_id = w.id
            if rep.output is not None:
                rep.output = rep.output.T.copy()
        candidates.append(rep)
    if not candidates:
        raise UnsupportedWorkload(f"{kind.value} supports neither orientation: " + "; ".join(errors))
    return min(candidates, key=lambda r: edp(r, table))
