"""Compressed operand formats.

Operand A uses hierarchical offset (CP) metadata. Each stored value carries
its offset inside its lowest-rank block; each rank above repeats this for the
nonempty fibers below it. Per-fiber counts make the stream self-delimiting.

Operand B uses a blocked CSR layout. Each row keeps its nonzeros with their
in-block offsets, plus a pointer array marking where each block starts.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pattern import PatternSpec, as_pattern
from .tensor import AT_MOST, MaskedTensor, build_rank_view, conforms


class CodecError(ValueError):
    pass


def _bits_for(n: int) -> int:
    """ceil(log2(n)) for n >= 1."""
    return (n - 1).bit_length() if n > 1 else 0


@dataclass
class HierCpRow:
    payload: np.ndarray
    cps: list[np.ndarray]
    """Offsets per level, lowest first: cps[0] per value, cps[r] per occupied level-r coordinate."""
    counts: list[np.ndarray]
    """counts[-1]: occupied coordinates per top fiber (group directory).
    counts[r] for lower r: occupied level-r children per occupied level-(r+1) coordinate."""


@dataclass
class HierCpTensor:
    rows: int
    cols: int
    rules: tuple[tuple[int, int], ...]
    """(g, h) per level, lowest first."""
    row_data: list[HierCpRow] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.rules)

    @property
    def groups_per_row(self) -> int:
        return self.cols // math.prod(h for _, h in self.rules)

    def payload(self, row: int) -> np.ndarray:
        return self.row_data[row].payload

    def rank0_cp(self, row: int) -> np.ndarray:
        return self.row_data[row].cps[0]

    def rank1_cp(self, row: int) -> np.ndarray:
        return self.row_data[row].cps[1]

    def group_dir(self, row: int) -> np.ndarray:
        return self.row_data[row].counts[-1]

    def nnz(self) -> int:
        return sum(len(r.payload) for r in self.row_data)

    def positions(self, row: int) -> np.ndarray:
        """Column index of each payload value, recovered from the metadata."""
        return _positions(self.row_data[row], self.rules, self.groups_per_row, validate=False)


def _unique_sorted(ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if ids.size == 0:
        return ids, ids
    starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]])
    counts = np.diff(np.r_[starts, ids.size])
    return ids[starts], counts


def _encode_row(values: np.ndarray, mask: np.ndarray, rules) -> HierCpRow:
    pos = np.flatnonzero(mask)
    payload = values[pos].copy()
    cps, counts = [], []
    ids = pos  # ids of occupied coordinates at the current level
    for _, h in rules:
        cps.append((ids % h).astype(np.int64))
        parents, per_parent = _unique_sorted(ids // h)
        counts.append(per_parent.astype(np.int64))
        ids = parents
    top = np.zeros(mask.size // math.prod(h for _, h in rules), dtype=np.int64)
    top[ids] = counts[-1]
    counts[-1] = top
    return HierCpRow(payload, cps, counts)


def encode_hier_cp(t: MaskedTensor, spec: PatternSpec | str, check: bool = True) -> HierCpTensor:
    """Compress ``t`` (rows along K) with one CP array per G:H rank of ``spec``."""
    spec = as_pattern(spec)
    view = build_rank_view(t.cols, spec)
    if not view.rules:
        raise CodecError("hierarchical CP needs at least one G:H rank")
    if check and not conforms(t, spec, AT_MOST):
        raise CodecError(f"tensor does not conform to {spec}")
    eff = t.effective()
    rows = [_encode_row(eff[i], t.mask[i], view.rules) for i in range(t.rows)]
    return HierCpTensor(t.rows, t.cols, view.rules, rows)


def _check_fiber_cps(cps: np.ndarray, parent: np.ndarray, h: int, what: str):
    if cps.size and (cps.min() < 0 or cps.max() >= h):
        raise CodecError(f"{what} offsets must lie in [0, {h})")
    same = parent[1:] == parent[:-1]
    if (same & (np.diff(cps) <= 0)).any():
        raise CodecError(f"{what} offsets must increase strictly within a fiber")


def _positions(row: HierCpRow, rules, n_top: int, validate: bool = True) -> np.ndarray:
    levels = len(rules)
    if validate:
        if len(row.cps) != levels or len(row.counts) != levels:
            raise CodecError("metadata level count does not match the pattern")
        if row.counts[-1].size != n_top:
            raise CodecError(f"group directory must have {n_top} entries")
    ids = np.arange(n_top, dtype=np.int64)
    for level in range(levels - 1, -1, -1):
        g, h = rules[level]
        counts = row.counts[level]
        if validate:
            if counts.size != ids.size:
                raise CodecError(f"level {level} count array does not match its parents")
            if (counts < 0).any() or (counts > g).any():
                raise CodecError(f"level {level} occupancy exceeds g={g}")
            if int(counts.sum()) != row.cps[level].size:
                raise CodecError(f"level {level} CP array length does not match its counts")
        parent = np.repeat(ids, counts)
        cps = row.cps[level]
        if validate:
            _check_fiber_cps(cps, parent, h, f"level {level}")
        ids = parent * h + cps
    if validate and ids.size != row.payload.size:
        raise CodecError("payload length does not match rank-0 CP length")
    return ids


def decode_hier_cp(e: HierCpTensor) -> MaskedTensor:
    values = np.zeros((e.rows, e.cols))
    mask = np.zeros((e.rows, e.cols), dtype=bool)
    if len(e.row_data) != e.rows:
        raise CodecError("row count does not match encoded rows")
    for i, row in enumerate(e.row_data):
        pos = _positions(row, e.rules, e.groups_per_row)
        values[i, pos] = row.payload
        mask[i, pos] = True
    return MaskedTensor(values, mask)


@dataclass
class BlockedCsrRow:
    nz_values: np.ndarray
    nz_offsets: np.ndarray
    block_ptr: np.ndarray


@dataclass
class BlockedCsrTensor:
    rows: int
    cols: int
    block: int
    row_data: list[BlockedCsrRow] = field(default_factory=list)

    @property
    def blocks_per_row(self) -> int:
        return -(-self.cols // self.block)

    def nnz(self) -> int:
        return sum(len(r.nz_values) for r in self.row_data)


def encode_blocked_csr(t: MaskedTensor, block: int, pad: bool = False) -> BlockedCsrTensor:
    if block < 1:
        raise CodecError("block size must be positive")
    if t.cols % block and not pad:
        raise CodecError(f"{t.cols} columns are not divisible by block {block}")
    n_blocks = -(-t.cols // block)
    eff = t.effective()
    out = []
    for i in range(t.rows):
        pos = np.flatnonzero(t.mask[i])
        per_block = np.bincount(pos // block, minlength=n_blocks)
        ptr = np.zeros(n_blocks + 1, dtype=np.int64)
        np.cumsum(per_block, out=ptr[1:])
        out.append(BlockedCsrRow(eff[i, pos].copy(), (pos % block).astype(np.int64), ptr))
    return BlockedCsrTensor(t.rows, t.cols, block, out)


def _csr_positions(row: BlockedCsrRow, block: int, n_blocks: int, cols: int) -> np.ndarray:
    ptr = np.asarray(row.block_ptr)
    if ptr.size != n_blocks + 1 or ptr[0] != 0:
        raise CodecError("block_ptr must have blocks+1 entries and start at 0")
    if (np.diff(ptr) < 0).any():
        raise CodecError("block_ptr must be non-decreasing")
    n = row.nz_values.size
    if ptr[-1] != n or row.nz_offsets.size != n:
        raise CodecError("block_ptr end must equal the number of stored values")
    blk = np.repeat(np.arange(n_blocks), np.diff(ptr))
    _check_fiber_cps(row.nz_offsets, blk, block, "block")
    pos = blk * block + row.nz_offsets
    if pos.size and pos.max() >= cols:
        raise CodecError("offset points past the last column")
    return pos


def decode_blocked_csr(e: BlockedCsrTensor) -> MaskedTensor:
    values = np.zeros((e.rows, e.cols))
    mask = np.zeros((e.rows, e.cols), dtype=bool)
    if len(e.row_data) != e.rows:
        raise CodecError("row count does not match encoded rows")
    for i, row in enumerate(e.row_data):
        pos = _csr_positions(row, e.block, e.blocks_per_row, e.cols)
        values[i, pos] = row.nz_values
        mask[i, pos] = True
    return MaskedTensor(values, mask)


def metadata_bits(e: HierCpTensor | BlockedCsrTensor) -> int:
    """Metadata footprint in bits.

    Hierarchical CP: ceil(log2 h) bits per CP entry at each level, plus
    ceil(log2(g_top + 1)) bits per group directory entry. Lower-level count
    arrays are only charged when some fiber holds fewer than g coordinates
    (otherwise every count equals g and is implied by the pattern).

    Blocked CSR: ceil(log2 block) bits per offset plus (blocks + 1) pointers of
    ceil(log2(nnz + 1)) bits per row.
    """
    total = 0
    if isinstance(e, HierCpTensor):
        g_top = e.rules[-1][0]
        for row in e.row_data:
            for (_, h), cps in zip(e.rules, row.cps):
                total += cps.size * _bits_for(h)
            total += row.counts[-1].size * _bits_for(g_top + 1)
            for level, counts in enumerate(row.counts[:-1]):
                g = e.rules[level][0]
                if (counts != g).any():
                    total += counts.size * _bits_for(g + 1)
        return total
    if isinstance(e, BlockedCsrTensor):
        for row in e.row_data:
            n = row.nz_values.size
            total += n * _bits_for(e.block) + (e.blocks_per_row + 1) * _bits_for(n + 1)
        return total
    raise TypeError(f"unsupported encoding {type(e).__name__}")


def metadata_words(e: HierCpTensor | BlockedCsrTensor) -> int:
    """Number of metadata entries (CP offsets, counts, pointers)."""
    if isinstance(e, HierCpTensor):
        return sum(sum(c.size for c in r.cps) + sum(c.size for c in r.counts) for r in e.row_data)
    return sum(r.nz_offsets.size + r.block_ptr.size for r in e.row_data)


# Serialization, all fields little endian.
#   hier CP : b"HSHC" u16 ver | u32 rows | u32 cols | u32 levels | (u32 g, u32 h) per level
#             per row: [u32 n, f32 payload[n]] then per level [u32 n, u16 cp[n]]
#             then per level [u32 n, u16 count[n]]
#   blk CSR : b"HSBC" u16 ver | u32 rows | u32 cols | u32 block
#             per row: u32 nnz | f32 values[nnz] | u16 offsets[nnz] | u32 ptr[blocks+1]
_HC_MAGIC, _BC_MAGIC, _VER = b"HSHC", b"HSBC", 1
_HEAD = struct.Struct("<4sHIII")
_U32 = struct.Struct("<I")


def _put(parts: list, arr, dtype: str):
    arr = np.asarray(arr)
    parts.append(_U32.pack(arr.size))
    parts.append(arr.astype(dtype).tobytes())


class _Reader:
    def __init__(self, buf: bytes, offset: int):
        self.buf, self.off = buf, offset

    def u32(self) -> int:
        if self.off + 4 > len(self.buf):
            raise CodecError("truncated encoding")
        (v,) = _U32.unpack_from(self.buf, self.off)
        self.off += 4
        return v

    def array(self, dtype: str, n: int | None = None) -> np.ndarray:
        if n is None:
            n = self.u32()
        size = np.dtype(dtype).itemsize * n
        if self.off + size > len(self.buf):
            raise CodecError("truncated encoding")
        out = np.frombuffer(self.buf, dtype=dtype, count=n, offset=self.off)
        self.off += size
        return out


def hier_cp_to_bytes(e: HierCpTensor) -> bytes:
    parts = [_HEAD.pack(_HC_MAGIC, _VER, e.rows, e.cols, e.levels)]
    for g, h in e.rules:
        parts.append(struct.pack("<II", g, h))
    for row in e.row_data:
        _put(parts, row.payload, "<f4")
        for cps in row.cps:
            _put(parts, cps, "<u2")
        for counts in row.counts:
            _put(parts, counts, "<u2")
    return b"".join(parts)


def _header(buf: bytes):
    if len(buf) < _HEAD.size:
        raise CodecError("truncated encoding")
    return _HEAD.unpack_from(buf)


def _check_end(r: "_Reader"):
    if r.off != len(r.buf):
        raise CodecError("trailing bytes after encoding")


def hier_cp_from_bytes(buf: bytes) -> HierCpTensor:
    magic, ver, rows, cols, levels = _header(buf)
    if magic != _HC_MAGIC or ver != _VER:
        raise CodecError("not a hierarchical CP encoding")
    r = _Reader(buf, _HEAD.size)
    rules = tuple((r.u32(), r.u32()) for _ in range(levels))
    out = []
    for _ in range(rows):
        payload = r.array("<f4").astype(np.float64)
        cps = [r.array("<u2").astype(np.int64) for _ in range(levels)]
        counts = [r.array("<u2").astype(np.int64) for _ in range(levels)]
        out.append(HierCpRow(payload, cps, counts))
    _check_end(r)
    return HierCpTensor(rows, cols, rules, out)


def blocked_csr_to_bytes(e: BlockedCsrTensor) -> bytes:
    parts = [_HEAD.pack(_BC_MAGIC, _VER, e.rows, e.cols, e.block)]
    for row in e.row_data:
        parts.append(_U32.pack(row.nz_values.size))
        parts.append(row.nz_values.astype("<f4").tobytes())
        parts.append(row.nz_offsets.astype("<u2").tobytes())
        parts.append(row.block_ptr.astype("<u4").tobytes())
    return b"".join(parts)


def blocked_csr_from_bytes(buf: bytes) -> BlockedCsrTensor:
    magic, ver, rows, cols, block = _header(buf)
    if magic != _BC_MAGIC or ver != _VER:
        raise CodecError("not a blocked CSR encoding")
    if block < 1:
        raise CodecError("block size must be positive")
    e = BlockedCsrTensor(rows, cols, block)
    r = _Reader(buf, _HEAD.size)
    for _ in range(rows):
        n = r.u32()
        vals = r.array("<f4", n).astype(np.float64)
        offs = r.array("<u2", n).astype(np.int64)
        ptr = r.array("<u4", e.blocks_per_row + 1).astype(np.int64)
        e.row_data.append(BlockedCsrRow(vals, offs, ptr))
    _check_end(r)
    return e


def save_encoding(path, e: HierCpTensor | BlockedCsrTensor) -> None:
    data = hier_cp_to_bytes(e) if isinstance(e, HierCpTensor) else blocked_csr_to_bytes(e)
    Path(path).write_bytes(data)


def load_encoding(path) -> HierCpTensor | BlockedCsrTensor:
    buf = Path(path).read_bytes()
    if buf[:4] == _HC_MAGIC:
        return hier_cp_from_bytes(buf)
    if buf[:4] == _BC_MAGIC:
        return blocked_csr_from_bytes(buf)
    raise CodecError(f"{path}: unknown encoding")
