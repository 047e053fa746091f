"""Masked tensors, rank views and HSS sparsification.

Patterns are applied along the column (K) dimension of an ``M x K`` matrix.
The G:H ranks partition K in mixed radix. The lowest G:H rank gets fibers of
``h0`` positions and the next one groups ``h1`` of those; any remainder forms
the dense top rank.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .pattern import PatternError, PatternSpec, as_pattern

EXACT = "exact"
AT_MOST = "at_most"
_MODES = (EXACT, AT_MOST)


@dataclass
class MaskedTensor:
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.mask.shape:
            raise ValueError(
                f"values {self.values.shape} and mask {self.mask.shape} must be equal 2-D shapes"
            )

    @classmethod
    def from_dense(cls, values, mask=None) -> "MaskedTensor":
        values = np.asarray(values, dtype=np.float64)
        if values.ndim == 1:
            values = values[None, :]
        if mask is None:
            mask = values != 0
        return cls(values, np.asarray(mask, dtype=bool).reshape(values.shape))

    @classmethod
    def dense(cls, values) -> "MaskedTensor":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.ones(values.shape, dtype=bool))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "MaskedTensor":
        return cls(np.zeros((rows, cols)), np.zeros((rows, cols), dtype=bool))

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def effective(self) -> np.ndarray:
        return np.where(self.mask, self.values, 0.0)

    def nonzero_mask(self) -> np.ndarray:
        """Positions that are unmasked and hold a nonzero value."""
        return self.mask & (self.values != 0)

    def nnz(self) -> int:
        return int(self.mask.sum())

    def density(self) -> Fraction:
        size = self.values.size
        return Fraction(self.nnz(), size) if size else Fraction(0)

    def canonical(self) -> "MaskedTensor":
        return MaskedTensor(self.effective(), self.mask.copy())

    def transpose(self) -> "MaskedTensor":
        return MaskedTensor(self.values.T.copy(), self.mask.T.copy())

    def same_as(self, other: "MaskedTensor") -> bool:
        """Equality of mask and effective values."""
        return (
            self.shape == other.shape
            and np.array_equal(self.mask, other.mask)
            and np.array_equal(self.effective(), other.effective())
        )


@dataclass(frozen=True)
class RankView:
    rank_shapes: tuple[int, ...]
    """Fiber shapes highest first; the first entry is the dense residual."""
    rules: tuple[tuple[int, int], ...]
    """(g, h) per G:H rank, lowest first."""
    cols: int
    padded_cols: int

    @property
    def total(self) -> int:
        return math.prod(self.rank_shapes)

    def coords(self, flat_index: int) -> tuple[int, ...]:
        out = []
        for shape in reversed(self.rank_shapes):
            out.append(flat_index % shape)
            flat_index //= shape
        return tuple(reversed(out))


def build_rank_view(cols: int, spec: PatternSpec | str, pad: bool = False) -> RankView:
    spec = as_pattern(spec)
    if spec.has_unconstrained:
        raise PatternError("unconstrained ranks have no fixed fiber shape")
    rules = tuple(spec.gh_params())
    block = math.prod(h for _, h in rules)
    if cols % block:
        if not pad:
            raise PatternError(f"K={cols} is not divisible by the pattern block size {block}")
        padded = -(-cols // block) * block
    else:
        padded = cols
    shapes = (padded // block,) + tuple(h for _, h in reversed(rules))
    return RankView(shapes, rules, cols, padded)


def _check_mode(mode: str):
    if mode not in _MODES:
        raise ValueError(f"occupancy mode must be one of {_MODES}, got {mode!r}")


def _pad(arr: np.ndarray, width: int, fill) -> np.ndarray:
    if arr.shape[1] == width:
        return arr
    out = np.full((arr.shape[0], width), fill, dtype=arr.dtype)
    out[:, : arr.shape[1]] = arr
    return out


def _top_g(primary: np.ndarray, secondary: np.ndarray, g: int) -> np.ndarray:
    """Boolean mask of the g best entries along the last axis.

    Ranking is by ``primary`` then ``secondary`` (both descending), with the
    lower index winning any remaining tie.
    """
    order = np.lexsort((-secondary, -primary), axis=-1)
    keep = np.zeros(primary.shape, dtype=bool)
    np.put_along_axis(keep, order[..., :g], True, axis=-1)
    return keep


def sparsify(t: MaskedTensor, spec: PatternSpec | str, occupancy_mode: str = EXACT,
             pad: bool = False) -> MaskedTensor:
    """Prune ``t`` rank by rank, lowest G:H rank first.

    The lowest rank keeps the g largest magnitudes of each block. Each higher
    rank scores a coordinate by the mean magnitude over its payload (pruned
    positions count as zero) and keeps the g best coordinates per fiber.
    Ties prefer positions already unmasked in ``t``, then the lower index.
    """
    _check_mode(occupancy_mode)
    spec = as_pattern(spec)
    view = build_rank_view(t.cols, spec, pad)
    rows, width = t.rows, view.padded_cols
    eff = t.effective()
    mag = _pad(np.abs(eff), width, -1.0)  # pads rank below any real value
    prev = _pad(t.mask, width, False).astype(np.int64)
    keep = np.ones((rows, width), dtype=bool)

    payload = 1
    for level, (g, h) in enumerate(view.rules):
        if level == 0:
            blocks = mag.reshape(rows, -1, h)
            sel = _top_g(blocks, prev.reshape(rows, -1, h), g)
            if occupancy_mode == AT_MOST:
                sel &= blocks > 0
            keep = sel.reshape(rows, width)
        else:
            live = np.where(keep, np.maximum(mag, 0.0), 0.0).reshape(rows, -1, h, payload)
            score = live.sum(axis=-1) / payload
            all_pad = (mag.reshape(rows, -1, h, payload) < 0).all(axis=-1)
            score = np.where(all_pad, -1.0, score)
            prior = (prev.reshape(rows, -1, h, payload) * keep.reshape(rows, -1, h, payload)).sum(axis=-1)
            sel = _top_g(score, prior, g)
            if occupancy_mode == AT_MOST:
                sel &= score > 0
            keep = (keep.reshape(rows, -1, h, payload) & sel[..., None]).reshape(rows, width)
        payload *= h

    keep = keep[:, : t.cols]
    return MaskedTensor(eff, keep)


def _occupancy_by_level(mask: np.ndarray, view: RankView) -> list[np.ndarray]:
    """Per G:H level (lowest first): occupied-coordinate count of every fiber."""
    rows = mask.shape[0]
    occupied = mask
    out = []
    for g, h in view.rules:
        fibers = occupied.reshape(rows, -1, h)
        out.append(fibers.sum(axis=-1))
        occupied = fibers.any(axis=-1)
    return out


def conforms(t: MaskedTensor, spec: PatternSpec | str, occupancy_mode: str = AT_MOST,
             pad: bool = False) -> bool:
    """Check every G:H fiber's occupancy against its rule.

    ``at_most``: occupancy <= g everywhere. ``exact``: fibers at the highest
    G:H rank hold exactly g occupied coordinates and every other fiber holds
    either 0 (its parent coordinate is pruned) or g.
    """
    _check_mode(occupancy_mode)
    spec = as_pattern(spec)
    view = build_rank_view(t.cols, spec, pad)
    if not view.rules:
        return True if occupancy_mode == AT_MOST else bool(t.mask.all())
    mask = _pad(t.mask, view.padded_cols, False)
    levels = _occupancy_by_level(mask, view)
    top = len(levels) - 1
    for level, ((g, _), occ) in enumerate(zip(view.rules, levels)):
        if occupancy_mode == AT_MOST:
            if (occ > g).any():
                return False
        elif level == top:
            if (occ != g).any():
                return False
        elif ((occ != 0) & (occ != g)).any():
            return False
    return True


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def draw_values(rng: np.random.Generator, shape, value_dist: str = "normal") -> np.ndarray:
    """Nonzero random values: ``normal``, ``uniform`` (|v| in [0.5, 1.5)) or ``int`` (+-1..9)."""
    if value_dist == "normal":
        v = rng.standard_normal(shape)
        return np.where(v == 0, 1.0, v)
    sign = rng.choice(np.array([-1.0, 1.0]), size=shape)
    if value_dist == "uniform":
        return sign * rng.uniform(0.5, 1.5, size=shape)
    if value_dist == "int":
        return sign * rng.integers(1, 10, size=shape)
    raise ValueError(f"unknown value distribution {value_dist!r}")


def random_conformant(rows: int, cols: int, spec: PatternSpec | str, seed=0,
                      value_dist: str = "normal") -> MaskedTensor:
    """Random tensor with exactly g occupied coordinates per fiber at every G:H rank."""
    spec = as_pattern(spec)
    view = build_rank_view(cols, spec)
    rng = _rng(seed)
    mask = np.ones((rows, cols), dtype=bool)
    payload = 1
    for g, h in view.rules:
        noise = rng.random((rows, cols // (h * payload), h))
        sel = _top_g(noise, np.zeros_like(noise), g)
        mask &= np.repeat(sel.reshape(rows, -1), payload, axis=1)
        payload *= h
    values = np.where(mask, draw_values(rng, (rows, cols), value_dist), 0.0)
    return MaskedTensor(values, mask)


def random_unstructured(rows: int, cols: int, target_density, seed=0,
                        value_dist: str = "normal") -> MaskedTensor:
    """Exactly ``round(target_density * rows * cols)`` unmasked positions, uniformly placed."""
    d = Fraction(str(target_density)) if isinstance(target_density, float) else Fraction(target_density)
    if not 0 <= d <= 1:
        raise ValueError(f"target density {target_density} outside [0, 1]")
    rng = _rng(seed)
    size = rows * cols
    count = math.floor(d * size + Fraction(1, 2))
    flat = np.zeros(size, dtype=bool)
    flat[rng.permutation(size)[:count]] = True
    mask = flat.reshape(rows, cols)
    values = np.where(mask, draw_values(rng, (rows, cols), value_dist), 0.0)
    return MaskedTensor(values, mask)


# Binary container, little endian:
#   magic b"HSST" | u16 version | u32 rows | u32 cols
#   f32[rows*cols] values (row-major) | mask bits, np.packbits bitorder="little"
_MAGIC = b"HSST"
_VERSION = 1
_HEADER = struct.Struct("<4sHII")


def tensor_to_bytes(t: MaskedTensor) -> bytes:
    head = _HEADER.pack(_MAGIC, _VERSION, t.rows, t.cols)
    vals = t.values.astype("<f4").tobytes()
    bits = np.packbits(t.mask.ravel(), bitorder="little").tobytes()
    return head + vals + bits


def tensor_from_bytes(buf: bytes) -> MaskedTensor:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated tensor container")
    magic, version, rows, cols = _HEADER.unpack_from(buf)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not an HSS tensor container")
    n = rows * cols
    off = _HEADER.size
    nbits = (n + 7) // 8
    if len(buf) != off + 4 * n + nbits:
        raise ValueError("tensor container size does not match its header")
    values = np.frombuffer(buf, dtype="<f4", count=n, offset=off).astype(np.float64)
    mask = np.unpackbits(np.frombuffer(buf, dtype=np.uint8, count=nbits, offset=off + 4 * n),
                         count=n, bitorder="little").astype(bool)
    return MaskedTensor(values.reshape(rows, cols), mask.reshape(rows, cols))


def tensor_to_json(t: MaskedTensor) -> dict:
    return {"rows": t.rows, "cols": t.cols,
            "values": t.values.ravel().tolist(),
            "mask": [int(b) for b in t.mask.ravel()]}


def tensor_from_json(obj: dict) -> MaskedTensor:
    rows, cols = int(obj["rows"]), int(obj["cols"])
    values = np.asarray(obj["values"], dtype=np.float64).reshape(rows, cols)
    mask = np.asarray(obj["mask"], dtype=bool).reshape(rows, cols)
    return MaskedTensor(values, mask)


def save_tensor(path, t: MaskedTensor) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(tensor_to_json(t)))
    else:
        path.write_bytes(tensor_to_bytes(t))


def load_tensor(path) -> MaskedTensor:
    path = Path(path)
    if path.suffix == ".json":
        return tensor_from_json(json.loads(path.read_text()))
    return tensor_from_bytes(path.read_bytes())
