"""Sparsity pattern descriptions.

A pattern lists the ranks of a (flattened/partitioned) tensor dimension from
highest to lowest, each carrying an optional pruning rule::

    RS->C1(2:8)->C0(2:4)

Ranks without a parenthesised rule are dense. ``G:H`` allows at most G
occupied coordinates in each fiber of H coordinates; ``unconstrained`` allows
any coordinate to be pruned.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, NamedTuple, Sequence

DENSE = "dense"
UNCONSTRAINED = "unconstrained"
GH = "gh"


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class RankRule:
    kind: str = DENSE
    g: int | None = None
    h: int | None = None

    def __post_init__(self):
        if self.kind not in (DENSE, UNCONSTRAINED, GH):
            raise PatternError(f"unknown rule kind {self.kind!r}")
        if self.kind == GH:
            if self.g is None or self.h is None:
                raise PatternError("G:H rule needs both g and h")
            if self.g <= 0 or self.h <= 0:
                raise PatternError(f"G and H must be positive, got {self.g}:{self.h}")
            if self.g > self.h:
                raise PatternError(f"G must not exceed H, got {self.g}:{self.h}")

    @classmethod
    def gh(cls, g: int, h: int) -> "RankRule":
        return cls(GH, g, h)

    @property
    def is_gh(self) -> bool:
        return self.kind == GH

    @property
    def ratio(self) -> Fraction:
        if self.kind == GH:
            return Fraction(self.g, self.h)
        if self.kind == DENSE:
            return Fraction(1)
        raise PatternError("unconstrained rank has data-dependent density")

    def render(self) -> str:
        if self.kind == GH:
            return f"{self.g}:{self.h}"
        return self.kind


@dataclass(frozen=True)
class Rank:
    name: str
    rule: RankRule = RankRule()


@dataclass(frozen=True)
class PatternSpec:
    ranks: tuple[Rank, ...]

    def __post_init__(self):
        if not self.ranks:
            raise PatternError("pattern needs at least one rank")
        names = [r.name for r in self.ranks]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise PatternError(f"duplicate rank names: {sorted(dup)}")

    @property
    def gh_ranks(self) -> tuple[Rank, ...]:
        """G:H ranks, highest first."""
        return tuple(r for r in self.ranks if r.rule.is_gh)

    @property
    def n_gh(self) -> int:
        return len(self.gh_ranks)

    @property
    def is_dense(self) -> bool:
        return all(r.rule.kind == DENSE for r in self.ranks)

    @property
    def has_unconstrained(self) -> bool:
        return any(r.rule.kind == UNCONSTRAINED for r in self.ranks)

    def gh_params(self) -> list[tuple[int, int]]:
        """(g, h) per G:H rank, lowest rank first."""
        return [(r.rule.g, r.rule.h) for r in reversed(self.gh_ranks)]

    def block_size(self) -> int:
        return math.prod(h for _, h in self.gh_params())

    def __str__(self) -> str:
        return render_pattern(self)


_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_RANK_RE = re.compile(rf"^\s*({_NAME})\s*(?:\(\s*([^()]*?)\s*\))?\s*$")
_GH_RE = re.compile(r"^(-?\d+)\s*:\s*(-?\d+)$")


def _parse_rule(text: str) -> RankRule:
    low = text.lower()
    if low == DENSE:
        return RankRule(DENSE)
    if low == UNCONSTRAINED:
        return RankRule(UNCONSTRAINED)
    m = _GH_RE.match(text)
    if not m:
        raise PatternError(f"cannot parse rule {text!r}")
    return RankRule.gh(int(m.group(1)), int(m.group(2)))


def parse_pattern(text: str) -> PatternSpec:
    """Parse ``rank ("->" rank)*`` into a PatternSpec (highest rank first)."""
    if not text or not text.strip():
        raise PatternError("empty pattern")
    ranks = []
    for part in text.replace("→", "->").split("->"):
        m = _RANK_RE.match(part)
        if not m:
            raise PatternError(f"syntax error in rank {part.strip()!r} of {text!r}")
        name, rule = m.group(1), m.group(2)
        ranks.append(Rank(name, _parse_rule(rule) if rule is not None else RankRule()))
    return PatternSpec(tuple(ranks))


def render_pattern(spec: PatternSpec) -> str:
    parts = []
    for r in spec.ranks:
        if r.rule.kind == DENSE:
            parts.append(r.name)
        else:
            parts.append(f"{r.name}({r.rule.render()})")
    return "->".join(parts)


def as_pattern(p: PatternSpec | str) -> PatternSpec:
    return p if isinstance(p, PatternSpec) else parse_pattern(p)


def density(spec: PatternSpec | str) -> Fraction:
    """Exact density: product of G/H over the G:H ranks."""
    spec = as_pattern(spec)
    if spec.has_unconstrained:
        raise PatternError("density of an unconstrained rank depends on the data")
    return math.prod((r.rule.ratio for r in spec.ranks), start=Fraction(1))


def sparsity(spec: PatternSpec | str) -> Fraction:
    return 1 - density(spec)


@dataclass(frozen=True)
class DegreeSet:
    degrees: tuple[Fraction, ...]

    def __post_init__(self):
        for d in self.degrees:
            if not 0 < d <= 1:
                raise PatternError(f"density {d} outside (0, 1]")

    def __len__(self):
        return len(self.degrees)

    def __iter__(self):
        return iter(self.degrees)

    def __contains__(self, item):
        return Fraction(item) in self.degrees

    @property
    def min(self) -> Fraction:
        return self.degrees[0]

    @property
    def max(self) -> Fraction:
        return self.degrees[-1]

    def sparsities(self) -> list[Fraction]:
        return [1 - d for d in self.degrees]


def enumerate_degrees(per_rank_ratio_sets: Sequence[Iterable]) -> DegreeSet:
    """All distinct products choosing one density from each per-rank set."""
    sets = [sorted({Fraction(r) for r in s}) for s in per_rank_ratio_sets]
    if not sets:
        raise PatternError("need at least one per-rank ratio set")
    for s in sets:
        if not s:
            raise PatternError("per-rank ratio sets must be nonempty")
    degrees = {math.prod(combo, start=Fraction(1)) for combo in product(*sets)}
    return DegreeSet(tuple(sorted(degrees)))


def ratio_set(g: int, h_values: Iterable[int]) -> set[Fraction]:
    return {Fraction(g, h) for h in h_values}


class MuxTax(NamedTuple):
    mux_count: int
    two_to_one_equivalents: int


def mux_tax(g: int, h_max: int) -> MuxTax:
    """G muxes of H_max-to-1, each built from H_max - 1 two-to-one muxes."""
    if g < 1 or h_max < 1:
        raise PatternError(f"mux_tax needs g >= 1 and h_max >= 1, got ({g}, {h_max})")
    return MuxTax(g, g * (h_max - 1))


def design_mux_tax(ranks: Iterable[tuple[int, int]]) -> int:
    """Total 2-to-1 equivalents for a design with one (g, h_max) per skipping rank."""
    return sum(mux_tax(g, h).two_to_one_equivalents for g, h in ranks)


def validate_against_arch(spec: PatternSpec | str, arch) -> bool:
    """Whether the accelerator can skip on every G:H rank of ``spec``.

    The lowest G:H rank maps onto the per-PE (Rank0) skipping level and the
    next one onto the PE-array (Rank1) level; ``arch`` needs ``rank0_g``,
    ``rank1_g``, ``h0_max`` and ``h1_max``.
    """
    spec = as_pattern(spec)
    if spec.has_unconstrained:
        return False
    params = spec.gh_params()
    if len(params) > 2:
        return False
    limits = [(arch.rank0_g, arch.h0_max), (arch.rank1_g, arch.h1_max)]
    for (g, h), (g_hw, h_max) in zip(params, limits):
        if g != g_hw or not 2 <= h <= h_max:
            return False
    return True
