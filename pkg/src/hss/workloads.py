"""Matrix-multiplication workloads: synthetic generators and conv lowering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .pattern import DENSE, PatternSpec, Rank, RankRule, as_pattern, density
from .tensor import MaskedTensor, random_conformant, random_unstructured

DEFAULT_A_PATTERNS = ("C", "C0(2:4)", "C1(2:4)->C0(2:4)")
DEFAULT_B_DENSITIES = (Fraction(1), Fraction(3, 4), Fraction(1, 2), Fraction(1, 4))


@dataclass
class MMWorkload:
    """C[M,N] = A[M,K] @ B[K,N].

    ``a_spec`` is None when A is unstructured (``a_density`` then records its
    target density). ``b_spec`` is set only for structured B operands, and
    describes B's K dimension (columns of B read top to bottom).
    """

    a: MaskedTensor
    b: MaskedTensor
    a_spec: PatternSpec | None
    b_density: Fraction
    id: str = "workload"
    b_spec: PatternSpec | None = None
    a_density: Fraction | None = None

    def __post_init__(self):
        if self.a.cols != self.b.rows:
            raise ValueError(f"inner dimensions disagree: A is {self.a.shape}, B is {self.b.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.a.rows, self.a.cols, self.b.cols

    @property
    def a_tag(self) -> str:
        if self.a_spec is not None:
            return str(self.a_spec)
        return f"unstructured({self.a_density})"

    def swapped(self) -> "MMWorkload":
        """Operand-swapped workload computing C^T = B^T A^T."""
        return MMWorkload(
            a=self.b.transpose(), b=self.a.transpose(),
            a_spec=self.b_spec if self.b_spec is not None else (
                as_pattern("C") if self.b.mask.all() else None),
            b_density=self.a.density(),
            id=self.id + "|swap",
            b_spec=self.a_spec,
            a_density=self.b_density,
        )


def _seeds(seed) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    a, b = np.random.SeedSequence(seed).spawn(2)
    return a, b


def workload_id(a_tag: str, b_density, dims, seed) -> str:
    m, k, n = dims
    return f"A={a_tag}|B={Fraction(b_density)}|{m}x{k}x{n}|s{seed}"


def gen_synthetic(m: int, k: int, n: int, a_pattern: PatternSpec | str, b_density,
                  seed=0, value_dist: str = "int") -> MMWorkload:
    """A conformant to ``a_pattern`` (exact occupancy), B unstructured at ``b_density``."""
    spec = as_pattern(a_pattern)
    b_density = Fraction(str(b_density)) if isinstance(b_density, float) else Fraction(b_density)
    sa, sb = _seeds(seed)
    a = random_conformant(m, k, spec, sa, value_dist)
    b = random_unstructured(k, n, b_density, sb, value_dist)
    return MMWorkload(a, b, spec, b_density, workload_id(str(spec), b_density, (m, k, n), seed))


def gen_unstructured(m: int, k: int, n: int, a_density, b_density, seed=0,
                     value_dist: str = "int") -> MMWorkload:
    a_density, b_density = Fraction(str(a_density)), Fraction(str(b_density))
    sa, sb = _seeds(seed)
    a = random_unstructured(m, k, a_density, sa, value_dist)
    b = random_unstructured(k, n, b_density, sb, value_dist)
    return MMWorkload(a, b, None, b_density,
                      workload_id(f"unstructured({a_density})", b_density, (m, k, n), seed),
                      a_density=a_density)


def gen_dual_structured(m: int, k: int, n: int, a_pattern: PatternSpec | str,
                        b_pattern: PatternSpec | str, seed=0, value_dist: str = "int") -> MMWorkload:
    """Both operands structured along K; B's pattern applies to each column of B."""
    a_spec, b_spec = as_pattern(a_pattern), as_pattern(b_pattern)
    sa, sb = _seeds(seed)
    a = random_conformant(m, k, a_spec, sa, value_dist)
    b = random_conformant(n, k, block_shaped(b_spec, a_spec), sb, value_dist).transpose()
    wid = f"A={a_spec}|B={b_spec}|{m}x{k}x{n}|s{seed}"
    return MMWorkload(a, b, a_spec, density(b_spec), wid, b_spec=b_spec)


def block_shaped(b_spec: PatternSpec, a_spec: PatternSpec) -> PatternSpec:
    """Give a dense lowest rank of ``b_spec`` the block width of A's lowest G:H rank.

    ``C1(2:4)->C0`` against A = ``C0(2:4)`` becomes ``C1(2:4)->C0(4:4)``, so B's
    upper rank selects whole blocks of the width A's Rank0 skipping works on.
    """
    low = b_spec.ranks[-1]
    a_params = a_spec.gh_params()
    if low.rule.kind != DENSE or not b_spec.gh_ranks or not a_params:
        return b_spec
    h0 = a_params[0][1]
    return PatternSpec(b_spec.ranks[:-1] + (Rank(low.name, RankRule.gh(h0, h0)),))


def synthetic_grid(m: int = 1024, k: int = 1024, n: int = 1024, seed=0,
                   a_patterns=DEFAULT_A_PATTERNS, b_densities=DEFAULT_B_DENSITIES,
                   value_dist: str = "int") -> list[MMWorkload]:
    """The 3 x 4 synthetic sweep: A at 0/50/75 % sparsity, B at 0/25/50/75 %."""
    return [gen_synthetic(m, k, n, p, d, seed, value_dist)
            for p in a_patterns for d in b_densities]


@dataclass(frozen=True)
class ConvShape:
    M: int
    C: int
    R: int
    S: int
    H_in: int
    W_in: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("M", "C", "R", "S", "H_in", "W_in", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")
        for size, kern in ((self.H_in, self.R), (self.W_in, self.S)):
            span = size + 2 * self.padding - kern
            if span < 0 or span % self.stride:
                raise ValueError(f"kernel {kern} with stride {self.stride} does not tile input {size}")

    @property
    def P(self) -> int:
        return (self.H_in + 2 * self.padding - self.R) // self.stride + 1

    @property
    def Q(self) -> int:
        return (self.W_in + 2 * self.padding - self.S) // self.stride + 1


def toeplitz_expand(shape: ConvShape, inputs: np.ndarray) -> np.ndarray:
    """(C*R*S) x (P*Q) matrix whose column p*Q+q is the input window of output (p, q)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape != (shape.C, shape.H_in, shape.W_in):
        raise ValueError(f"input shape {inputs.shape} does not match {shape}")
    pad = shape.padding
    x = np.pad(inputs, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (shape.R, shape.S), axis=(1, 2))
    win = win[:, :: shape.stride, :: shape.stride]  # C, P, Q, R, S
    return win.transpose(0, 3, 4, 1, 2).reshape(shape.C * shape.R * shape.S, shape.P * shape.Q)


def conv_to_mm(shape: ConvShape, weights: np.ndarray, inputs: np.ndarray,
               wid: str = "conv") -> MMWorkload:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (shape.M, shape.C, shape.R, shape.S):
        raise ValueError(f"weight shape {weights.shape} does not match {shape}")
    a = MaskedTensor.dense(weights.reshape(shape.M, -1))
    b = MaskedTensor.from_dense(toeplitz_expand(shape, inputs))
    return MMWorkload(a, b, as_pattern("C"), b.density(), wid)


def reference_matmul(a: MaskedTensor, b: MaskedTensor) -> np.ndarray:
    if a.cols != b.rows:
        raise ValueError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    return a.effective() @ b.effective()


def conv_output(shape: ConvShape, product: np.ndarray) -> np.ndarray:
    return np.asarray(product).reshape(shape.M, shape.P, shape.Q)


# Manifest: {"id", "m", "k", "n", "a_pattern" | "a_density", "b_density" | "b_pattern",
#            "seed", "value_dist"}
def workload_from_manifest(obj: dict) -> MMWorkload:
    m, k, n = int(obj["m"]), int(obj["k"]), int(obj["n"])
    seed = obj.get("seed", 0)
    dist = obj.get("value_dist", "int")
    if "b_pattern" in obj:
        w = gen_dual_structured(m, k, n, obj["a_pattern"], obj["b_pattern"], seed, dist)
    elif "a_pattern" in obj:
        w = gen_synthetic(m, k, n, obj["a_pattern"], Fraction(str(obj.get("b_density", 1))), seed, dist)
    else:
        w = gen_unstructured(m, k, n, obj["a_density"], obj.get("b_density", 1), seed, dist)
    if "id" in obj:
        w.id = str(obj["id"])
    return w


def workload_manifest(w: MMWorkload, seed=0, value_dist: str = "int") -> dict:
    m, k, n = w.dims
    out = {"id": w.id, "m": m, "k": k, "n": n, "seed": seed, "value_dist": value_dist}
    if w.a_spec is not None:
        out["a_pattern"] = str(w.a_spec)
    else:
        out["a_density"] = str(w.a_density)
    if w.b_spec is not None:
        out["b_pattern"] = str(w.b_spec)
    else:
        out["b_density"] = str(w.b_density)
    return out


def load_workload(path) -> MMWorkload:
    return workload_from_manifest(json.loads(Path(path).read_text()))

