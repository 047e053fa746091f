"""Hierarchical structured sparsity toolkit and accelerator cost models."""

from .baselines import (
    BaselineKind,
    best_of_swap,
    simulate_dstc,
    simulate_s2ta,
    simulate_stc,
    simulate_tc,
)
from .codec import (
    decode_blocked_csr,
    decode_hier_cp,
    encode_blocked_csr,
    encode_hier_cp,
    metadata_bits,
)
from .cost import CostTable, EnergyBreakdown, ed2, edp, energy_of, geomean
from .highlight import (
    ActivityCounts,
    ArchConfig,
    SimReport,
    UnsupportedWorkload,
    simulate,
    simulate_dsso,
    theoretical_speedup,
    vfmu_schedule,
)
from .pattern import (
    PatternSpec,
    density,
    enumerate_degrees,
    mux_tax,
    parse_pattern,
    validate_against_arch,
)
from .tensor import MaskedTensor, conforms, sparsify
from .workloads import (
    MMWorkload,
    conv_to_mm,
    gen_dual_structured,
    gen_synthetic,
    reference_matmul,
    synthetic_grid,
)

__version__ = "0.1.0"
