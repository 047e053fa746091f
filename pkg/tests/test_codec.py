import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hss.codec import (
    BlockedCsrRow,
    CodecError,
    blocked_csr_from_bytes,
    blocked_csr_to_bytes,
    decode_blocked_csr,
    decode_hier_cp,
    encode_blocked_csr,
    encode_hier_cp,
    hier_cp_from_bytes,
    hier_cp_to_bytes,
    load_encoding,
    metadata_bits,
    save_encoding,
)
from hss.tensor import MaskedTensor, random_conformant, random_unstructured

SPEC = "C1(2:4)->C0(2:4)"
A, C, J, K = 1.5, -2.0, 3.25, 7.0


def example_row() -> MaskedTensor:
    row = np.zeros((1, 16))
    row[0, [0, 2, 9, 11]] = [A, C, J, K]
    return MaskedTensor.from_dense(row)


def test_example_encoding():
    e = encode_hier_cp(example_row(), SPEC)
    assert e.payload(0).tolist() == [A, C, J, K]
    assert e.rank0_cp(0).tolist() == [0, 2, 1, 3]
    assert e.rank1_cp(0).tolist() == [0, 2]
    assert e.group_dir(0).tolist() == [2]
    assert metadata_bits(e) == 4 * 2 + 2 * 2 + 1 * 2
    assert decode_hier_cp(e).same_as(example_row())
    assert decode_hier_cp(hier_cp_from_bytes(hier_cp_to_bytes(e))).same_as(example_row())


def test_empty_and_full_rows():
    e = encode_hier_cp(MaskedTensor.zeros(1, 32), SPEC)
    assert e.payload(0).size == 0
    assert e.group_dir(0).tolist() == [0, 0]
    assert metadata_bits(e) == 2 * 2  # group directory only
    assert not decode_hier_cp(e).mask.any()
    full = encode_hier_cp(MaskedTensor.dense(np.ones((1, 4))), "C1(2:2)->C0(2:2)")
    assert full.rank0_cp(0).tolist() == [0, 1, 0, 1]
    one = encode_hier_cp(MaskedTensor.dense(np.ones((1, 4))), "C0(4:4)")
    assert one.rank0_cp(0).tolist() == [0, 1, 2, 3]


def test_non_conformant_rejected():
    with pytest.raises(CodecError):
        encode_hier_cp(MaskedTensor.dense(np.ones((1, 16))), SPEC)
    with pytest.raises(CodecError):
        encode_hier_cp(MaskedTensor.dense(np.ones((1, 4))), "C")


def test_malformed_hier_metadata():
    e = encode_hier_cp(example_row(), SPEC)
    e.row_data[0].cps[1] = np.array([2, 0])
    with pytest.raises(CodecError):
        decode_hier_cp(e)
    e = encode_hier_cp(example_row(), SPEC)
    e.row_data[0].counts[-1] = np.array([3])
    with pytest.raises(CodecError):
        decode_hier_cp(e)
    e = encode_hier_cp(example_row(), SPEC)
    e.row_data[0].cps[0] = np.array([0, 4, 1, 3])
    with pytest.raises(CodecError):
        decode_hier_cp(e)
    e = encode_hier_cp(example_row(), SPEC)
    e.row_data[0].payload = np.array([1.0])
    with pytest.raises(CodecError):
        decode_hier_cp(e)


def oracle_hier_bits(mask: np.ndarray, g1: int, h1: int, h0: int) -> int:
    """Direct count: every value, every nonempty block, every group."""
    bits = 0
    for row in mask:
        blocks = row.reshape(-1, h1, h0)
        bits += int(row.sum()) * math.ceil(math.log2(h0))
        bits += int(blocks.any(axis=2).sum()) * math.ceil(math.log2(h1))
        bits += blocks.shape[0] * math.ceil(math.log2(g1 + 1))
    return bits


@given(st.integers(2, 8), st.integers(2, 4), st.integers(1, 3), st.integers(1, 4),
       st.integers(0, 2**31 - 1))
def test_hier_roundtrip_and_bits(h1, h0, groups, rows, seed):
    spec = f"C1(2:{h1})->C0(2:{h0})"
    t = random_conformant(rows, h1 * h0 * groups, spec, seed, "int")  # f32-exact values
    e = encode_hier_cp(t, spec)
    assert decode_hier_cp(e).same_as(t)
    assert decode_hier_cp(hier_cp_from_bytes(hier_cp_to_bytes(e))).same_as(t)
    for i in range(rows):
        assert e.payload(i).size == t.mask[i].sum()
    # exact occupancy: no lower-level count arrays need storing
    assert metadata_bits(e) == oracle_hier_bits(t.mask, 2, h1, h0)
    # the footprint depends only on the mask
    t2 = MaskedTensor(np.where(t.mask, t.values * 3 + 1, 0.0), t.mask)
    assert metadata_bits(encode_hier_cp(t2, spec)) == metadata_bits(e)


@given(st.integers(1, 6), st.integers(1, 5), st.integers(1, 5), st.fractions(0, 1),
       st.integers(0, 2**31 - 1))
def test_blocked_csr_roundtrip(block, n_blocks, rows, d, seed):
    t = random_unstructured(rows, block * n_blocks, d, seed, "int")
    e = encode_blocked_csr(t, block)
    assert decode_blocked_csr(e).same_as(t)
    assert decode_blocked_csr(blocked_csr_from_bytes(blocked_csr_to_bytes(e))).same_as(t)
    for i, row in enumerate(e.row_data):
        for b in range(n_blocks):
            lo, hi = row.block_ptr[b], row.block_ptr[b + 1]
            seg = t.mask[i, b * block:(b + 1) * block]
            assert hi - lo == seg.sum()
            assert (row.nz_offsets[lo:hi] == np.flatnonzero(seg)).all()


def test_blocked_csr_examples():
    t = MaskedTensor.from_dense(np.array([[0, 7, 0, 0, 0, 0, 0, 5]], float))
    e = encode_blocked_csr(t, 4)
    r = e.row_data[0]
    assert r.nz_values.tolist() == [7, 5]
    assert r.nz_offsets.tolist() == [1, 3]
    assert r.block_ptr.tolist() == [0, 1, 2]
    dense = encode_blocked_csr(MaskedTensor.dense(np.ones((1, 8))), 4)
    assert dense.row_data[0].block_ptr.tolist() == [0, 4, 8]
    assert metadata_bits(dense) == 8 * 2 + 3 * 4
    zero = encode_blocked_csr(MaskedTensor.zeros(1, 8), 4)
    assert zero.row_data[0].block_ptr.tolist() == [0, 0, 0]


def test_blocked_csr_errors():
    with pytest.raises(CodecError):
        encode_blocked_csr(MaskedTensor.dense(np.ones((1, 6))), 4)
    padded = encode_blocked_csr(MaskedTensor.dense(np.ones((1, 6))), 4, pad=True)
    assert decode_blocked_csr(padded).same_as(MaskedTensor.dense(np.ones((1, 6))))
    e = encode_blocked_csr(MaskedTensor.dense(np.ones((1, 8))), 4)
    e.row_data[0] = BlockedCsrRow(e.row_data[0].nz_values, e.row_data[0].nz_offsets,
                                  np.array([0, 5, 8]))
    with pytest.raises(CodecError):
        decode_blocked_csr(e)
    e.row_data[0].block_ptr = np.array([0, 4, 7])
    with pytest.raises(CodecError):
        decode_blocked_csr(e)


def test_serialization_errors(tmp_path):
    e = encode_hier_cp(example_row(), SPEC)
    buf = hier_cp_to_bytes(e)
    with pytest.raises(CodecError):
        hier_cp_from_bytes(buf[:-2])
    with pytest.raises(CodecError):
        hier_cp_from_bytes(buf + b"\0")
    with pytest.raises(CodecError):
        hier_cp_from_bytes(b"HS")
    with pytest.raises(CodecError):
        blocked_csr_from_bytes(buf)
    save_encoding(tmp_path / "a.hcp", e)
    assert decode_hier_cp(load_encoding(tmp_path / "a.hcp")).same_as(example_row())
    (tmp_path / "junk").write_bytes(b"nope")
    with pytest.raises(CodecError):
        load_encoding(tmp_path / "junk")


def test_generic_three_levels():
    spec = "C2(1:2)->C1(2:4)->C0(2:4)"
    t = random_conformant(3, 64, spec, 5)
    e = encode_hier_cp(t, spec)
    assert e.levels == 3
    assert decode_hier_cp(e).same_as(t)
    assert t.density() == Fraction(1, 8)
