import json
import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hss.baselines import simulate_tc
from hss.cost import CostTable, ed2, edp, energy_of, geomean, saf_area_fraction
from hss.highlight import ActivityCounts, simulate
from hss.workloads import gen_synthetic

TABLE = CostTable()

count_fields = ["glb_a_reads", "glb_b_reads", "glb_meta_bits", "rf_updates", "reg_writes",
                "mac_effectual", "mac_gated", "mac_ineffectual", "mux2_activations", "vfmu_shifts",
                "accum_buffer_accesses"]
counts = st.builds(ActivityCounts, **{f: st.integers(0, 10**6) for f in count_fields})


def test_default_table_matches_packaged_file():
    assert CostTable.default() == TABLE


def test_zero_counts_zero_energy():
    e = energy_of(ActivityCounts(), TABLE)
    assert e.total_pj == 0 and e.to_dict()["buffers_pj"] == 0


@given(counts, counts, st.integers(1, 5))
def test_energy_is_linear(c1, c2, k):
    e1, e2 = energy_of(c1, TABLE), energy_of(c2, TABLE)
    both = energy_of(c1 + c2, TABLE)
    assert both.total_pj == pytest.approx(e1.total_pj + e2.total_pj, rel=1e-12)
    assert energy_of(c1.scaled(k), TABLE).total_pj == pytest.approx(k * e1.total_pj, rel=1e-12)
    assert both.total_pj == pytest.approx(both.buffers_pj + both.compute_pj + both.saf_pj)


def test_gated_mac_cheaper_than_effectual():
    gated = energy_of(ActivityCounts(mac_gated=100), TABLE).compute_pj
    done = energy_of(ActivityCounts(mac_effectual=100), TABLE).compute_pj
    assert 0 < gated < done


def test_category_routing():
    assert energy_of(ActivityCounts(glb_a_reads=2), TABLE).buffers_pj == 2 * TABLE.glb_read_per_byte
    assert energy_of(ActivityCounts(mux2_activations=100), TABLE).saf_pj == pytest.approx(1.0)
    assert energy_of(ActivityCounts(glb_meta_bits=16), TABLE).saf_pj == 2 * TABLE.metadata_read_per_byte


def test_edp_and_ed2():
    assert edp((2.0, 3)) == 6
    assert ed2((2.0, 3)) == 18
    with pytest.raises(ValueError):
        edp((1.0, 0))
    rep = simulate(gen_synthetic(32, 16, 4, "C0(2:4)", 1))
    e = energy_of(rep.counts, TABLE).total_pj
    assert edp(rep, TABLE) == pytest.approx(e * rep.cycles)
    assert ed2(rep, TABLE) == pytest.approx(e * rep.cycles ** 2)


@pytest.mark.parametrize("vals,expect", [([4], 4), ([1, 4], 2), ([2, 8, 32], 8)])
def test_geomean_examples(vals, expect):
    assert geomean(vals) == pytest.approx(expect)


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=12), st.floats(1e-2, 1e2))
def test_geomean_scales(vals, k):
    g = geomean(vals)
    assert min(vals) * (1 - 1e-9) <= g <= max(vals) * (1 + 1e-9)
    assert geomean([k * v for v in vals]) == pytest.approx(k * g, rel=1e-9)


def test_geomean_errors():
    for bad in ([], [1, 0], [2, -1]):
        with pytest.raises(ValueError):
            geomean(bad)


def test_table_validation(tmp_path):
    with pytest.raises(ValueError):
        CostTable(mac_op=-1)
    with pytest.raises(ValueError):
        CostTable(mac_op=0.1, mac_gated=0.2)
    with pytest.raises(ValueError):
        CostTable(rf_access=math.nan)
    with pytest.raises(ValueError):
        CostTable.from_dict({"sram": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"mac_op": 0.5}))
    assert CostTable.load(path).mac_op == 0.5


@given(st.floats(0.1, 10))
def test_edp_ratio_survives_uniform_scaling(k):
    w = gen_synthetic(64, 64, 16, "C1(2:4)->C0(2:4)", Fraction(1, 2), seed=3)
    hl, tc = simulate(w, functional=False), simulate_tc(w, functional=False)
    base = edp(hl, TABLE) / edp(tc, TABLE)
    scaled = TABLE.scaled(k)
    assert edp(hl, scaled) / edp(tc, scaled) == pytest.approx(base, rel=1e-9)


def test_saf_area_fraction():
    assert saf_area_fraction(TABLE) == pytest.approx(64 / (1024 + 4096 + 64))
    assert saf_area_fraction(CostTable(saf_muxes=0, vfmu=0)) == 0


def test_highlight_beats_tc_on_sparse_weights():
    w = gen_synthetic(128, 128, 64, "C1(2:4)->C0(2:4)", 1, seed=9)
    assert edp(simulate(w, functional=False)) < edp(simulate_tc(w, functional=False))
