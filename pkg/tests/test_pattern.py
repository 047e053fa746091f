from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hss.highlight import ArchConfig
from hss.pattern import (
    PatternError,
    RankRule,
    density,
    design_mux_tax,
    enumerate_degrees,
    mux_tax,
    parse_pattern,
    ratio_set,
    render_pattern,
    sparsity,
    validate_against_arch,
)


@pytest.mark.parametrize("text", [
    "RS->C1(2:8)->C0(2:4)",
    "C",
    "C0(2:4)",
    "K1->K0(unconstrained)",
    "C1(dense)->C0(1:1)",
])
def test_parse_render_examples(text):
    spec = parse_pattern(text)
    assert parse_pattern(render_pattern(spec)) == spec


def test_parse_structure():
    spec = parse_pattern("RS->C1(2:8)->C0(2:4)")
    assert [r.name for r in spec.ranks] == ["RS", "C1", "C0"]
    assert spec.ranks[0].rule == RankRule()
    assert spec.gh_params() == [(2, 4), (2, 8)]
    assert spec.block_size() == 32


def test_unicode_arrow_and_whitespace():
    assert parse_pattern(" C1( 2 : 4 ) → C0(2:4) ") == parse_pattern("C1(2:4)->C0(2:4)")


def test_dense_keyword_renders_bare():
    assert render_pattern(parse_pattern("C1(dense)->C0(2:4)")) == "C1->C0(2:4)"


@pytest.mark.parametrize("bad", [
    "", "   ", "C0(3:2)", "C0(0:4)", "C0(2:0)", "C0(x)", "C0->C0", "C0(2:4", "->C0", "1C",
    "C0(-1:4)",
])
def test_parse_errors(bad):
    with pytest.raises(PatternError):
        parse_pattern(bad)


@pytest.mark.parametrize("text,expect", [
    ("C1(2:4)->C0(2:4)", Fraction(1, 4)),
    ("C1(2:8)->C0(2:4)", Fraction(1, 8)),
    ("RS->C1(2:3)->C0(2:4)", Fraction(1, 3)),
    ("C", Fraction(1)),
    ("C0(2:2)", Fraction(1)),
])
def test_density_examples(text, expect):
    assert density(text) == expect
    assert sparsity(text) == 1 - expect


def test_density_unconstrained_rejected():
    with pytest.raises(PatternError):
        density("C0(unconstrained)")


rank_rules = st.integers(1, 16).flatmap(lambda h: st.tuples(st.integers(1, h), st.just(h)))


@given(st.lists(rank_rules, min_size=1, max_size=4), st.booleans())
def test_roundtrip_and_density_product(rules, lead_dense):
    names = [f"R{i}" for i in range(len(rules))][::-1]
    parts = [f"{n}({g}:{h})" for n, (g, h) in zip(names, rules)]
    if lead_dense:
        parts.insert(0, "TOP")
    spec = parse_pattern("->".join(parts))
    assert parse_pattern(str(spec)) == spec
    expect = Fraction(1)
    for g, h in rules:
        expect *= Fraction(g, h)
    assert density(spec) == expect


def _brute_degrees(sets):
    out = {Fraction(1)}
    for s in sets:
        out = {a * b for a in out for b in s}
    return sorted(out)


def test_degree_sets():
    ss = enumerate_degrees([ratio_set(2, range(2, 9)), ratio_set(2, range(2, 5))])
    s = enumerate_degrees([ratio_set(2, range(2, 17))])
    assert len(ss) == len(s) == 15
    assert ss.min == s.min == Fraction(1, 8)
    assert ss.sparsities()[0] == Fraction(7, 8)
    assert Fraction(1, 4) in ss


@given(st.lists(st.sets(st.fractions(min_value=Fraction(1, 20), max_value=1), min_size=1, max_size=5),
                min_size=1, max_size=3))
def test_degrees_match_brute_force(sets):
    assert list(enumerate_degrees(sets)) == _brute_degrees(sets)


def test_degree_errors():
    with pytest.raises(PatternError):
        enumerate_degrees([])
    with pytest.raises(PatternError):
        enumerate_degrees([set()])


def test_mux_tax():
    assert mux_tax(2, 8) == (2, 14)
    assert mux_tax(2, 4) == (2, 6)
    assert mux_tax(2, 16).two_to_one_equivalents == 30
    # two ranks of small muxes versus one rank covering the same range of degrees
    assert design_mux_tax([(2, 8), (2, 4)]) == 20
    with pytest.raises(PatternError):
        mux_tax(0, 4)


@pytest.mark.parametrize("text,ok", [
    ("C1(2:8)->C0(2:4)", True),
    ("C1(2:2)->C0(2:2)", True),
    ("C0(2:4)", True),
    ("C", True),
    ("RS->C1(2:5)->C0(2:3)", True),
    ("C1(2:16)->C0(2:4)", False),
    ("C1(2:8)->C0(2:8)", False),
    ("C0(3:4)", False),
    ("C0(1:4)", False),
    ("C2(2:2)->C1(2:4)->C0(2:4)", False),
    ("C0(unconstrained)", False),
])
def test_validate_against_arch(text, ok):
    assert validate_against_arch(text, ArchConfig()) is ok
