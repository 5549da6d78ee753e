from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharekit import serialization as ser
from sharekit.core_model import (
    BasisForm,
    ModelError,
    PlayerSet,
    WelfareFunction,
    basis_evaluate,
    basis_to_welfare,
    coalitions_containing_pair,
    contributing_coalitions,
    contributing_players,
    members,
    min_partition,
    minimal_elements,
    mobius_decompose,
    ordered_subsets,
    unanimity,
)

from support import (
    as_labels,
    fixture_doc,
    oracle_coefficients,
    players,
    sparse_bases,
    welfare_table,
    welfares,
)


def test_members_and_scan_order():
    assert members(0b1011) == (0, 1, 3)
    assert ordered_subsets(0b111) == [0, 1, 2, 4, 3, 5, 6, 7]


def test_player_set_rejects_bad_labels():
    with pytest.raises(ModelError):
        PlayerSet(("a", "a"))
    with pytest.raises(ModelError):
        PlayerSet(("a,b",))
    with pytest.raises(ModelError):
        PlayerSet(())
    with pytest.raises(ModelError):
        PlayerSet(tuple(f"p{k}" for k in range(17)))


def test_player_set_format_sorts_labels():
    ps = PlayerSet(("z", "a", "m"))
    assert ps.format(ps.mask(["m", "z"])) == "m,z"
    assert ps.parse("z, m") == ps.mask(["m", "z"])
    with pytest.raises(ModelError):
        ps.parse("a,a")


def test_welfare_needs_zero_on_empty_set():
    with pytest.raises(ModelError):
        WelfareFunction(players(1), (Fraction(1), Fraction(2)))
    with pytest.raises(ModelError):
        WelfareFunction(players(2), (Fraction(0), Fraction(1)))


def test_basis_form_rejects_zero_and_empty():
    ps = players(2)
    with pytest.raises(ModelError):
        BasisForm(ps, {1: Fraction(0)})
    with pytest.raises(ModelError):
        BasisForm(ps, {0: Fraction(1)})
    with pytest.raises(ModelError):
        BasisForm(ps, {4: Fraction(1)})
    assert BasisForm.pruned(ps, {1: 0, 3: 2}).support == (3,)


def test_four_player_basis():
    w = ser.parse_welfare_doc(fixture_doc("example6_welfare.json"))
    basis = mobius_decompose(w)
    got = {w.players.format(t): q for t, q in basis.coefficients.items()}
    assert got == {"i": 5, "j": 3, "l": 3, "i,j": -2, "i,k": -3, "j,k": -3, "i,j,l": -2}


def test_three_player_basis():
    w = ser.parse_welfare_doc(fixture_doc("appendix1_welfare.json"))
    basis = mobius_decompose(w)
    got = {w.players.format(t): q for t, q in basis.coefficients.items()}
    assert got == {"i": 1, "j": 2, "k": 3, "j,k": -2, "i,k": -1, "i,j,k": 1}


def test_unanimity_has_single_coefficient():
    ps = players(4)
    w = unanimity(ps, 0b0110, Fraction(3, 2))
    assert mobius_decompose(w).coefficients == {0b0110: Fraction(3, 2)}


def test_contributing_players_is_union_of_inner_support():
    ps = players(4)
    basis = BasisForm(ps, {0b0001: 1, 0b0110: 2, 0b1100: -1})
    assert contributing_coalitions(basis, 0b0111) == [0b0001, 0b0110]
    assert contributing_players(basis, 0b0111) == 0b0111
    assert contributing_players(basis, 0b1001) == 0b0001


def test_min_partition_peels_minimal_layers():
    family = [0b111, 0b011, 0b001, 0b110, 0b100]
    assert minimal_elements(family) == [0b001, 0b100]
    assert min_partition(family) == [[0b001, 0b100], [0b011, 0b110], [0b111]]
    with pytest.raises(ModelError):
        min_partition([1, 1])


@settings(max_examples=150, deadline=None)
@given(welfares())
def test_mobius_matches_inclusion_exclusion_oracle(w):
    basis = mobius_decompose(w)
    expected = oracle_coefficients(welfare_table(w))
    got = {as_labels(w.players, t): q for t, q in basis.coefficients.items()}
    assert got == expected


@settings(max_examples=150, deadline=None)
@given(welfares())
def test_basis_round_trip(w):
    basis = mobius_decompose(w)
    assert basis_to_welfare(basis) == w
    for s in range(1 << w.players.n):
        assert basis_evaluate(basis, s) == w(s)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=1, max_value=5).flatmap(sparse_bases))
def test_decomposition_is_linear(basis):
    w = basis_to_welfare(basis)
    doubled = WelfareFunction(w.players, tuple(2 * v for v in w.values))
    assert mobius_decompose(doubled).coefficients == {t: 2 * q for t, q in basis.coefficients.items()}


def _four_player_basis():
    w = ser.parse_welfare_doc(fixture_doc("example6_welfare.json"))
    return w.players, mobius_decompose(w)


def test_four_player_pair_and_contributor_sets():
    ps, basis = _four_player_basis()
    assert basis_evaluate(basis, ps.parse("i,j")) == 6
    assert basis_evaluate(basis, 0) == 0
    assert contributing_coalitions(basis, ps.parse("j,k")) == [ps.parse("j"), ps.parse("j,k")]
    assert contributing_players(basis, ps.parse("i,k")) == ps.parse("i,k")
    i, j = ps.index("i"), ps.index("j")
    pair_family = coalitions_containing_pair(basis, i, j)
    assert pair_family == [ps.parse("i,j"), ps.parse("i,j,l")]
    assert minimal_elements(pair_family) == [ps.parse("i,j")]


def test_min_partition_overlapping_family():
    ps = PlayerSet(("i", "j", "k", "l"))
    family = [ps.parse(t) for t in ("i", "j", "j,k", "k,l", "j,l", "i,j,k")]
    blocks = [sorted(ps.format(t) for t in b) for b in min_partition(family)]
    assert blocks == [["i", "j", "k,l"], ["j,k", "j,l"], ["i,j,k"]]


def test_min_partition_chain_and_antichain():
    assert min_partition([0b111, 0b001, 0b011]) == [[0b001], [0b011], [0b111]]
    assert min_partition([0b001, 0b010, 0b100]) == [[0b001, 0b010, 0b100]]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=31), min_size=1, max_size=12, unique=True))
def test_min_partition_blocks_are_antichains_covering_input(family):
    blocks = min_partition(family)
    flat = [t for b in blocks for t in b]
    assert sorted(flat) == sorted(family)
    for block in blocks:
        for a in block:
            for b in block:
                assert a == b or a & ~b != 0
    # brute-force minimality of the first block
    assert minimal_elements(family) == [
        t for t in family if not any(u != t and (u | t) == t for u in family)
    ]


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=5).flatmap(sparse_bases), st.data())
def test_welfare_only_sees_contributing_players(basis, data):
    w = basis_to_welfare(basis)
    s = data.draw(st.integers(min_value=0, max_value=basis.players.full))
    assert w(s) == w(contributing_players(basis, s))
