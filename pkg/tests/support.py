"""Shared oracles, builders and hypothesis strategies for the test suite.

The oracles work on frozensets of labels rather than bitmasks so they share
no code path with the package internals.
"""

from __future__ import annotations

import itertools
import json
from fractions import Fraction
from importlib import resources
from math import factorial

from hypothesis import strategies as st

from sharekit import serialization as ser
from sharekit.core_model import BasisForm, PlayerSet, WelfareFunction, basis_to_welfare
from sharekit.distribution_rules import RuleSpec, WeightSystem, build_rule, direct_share
from sharekit.game_engine import Game, Resource, all_profiles

LABELS = "abcdef"


# ------------------------------------------------------------------ fixtures


def fixture_doc(name: str) -> dict:
    text = resources.files("sharekit").joinpath("fixtures", name).read_text(encoding="utf-8")
    return json.loads(text)


def fixture_pairs(name: str):
    return ser.parse_pairs_doc(fixture_doc(name))


# ------------------------------------------------------------------ oracles


def label_sets(labels):
    """Every subset of ``labels`` as a frozenset."""
    for r in range(len(labels) + 1):
        for combo in itertools.combinations(labels, r):
            yield frozenset(combo)


def as_labels(players: PlayerSet, mask: int) -> frozenset:
    return frozenset(players.labels(mask))


def oracle_coefficients(values: dict) -> dict:
    """Inclusion-exclusion coefficients of a set function given as {frozenset: value}."""
    out = {}
    for t in values:
        total = Fraction(0)
        for r in label_sets(sorted(t)):
            total += (-1) ** (len(t) - len(r)) * values[r]
        if total:
            out[t] = total
    return out


def welfare_table(w: WelfareFunction) -> dict:
    return {as_labels(w.players, m): w(m) for m in range(1 << w.players.n)}


def oracle_shapley(values: dict, player: str, coalition: frozenset) -> Fraction:
    """Average marginal contribution over all orders of ``coalition``."""
    total = Fraction(0)
    orders = list(itertools.permutations(sorted(coalition)))
    for order in orders:
        before = frozenset(order[: order.index(player)])
        total += values[before | {player}] - values[before]
    return total / len(orders)


def oracle_shapley_formula(values: dict, player: str, coalition: frozenset) -> Fraction:
    """Subset-weight form of the same value."""
    n = len(coalition)
    total = Fraction(0)
    for r in label_sets(sorted(coalition - {player})):
        weight = Fraction(factorial(len(r)) * factorial(n - len(r) - 1), factorial(n))
        total += weight * (values[r | {player}] - values[r])
    return total


def oracle_gwsv(coeffs: dict, lam: dict, blocks: list, player: str, coalition: frozenset) -> Fraction:
    """Priority-weighted split of each unanimity coefficient inside ``coalition``."""
    total = Fraction(0)
    for t, q in coeffs.items():
        if not t <= coalition or player not in t:
            continue
        top = next(t & b for b in blocks if t & b)
        if player in top:
            total += q * lam[player] / sum(lam[x] for x in top)
    return total


def oracle_gwmc(values: dict, lam: dict, blocks: list, player: str, coalition: frozenset) -> Fraction:
    """Weighted marginal contribution after dropping higher-priority blocks."""
    rest = set(coalition)
    for b in blocks:
        if player in b:
            break
        rest -= b
    rest = frozenset(rest)
    return lam[player] * (values[rest] - values[rest - {player}])


def omega_labels(players: PlayerSet, omega: WeightSystem):
    lam = {players.ids[k]: omega.lam[k] for k in range(players.n)}
    blocks = [as_labels(players, b) for b in omega.sigma]
    return lam, blocks


# ------------------------------------------------------------------ strategies


small_rationals = st.fractions(min_value=-6, max_value=6, max_denominator=4)
nonzero_rationals = small_rationals.filter(lambda x: x != 0)
positive_weights = st.integers(min_value=1, max_value=5).map(Fraction)


def players(n: int) -> PlayerSet:
    return PlayerSet(tuple(LABELS[:n]))


@st.composite
def welfares(draw, min_n=1, max_n=5):
    n = draw(st.integers(min_value=min_n, max_value=max_n))
    values = [Fraction(0)] + [draw(small_rationals) for _ in range((1 << n) - 1)]
    return WelfareFunction(players(n), tuple(values))


@st.composite
def sparse_bases(draw, n, density=0.4):
    """Basis forms with a handful of nonzero integer coefficients."""
    coeffs = {}
    for t in range(1, 1 << n):
        if draw(st.floats(min_value=0, max_value=1)) < density:
            coeffs[t] = Fraction(draw(st.sampled_from([-3, -2, -1, 1, 2, 3])))
    return BasisForm.pruned(players(n), coeffs)


@st.composite
def weight_systems(draw, n):
    lam = tuple(draw(positive_weights) for _ in range(n))
    count = draw(st.integers(min_value=1, max_value=min(3, n)))
    slots = [draw(st.integers(min_value=0, max_value=count - 1)) for _ in range(n)]
    blocks = [0] * count
    for i, b in enumerate(slots):
        blocks[b] |= 1 << i
    # empty blocks carry no information; drop them
    return WeightSystem(lam, tuple(b for b in blocks if b))


@st.composite
def rule_pairs(draw, n):
    """A welfare with its GWSV rule under a fresh weight system."""
    basis = draw(sparse_bases(n))
    omega = draw(weight_systems(n))
    w = basis_to_welfare(basis)
    return w, build_rule(RuleSpec("gwsv", omega=omega), w), omega


# ------------------------------------------------------------------ games


@st.composite
def games(draw, family="gwsv", max_players=4, max_resources=6, max_actions=3):
    """Random resource-selection games whose rules share one weight system."""
    n = draw(st.integers(min_value=1, max_value=max_players))
    ps = players(n)
    omega = draw(weight_systems(n)) if family in ("gwsv", "gwmc") else WeightSystem.uniform(n)
    count = draw(st.integers(min_value=1, max_value=max_resources))
    kinds = draw(st.integers(min_value=1, max_value=min(2, count)))
    welfare_map, rule_map = {}, {}
    for k in range(kinds):
        w = basis_to_welfare(draw(sparse_bases(n, density=0.5)))
        welfare_map[f"w{k}"] = w
        rule_map[f"f{k}"] = RuleSpec(family, omega=omega) if family in ("gwsv", "gwmc") else RuleSpec(family)
    res = []
    for r in range(count):
        k = draw(st.integers(min_value=0, max_value=kinds - 1))
        res.append(Resource(f"r{r}", f"w{k}", f"f{k}", draw(st.integers(min_value=1, max_value=3))))
    ids = [r.id for r in res]
    actions = []
    for _ in range(n):
        m = draw(st.integers(min_value=1, max_value=max_actions))
        acts = []
        for _ in range(m):
            acts.append(frozenset(draw(st.sets(st.sampled_from(ids), max_size=len(ids)))))
        actions.append(tuple(acts))
    return Game(ps, welfare_map, rule_map, tuple(res), tuple(actions)), omega


def _loads(g, profile):
    out = {r.id: set() for r in g.resources}
    for i, choice in enumerate(profile):
        for rid in g.actions[i][choice]:
            out[rid].add(i)
    return out


def oracle_utility(g, profile, i):
    """Utility recomputed from the closed-form share of each used resource."""
    loads = _loads(g, profile)
    total = Fraction(0)
    for r in g.resources:
        if r.id in g.actions[i][profile[i]]:
            s = sum(1 << x for x in loads[r.id])
            total += r.v * direct_share(g.rules[r.rule], g.welfares[r.welfare], i, s)
    return total


def oracle_pne(g):
    """Profiles surviving a full deviation scan with :func:`oracle_utility`."""
    out = []
    for p in all_profiles(g):
        stable = True
        for i in range(g.players.n):
            here = oracle_utility(g, p, i)
            for b in range(len(g.actions[i])):
                if oracle_utility(g, p[:i] + (b,) + p[i + 1:], i) > here:
                    stable = False
        if stable:
            out.append(p)
    return out
