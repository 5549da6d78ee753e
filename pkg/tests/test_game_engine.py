from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharekit.core_model import BasisForm, ModelError, PlayerSet, basis_to_welfare, members, mobius_decompose
from sharekit.distribution_rules import RuleSpec, WeightSystem, gwmc_ground_to_gwsv_ground
from sharekit.game_engine import (
    BudgetExceeded,
    Game,
    Resource,
    all_profiles,
    best_response_cycle,
    find_pne,
    global_potential,
    global_potential_recursive,
    local_potential_closed,
    local_potential_recursive,
    potential_maximizers,
    utility,
    verify_potential_property,
    welfare_of_profile,
)

from support import games, oracle_pne, oracle_utility, players, sparse_bases, weight_systems


def _single_resource_game(w, spec, v=1):
    return Game(w.players, {"w": w}, {"f": spec}, (Resource("r", "w", "f", v),),
                tuple(({"r"}, set()) for _ in range(w.players.n)))


def test_lone_player_gets_scaled_own_welfare():
    ps = players(2)
    w = basis_to_welfare(BasisForm(ps, {1: Fraction(4), 3: Fraction(-1)}))
    g = _single_resource_game(w, RuleSpec("shapley"), v=3)
    assert utility(g, (0, 1), 0) == 12
    assert welfare_of_profile(g, (0, 1)) == 12
    assert welfare_of_profile(g, (1, 1)) == 0


def test_single_player_equilibria_are_argmax():
    ps = players(1)
    w = basis_to_welfare(BasisForm(ps, {1: Fraction(2)}))
    g = Game(ps, {"w": w}, {"f": RuleSpec("shapley")},
             (Resource("x", "w", "f", 1), Resource("y", "w", "f", 2)),
             (({"x"}, {"y"}, {"x", "y"}),))
    assert find_pne(g) == [(2,)]
    assert best_response_cycle(g) is None


def test_matching_pennies_has_a_four_cycle():
    ps = players(2)
    w = basis_to_welfare(BasisForm(ps, {1: Fraction(1), 2: Fraction(1), 3: Fraction(-1)}))
    # a wants to share a resource with b, b wants to avoid a
    shares = {(0, 1): 1, (1, 2): 1, (0, 3): 2, (1, 3): -1}
    g = Game(ps, {"w": w}, {"f": RuleSpec("table", table=shares)},
             (Resource("r1", "w", "f"), Resource("r2", "w", "f")),
             (({"r1"}, {"r2"}), ({"r1"}, {"r2"})))
    assert find_pne(g) == []
    cycle = best_response_cycle(g)
    assert cycle is not None and len(cycle) == 4
    assert {step.player for step in cycle} == {0, 1}
    first = cycle[0].profile
    last = cycle[-1]
    assert last.profile[:last.player] + (last.action,) + last.profile[last.player + 1:] == first


def test_budget_is_enforced():
    ps = players(2)
    w = basis_to_welfare(BasisForm(ps, {1: Fraction(1)}))
    g = _single_resource_game(w, RuleSpec("shapley"))
    with pytest.raises(BudgetExceeded) as err:
        find_pne(g, budget=3)
    assert err.value.count == 4


def test_game_validation():
    ps = players(1)
    w = basis_to_welfare(BasisForm(ps, {1: Fraction(1)}))
    rules = {"f": RuleSpec("shapley"), "g": RuleSpec("mc")}
    with pytest.raises(ModelError):
        Game(ps, {"w": w}, rules, (Resource("r", "w", "f"), Resource("s", "w", "g")), (({"r"},),))
    with pytest.raises(ModelError):
        Game(ps, {"w": w}, rules, (Resource("r", "w", "f"),), (({"q"},),))
    with pytest.raises(ModelError):
        Game(ps, {"w": w}, rules, (Resource("r", "w", "f"),), ((),))
    with pytest.raises(ModelError):
        Resource("r", "w", "f", 0)


def test_local_potential_examples():
    ps = PlayerSet(("i", "j", "k", "l"))
    basis = BasisForm(ps, {ps.parse("l"): Fraction(2), ps.parse("i,l"): Fraction(3), ps.parse("i"): Fraction(5)})
    omega = WeightSystem((Fraction(1),) * 4, (ps.parse("i,j,k"), ps.parse("l")))
    w = basis_to_welfare(basis)
    s = ps.parse("i,l")
    assert local_potential_closed(basis, omega, s) == (w(ps.parse("l")), w(s))
    single = WeightSystem.uniform(4)
    assert local_potential_closed(basis, single, s) == (w(s),)
    assert local_potential_recursive(basis, single, 0) == (0,)


def test_unanimity_potential_recursion():
    ps = players(3)
    t = 0b011
    ground = BasisForm(ps, {t: Fraction(1)})
    omega = WeightSystem.uniform(3)
    for s in range(8):
        expected = Fraction(1, 2) if t & ~s == 0 else 0
        assert local_potential_recursive(ground, omega, s) == (expected,)


def test_mixed_weight_systems_are_rejected():
    ps = players(2)
    w = basis_to_welfare(BasisForm(ps, {3: Fraction(1)}))
    g = Game(ps, {"w": w}, {"f": RuleSpec("equal_share")}, (Resource("r", "w", "f"),), (({"r"},), ({"r"},)))
    with pytest.raises(ModelError):
        global_potential(g, WeightSystem.uniform(2), (0, 0))
    g = _single_resource_game(w, RuleSpec("gwsv", omega=WeightSystem.single_block((1, 2))))
    with pytest.raises(ModelError):
        verify_potential_property(g, WeightSystem.uniform(2))


@settings(max_examples=40, deadline=None)
@given(games(family="gwsv", max_players=3, max_resources=4, max_actions=3))
def test_engine_matches_oracle_evaluation(case):
    g, _ = case
    for p in all_profiles(g):
        for i in range(g.players.n):
            assert utility(g, p, i) == oracle_utility(g, p, i)
    assert find_pne(g) == oracle_pne(g)


@settings(max_examples=40, deadline=None)
@given(games(family="gwsv", max_players=3, max_resources=4, max_actions=3))
def test_potential_games_have_equilibria_at_maximizers(case):
    g, omega = case
    holds, violation = verify_potential_property(g, omega)
    assert holds, violation
    pne = find_pne(g)
    assert pne
    assert set(potential_maximizers(g, omega)) <= set(pne)
    assert best_response_cycle(g) is None


@settings(max_examples=30, deadline=None)
@given(games(family="gwmc", max_players=3, max_resources=4, max_actions=2))
def test_closed_and_recursive_potentials_agree_on_games(case):
    g, omega = case
    for p in all_profiles(g):
        assert global_potential(g, omega, p) == global_potential_recursive(g, omega, p)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=5).flatmap(lambda n: st.tuples(sparse_bases(n), weight_systems(n))))
def test_local_closed_form_matches_recursion(case):
    ground_mc, omega = case
    ground_sv = gwmc_ground_to_gwsv_ground(ground_mc, omega)
    for s in range(1 << ground_mc.players.n):
        assert local_potential_closed(ground_mc, omega, s) == local_potential_recursive(ground_sv, omega, s)


def _split_copies(g):
    """Replace each resource of multiplicity v by v unit copies used together."""
    res, expand = [], {}
    for r in g.resources:
        ids = [f"{r.id}_{c}" for c in range(r.v)]
        expand[r.id] = ids
        res.extend(Resource(x, r.welfare, r.rule, 1) for x in ids)
    actions = tuple(
        tuple(frozenset(x for rid in a for x in expand[rid]) for a in acts) for acts in g.actions
    )
    return Game(g.players, g.welfares, g.rules, tuple(res), actions)


@settings(max_examples=30, deadline=None)
@given(games(family="gwsv", max_players=3, max_resources=3, max_actions=2))
def test_multiplicity_equals_copies(case):
    g, omega = case
    copies = _split_copies(g)
    for p in all_profiles(g):
        for i in range(g.players.n):
            assert utility(g, p, i) == utility(copies, p, i)
        assert global_potential(g, omega, p) == global_potential(copies, omega, p)
        assert welfare_of_profile(g, p) == welfare_of_profile(copies, p)


@settings(max_examples=30, deadline=None)
@given(games(family="mc", max_players=3, max_resources=4, max_actions=2))
def test_mc_potential_is_welfare(case):
    g, omega = case
    for p in all_profiles(g):
        assert global_potential(g, omega, p) == (welfare_of_profile(g, p),)


def test_mobius_ground_is_default_for_games():
    ps = players(2)
    w = basis_to_welfare(BasisForm(ps, {1: Fraction(1), 3: Fraction(2)}))
    g = _single_resource_game(w, RuleSpec("mc"))
    assert mobius_decompose(w).q(3) == 2
    assert global_potential(g, WeightSystem.uniform(2), (0, 0)) == (w(3),)
