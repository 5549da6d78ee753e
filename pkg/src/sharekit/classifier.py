"""Staged test of whether a set of rules is a generalized weighted Shapley value.

Each stage checks one necessary condition for equilibrium existence in every
game built from the given (welfare, rule) pairs. The first failure is reported
with a witness and a verified equilibrium-free game; passing every stage yields
a single weight system that reproduces all rules exactly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Optional, Sequence

from .core_model import (
    BasisForm,
    ModelError,
    PlayerSet,
    Subset,
    WelfareFunction,
    contributing_coalitions,
    contributing_players,
    members,
    min_partition,
    minimal_elements,
    mobius_decompose,
    ordered_subsets,
    subset_key,
)
from .distribution_rules import (
    DistributionRule,
    RuleSpec,
    WeightSystem,
    actual_welfare,
    build_rule,
)
from .game_engine import Game

BasisRules = dict[Subset, dict[int, Fraction]]


class Stage(str, Enum):
    CONTRIBUTING = "contributing"
    DECOMPOSITION = "decomposition"
    NONNEGATIVITY = "nonnegativity"
    GLOBAL_CONSISTENCY = "global_consistency"
    CYCLIC_CONSISTENCY = "cyclic_consistency"


class ClassifierError(RuntimeError):
    """An internal invariant broke; signals a bug rather than bad input."""


@dataclass(frozen=True)
class RulePair:
    welfare: WelfareFunction
    rule: DistributionRule


@dataclass(frozen=True)
class ClassifierInput:
    players: PlayerSet
    pairs: tuple[RulePair, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if not self.pairs:
            raise ModelError("need at least one (welfare, rule) pair")
        for p in self.pairs:
            if p.welfare.players != self.players or p.rule.players != self.players:
                raise ModelError("every pair must use the same player set")


@dataclass(frozen=True)
class Verdict:
    outcome: str
    omega: Optional[WeightSystem] = None
    grounds: tuple[BasisForm, ...] = ()
    stage: Optional[Stage] = None
    witness: dict[str, Any] = field(default_factory=dict, compare=False)
    game: Optional[Game] = field(default=None, compare=False)
    pne_count: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.outcome == "pass"


@dataclass(frozen=True)
class Analysis:
    """Per-pair intermediate results of the per-welfare stages."""

    basis: BasisForm
    rule: DistributionRule
    basis_rules: BasisRules


def reduce_to_budget_balanced(inp: ClassifierInput) -> ClassifierInput:
    """Pair every rule with the welfare it actually distributes."""
    return ClassifierInput(
        inp.players, tuple(RulePair(actual_welfare(p.rule), p.rule) for p in inp.pairs)
    )


def check_contributing_conditions(basis: BasisForm, f: DistributionRule) -> Optional[tuple[Subset, int]]:
    """First ``(S, i)`` with ``f(i, S) != f(i, N(S))`` in (size, lex) order, or None."""
    players = basis.players
    for s in ordered_subsets(players.full):
        if s == 0:
            continue
        ns = contributing_players(basis, s)
        if ns == s:
            continue
        for i in members(s):
            if f(i, s) != f(i, ns):
                return s, i
    return None


def construct_basis_rules(basis: BasisForm, f: DistributionRule) -> BasisRules:
    """Per-coalition unit shares, peeled off in min-partition order.

    ``q_T f^T(i, T) = f(i, T) - sum over strict sub-coalitions T' of q_T' f^T'(i, T')``.
    """
    out: BasisRules = {}
    for block in min_partition(list(basis.support)):
        for t in block:
            q = basis.q(t)
            row = {}
            inner = [u for u in contributing_coalitions(basis, t) if u != t]
            for i in members(t):
                rest = sum(
                    (basis.q(u) * out[u].get(i, Fraction(0)) for u in inner if u >> i & 1),
                    Fraction(0),
                )
                row[i] = (f(i, t) - rest) / q
            out[t] = row
    return {t: out[t] for t in basis.support}


def decomposed_share(basis: BasisForm, rules: BasisRules, i: int, s: Subset) -> Fraction:
    """``sum over support T inside S containing i of q_T f^T(i, T)``."""
    return sum(
        (q * rules[t][i] for t, q in basis.coefficients.items() if t & ~s == 0 and t >> i & 1),
        Fraction(0),
    )


def check_decomposition(basis: BasisForm, f: DistributionRule, rules: BasisRules) -> Optional[tuple[Subset, int]]:
    for s in ordered_subsets(basis.players.full):
        for i in members(s):
            if f(i, s) != decomposed_share(basis, rules, i, s):
                return s, i
    return None


def local_weight_system(n: int, shares: dict[int, Fraction]) -> WeightSystem:
    """Weights from one coalition's unit shares: paid members first, weight = share; others weight 1."""
    paid = 0
    lam = [Fraction(1)] * n
    for i, x in shares.items():
        if x > 0:
            paid |= 1 << i
            lam[i] = x
    full = (1 << n) - 1
    sigma = (paid, full & ~paid) if full & ~paid else (paid,)
    return WeightSystem(tuple(lam), sigma)


def check_nonnegativity_and_build_local_weights(
    rules: BasisRules, n: int
) -> tuple[Optional[tuple[Subset, int]], dict[Subset, WeightSystem]]:
    """Return ``(witness, {})`` on the first negative unit share, else ``(None, local systems)``."""
    for t in sorted(rules, key=subset_key):
        for i in members(t):
            if rules[t][i] < 0:
                return (t, i), {}
    return None, {t: local_weight_system(n, rules[t]) for t in rules}


def inclusion_exclusion_coeffs(basis: BasisForm, t: Subset) -> dict[Subset, int]:
    """Integers ``n_T(T')`` with ``q_T f^T(i,T) = sum n_T(T') f(i,T')`` over support ``T'`` inside ``T``.

    Unrolls the basis-rule recursion: ``n_T = [T] - sum over strict sub-coalitions U of n_U``.
    """
    if t not in basis.coefficients:
        raise ModelError("coalition is not in the support")
    memo: dict[Subset, dict[Subset, int]] = {}

    def coeffs(u: Subset) -> dict[Subset, int]:
        if u in memo:
            return memo[u]
        out = {u: 1}
        for v in contributing_coalitions(basis, u):
            if v == u:
                continue
            for x, c in coeffs(v).items():
                out[x] = out.get(x, 0) - c
        memo[u] = {x: c for x, c in out.items() if c != 0}
        return memo[u]

    return dict(sorted(coeffs(t).items(), key=lambda kv: subset_key(kv[0])))


def aggregated_coeffs(basis: BasisForm, s: Subset) -> dict[Subset, int]:
    """``sum over support T' inside S of n_T'``: isolates the decomposed share on ``S``."""
    out: dict[Subset, int] = {}
    for t in contributing_coalitions(basis, s):
        for x, c in inclusion_exclusion_coeffs(basis, t).items():
            out[x] = out.get(x, 0) + c
    return {x: c for x, c in sorted(out.items(), key=lambda kv: subset_key(kv[0])) if c != 0}


def positive_pair_coalitions(basis: BasisForm, rules: BasisRules, i: int, j: int) -> list[Subset]:
    """Support coalitions holding both players where at least one of them is paid."""
    pair = (1 << i) | (1 << j)
    return [
        t for t in basis.support
        if t & pair == pair and (rules[t][i] > 0 or rules[t][j] > 0)
    ]


def analyse_pair(pair: RulePair) -> tuple[Optional[tuple[Stage, dict]], Analysis]:
    """Run the per-welfare stages on one budget-balanced pair."""
    basis = mobius_decompose(pair.welfare)
    f = pair.rule
    n = basis.players.n
    hit = check_contributing_conditions(basis, f)
    if hit:
        return (Stage.CONTRIBUTING, {"coalition": hit[0], "player": hit[1]}), Analysis(basis, f, {})
    rules = construct_basis_rules(basis, f)
    analysis = Analysis(basis, f, rules)
    hit = check_decomposition(basis, f, rules)
    if hit:
        return (Stage.DECOMPOSITION, {"coalition": hit[0], "player": hit[1]}), analysis
    hit, _ = check_nonnegativity_and_build_local_weights(rules, n)
    if hit:
        return (Stage.NONNEGATIVITY, {"coalition": hit[0], "player": hit[1]}), analysis
    return None, analysis


def check_global_consistency(analyses: Sequence[Analysis]) -> Optional[dict]:
    """Pairwise share-ratio agreement across all coalitions holding both players.

    For each player pair, a minimal coalition ``S`` of the first welfare is
    compared against every paid coalition ``T`` of every welfare.
    """
    n = analyses[0].basis.players.n
    for i in range(n):
        for j in range(i + 1, n):
            for a, first in enumerate(analyses):
                fam = positive_pair_coalitions(first.basis, first.basis_rules, i, j)
                for s in minimal_elements(fam):
                    fs = first.basis_rules[s]
                    for b, second in enumerate(analyses):
                        for t in positive_pair_coalitions(second.basis, second.basis_rules, i, j):
                            ft = second.basis_rules[t]
                            if ft[i] * fs[j] != fs[i] * ft[j]:
                                return {
                                    "players": (i, j),
                                    "first": (a, s),
                                    "second": (b, t),
                                }
    return None


@dataclass(frozen=True)
class ShareEdge:
    """Representative minimal coalition linking two players, with both unit shares."""

    pair_index: int
    coalition: Subset
    shares: tuple[Fraction, Fraction]


def share_graph(analyses: Sequence[Analysis]) -> dict[tuple[int, int], ShareEdge]:
    """Edge ``(i, j)`` (``i < j``) from the first minimal paid coalition over welfares in order."""
    n = analyses[0].basis.players.n
    edges = {}
    for i in range(n):
        for j in range(i + 1, n):
            for a, an in enumerate(analyses):
                fam = minimal_elements(positive_pair_coalitions(an.basis, an.basis_rules, i, j))
                if fam:
                    t = fam[0]
                    edges[(i, j)] = ShareEdge(a, t, (an.basis_rules[t][i], an.basis_rules[t][j]))
                    break
    return edges


def _share(edges: dict[tuple[int, int], ShareEdge], u: int, v: int) -> Fraction:
    """Unit share of ``u`` on the edge joining ``u`` and ``v``."""
    if u < v:
        return edges[(u, v)].shares[0]
    return edges[(v, u)].shares[1]


def _edge(edges: dict[tuple[int, int], ShareEdge], u: int, v: int) -> ShareEdge:
    return edges[(min(u, v), max(u, v))]


def _directed(n: int, edges: dict[tuple[int, int], ShareEdge]) -> list[list[int]]:
    """``u -> v`` whenever ``u`` is paid on the edge joining them."""
    out: list[list[int]] = [[] for _ in range(n)]
    for (i, j) in edges:
        if _share(edges, i, j) > 0:
            out[i].append(j)
        if _share(edges, j, i) > 0:
            out[j].append(i)
    for row in out:
        row.sort()
    return out


def _strong_components(adj: list[list[int]]) -> list[int]:
    """Component id per node (Tarjan); ids are arbitrary but deterministic."""
    n = len(adj)
    index = [0] * n
    low = [0] * n
    on = [False] * n
    seen = [False] * n
    comp = [-1] * n
    stack: list[int] = []
    counter = [0, 0]

    def visit(v: int) -> None:
        seen[v] = True
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on[v] = True
        for w in adj[v]:
            if not seen[w]:
                visit(w)
                low[v] = min(low[v], low[w])
            elif on[w]:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            while True:
                w = stack.pop()
                on[w] = False
                comp[w] = counter[1]
                if w == v:
                    break
            counter[1] += 1

    for v in range(n):
        if not seen[v]:
            visit(v)
    return comp


def _shortest_path(adj: list[list[int]], src: int, dst: int, allowed: set[int]) -> list[int]:
    prev = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for w in adj[u]:
            if w in allowed and w not in prev:
                prev[w] = u
                queue.append(w)
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]


def _canonical_cycle(cycle: list[int]) -> list[int]:
    """Rotate to start at the smallest index and orient toward its smaller neighbour."""
    k = cycle.index(min(cycle))
    cycle = cycle[k:] + cycle[:k]
    if cycle[-1] < cycle[1]:
        cycle = [cycle[0]] + cycle[1:][::-1]
    return cycle


def _cycle_witness(cycle: list[int], edges: dict[tuple[int, int], ShareEdge]) -> dict:
    cycle = _canonical_cycle(cycle)
    k = len(cycle)
    links = [_edge(edges, cycle[t], cycle[(t + 1) % k]) for t in range(k)]
    return {
        "cycle": tuple(cycle),
        "coalitions": tuple((e.pair_index, e.coalition) for e in links),
    }


def _ratio_potentials(
    comp_nodes: list[int], edges: dict[tuple[int, int], ShareEdge], adj: list[list[int]]
) -> tuple[dict[int, Fraction], dict[int, int], Optional[tuple[int, int]]]:
    """Spread weights along a BFS tree of paid-both edges; report the first inconsistent edge."""
    root = comp_nodes[0]
    allowed = set(comp_nodes)
    pot = {root: Fraction(1)}
    parent = {root: root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w in allowed and w not in pot and _share(edges, w, u) > 0:
                pot[w] = pot[u] * _share(edges, w, u) / _share(edges, u, w)
                parent[w] = u
                queue.append(w)
    for u in comp_nodes:
        for w in adj[u]:
            if w in allowed and u < w and _share(edges, w, u) > 0:
                if pot[w] * _share(edges, u, w) != pot[u] * _share(edges, w, u):
                    return pot, parent, (u, w)
    return pot, parent, None


def _tree_path(parent: dict[int, int], u: int, w: int) -> list[int]:
    """Path from ``u`` to ``w`` in the BFS tree."""
    up = [u]
    while parent[up[-1]] != up[-1]:
        up.append(parent[up[-1]])
    down = [w]
    while parent[down[-1]] != down[-1]:
        down.append(parent[down[-1]])
    common = set(up) & set(down)
    meet = next(x for x in up if x in common)
    return up[: up.index(meet) + 1] + down[: down.index(meet)][::-1]


def check_cyclic_consistency(analyses: Sequence[Analysis]) -> Optional[dict]:
    """Player cycles over minimal paid coalitions must have equal forward and backward share products.

    Strongly connected components of the "is paid against" graph must use
    only edges where both players are paid, and the share ratios on those
    edges must admit consistent node weights.
    """
    n = analyses[0].basis.players.n
    edges = share_graph(analyses)
    adj = _directed(n, edges)
    comp = _strong_components(adj)
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(comp[v], []).append(v)
    for nodes in sorted(groups.values()):
        allowed = set(nodes)
        for u in nodes:
            for w in adj[u]:
                if w in allowed and _share(edges, w, u) == 0:
                    back = _shortest_path(adj, w, u, allowed)
                    return _cycle_witness([u] + back[:-1], edges)
        _, parent, bad = _ratio_potentials(nodes, edges, adj)
        if bad is not None:
            return _cycle_witness(_tree_path(parent, bad[0], bad[1]), edges)
    return None


def dominance_relation(analyses: Sequence[Analysis], universal: bool = False) -> set[tuple[int, int]]:
    """Pairs ``(i, j)``, ``i != j``, where ``i`` is paid in some (or, if ``universal``, every) paid coalition.

    The universal form only relates pairs that share at least one paid coalition.
    """
    n = analyses[0].basis.players.n
    out = set()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            flags = [
                an.basis_rules[t][i] > 0
                for an in analyses
                for t in positive_pair_coalitions(an.basis, an.basis_rules, i, j)
            ]
            if flags and (all(flags) if universal else any(flags)):
                out.add((i, j))
    return out


def build_universal_weight_system(analyses: Sequence[Analysis]) -> WeightSystem:
    """One weight system equivalent to every per-coalition share pattern.

    Blocks are the classes of players linked by paid-both edges, ordered so
    that a paid player's class precedes the classes of players it outranks.
    Weights inside a class follow the edge share ratios, anchored at the
    smallest-index member's own share; lone and never-paid players get 1.
    """
    n = analyses[0].basis.players.n
    edges = share_graph(analyses)
    adj = _directed(n, edges)
    comp = _strong_components(adj)
    groups: dict[int, list[int]] = {}
    for v in range(n):
        groups.setdefault(comp[v], []).append(v)
    classes = sorted(groups.values())
    class_of = {v: c for c, nodes in enumerate(classes) for v in nodes}
    paid_somewhere = [False] * n
    for an in analyses:
        for t, row in an.basis_rules.items():
            for i, x in row.items():
                if x > 0:
                    paid_somewhere[i] = True
    lam = [Fraction(1)] * n
    for nodes in classes:
        if len(nodes) == 1:
            continue
        pot, _, bad = _ratio_potentials(nodes, edges, adj)
        if bad is not None or len(pot) != len(nodes):
            raise ClassifierError("share classes are inconsistent after the cyclic check")
        root = nodes[0]
        first = next(w for w in adj[root] if w in pot and _share(edges, w, root) > 0)
        anchor = _share(edges, root, first)
        for v in nodes:
            lam[v] = anchor * pot[v]
    # order classes: Kahn's algorithm on outranking edges
    succ: dict[int, set[int]] = {c: set() for c in range(len(classes))}
    indeg = [0] * len(classes)
    for u in range(n):
        for w in adj[u]:
            cu, cw = class_of[u], class_of[w]
            if cu != cw and cw not in succ[cu]:
                succ[cu].add(cw)
                indeg[cw] += 1
    def rank(c: int) -> tuple[bool, int]:
        return (not any(paid_somewhere[v] for v in classes[c]), classes[c][0])
    ready = sorted((c for c in range(len(classes)) if indeg[c] == 0), key=rank)
    order = []
    while ready:
        c = ready.pop(0)
        order.append(c)
        for d in succ[c]:
            indeg[d] -= 1
            if indeg[d] == 0:
                ready.append(d)
        ready.sort(key=rank)
    if len(order) != len(classes):
        raise ClassifierError("outranking relation has a cycle after the cyclic check")
    sigma = tuple(sum(1 << v for v in classes[c]) for c in order)
    return WeightSystem(tuple(lam), sigma)


def certificate_rule(basis: BasisForm, omega: WeightSystem, welfare: WelfareFunction) -> DistributionRule:
    return build_rule(RuleSpec("gwsv", omega=omega, ground=basis), welfare)


def classify(inp: ClassifierInput, budget: Optional[int] = None) -> Verdict:
    """Run every stage in order; on failure build and verify an equilibrium-free game."""
    from . import counterexamples as ce

    reduced = reduce_to_budget_balanced(inp)
    analyses = []
    for index, pair in enumerate(reduced.pairs):
        failure, analysis = analyse_pair(pair)
        if failure is not None:
            stage, witness = failure
            witness = {"pair_index": index, **witness}
            game, extra = ce.counterexample_for(stage, inp, analyses + [analysis], witness, budget)
            return _fail(stage, {**witness, **extra}, game, budget)
        analyses.append(analysis)
    hit = check_global_consistency(analyses)
    if hit is not None:
        game, extra = ce.counterexample_for(Stage.GLOBAL_CONSISTENCY, inp, analyses, hit, budget)
        return _fail(Stage.GLOBAL_CONSISTENCY, {**hit, **extra}, game, budget)
    hit = check_cyclic_consistency(analyses)
    if hit is not None:
        game, extra = ce.counterexample_for(Stage.CYCLIC_CONSISTENCY, inp, analyses, hit, budget)
        return _fail(Stage.CYCLIC_CONSISTENCY, {**hit, **extra}, game, budget)
    omega = build_universal_weight_system(analyses)
    for an, pair in zip(analyses, reduced.pairs):
        if certificate_rule(an.basis, omega, pair.welfare) != an.rule:
            raise ClassifierError("universal weight system does not reproduce the input rule")
    return Verdict("pass", omega=omega, grounds=tuple(an.basis for an in analyses))


def _fail(stage: Stage, witness: dict, game: Game, budget: Optional[int]) -> Verdict:
    from .game_engine import find_pne

    count = len(find_pne(game, budget))
    if count:
        raise ClassifierError(f"counterexample for {stage.value} has {count} equilibria")
    return Verdict("fail", stage=stage, witness=witness, game=game, pne_count=0)
