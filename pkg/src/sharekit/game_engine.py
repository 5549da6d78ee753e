"""Finite welfare-sharing games: utilities, pure equilibria, improvement cycles, potentials."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Mapping, Optional, Sequence

from .core_model import (
    BasisForm,
    ModelError,
    PlayerSet,
    Subset,
    WelfareFunction,
    basis_evaluate,
    members,
    mobius_decompose,
)
from .distribution_rules import (
    DistributionRule,
    RuleSpec,
    WeightSystem,
    build_rule,
    gwmc_ground_to_gwsv_ground,
    gwsv_ground_to_gwmc_ground,
)

DEFAULT_BUDGET = 10**7
BUDGET_ENV = "SHAREKIT_BUDGET"

Profile = tuple[int, ...]


class BudgetExceeded(RuntimeError):
    def __init__(self, count: int, budget: int) -> None:
        super().__init__(f"{count} action profiles exceed the enumeration budget of {budget}")
        self.count = count
        self.budget = budget


def default_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    if raw:
        value = int(raw)
        if value <= 0:
            raise ValueError(f"{BUDGET_ENV} must be positive")
        return value
    return DEFAULT_BUDGET


@dataclass(frozen=True)
class Resource:
    id: str
    welfare: str
    rule: str
    v: int = 1

    def __post_init__(self) -> None:
        if not isinstance(self.v, int) or self.v < 1:
            raise ModelError(f"resource {self.id!r} needs a positive integer multiplicity")


@dataclass(frozen=True)
class Game:
    """Players, named welfare functions and rules, resources, and action sets.

    ``actions[i]`` lists player ``i``'s actions, each a frozenset of resource ids.
    A rule is tabulated once per welfare function it is attached to.
    """

    players: PlayerSet
    welfares: Mapping[str, WelfareFunction] = field(hash=False)
    rules: Mapping[str, RuleSpec] = field(hash=False)
    resources: tuple[Resource, ...]
    actions: tuple[tuple[frozenset[str], ...], ...]
    compiled: Mapping[tuple[str, str], DistributionRule] = field(
        default=None, hash=False, compare=False, repr=False
    )

    def __post_init__(self) -> None:
        object.__setattr__(self, "resources", tuple(self.resources))
        object.__setattr__(
            self, "actions", tuple(tuple(frozenset(a) for a in acts) for acts in self.actions)
        )
        ids = [r.id for r in self.resources]
        if len(set(ids)) != len(ids):
            raise ModelError("resource ids must be unique")
        paired: dict[str, str] = {}
        for r in self.resources:
            if r.welfare not in self.welfares:
                raise ModelError(f"resource {r.id!r} references unknown welfare {r.welfare!r}")
            if r.rule not in self.rules:
                raise ModelError(f"resource {r.id!r} references unknown rule {r.rule!r}")
            if paired.setdefault(r.welfare, r.rule) != r.rule:
                raise ModelError(f"welfare {r.welfare!r} is paired with more than one rule")
        for name, w in self.welfares.items():
            if w.players != self.players:
                raise ModelError(f"welfare {name!r} is over a different player set")
        compiled = {}
        for r in self.resources:
            key = (r.rule, r.welfare)
            if key not in compiled:
                compiled[key] = build_rule(self.rules[r.rule], self.welfares[r.welfare])
        object.__setattr__(self, "compiled", compiled)
        if len(self.actions) != self.players.n:
            raise ModelError("every player needs an action list")
        known = set(ids)
        for i, acts in enumerate(self.actions):
            if not acts:
                raise ModelError(f"player {self.players.ids[i]!r} has no actions")
            for a in acts:
                if not a <= known:
                    raise ModelError(f"player {self.players.ids[i]!r} uses an unknown resource")

    @property
    def resource_index(self) -> dict[str, int]:
        return {r.id: k for k, r in enumerate(self.resources)}

    def profile_count(self) -> int:
        total = 1
        for acts in self.actions:
            total *= len(acts)
        return total


class _Evaluator:
    """Precomputed per-resource lookups shared by the enumeration routines."""

    def __init__(self, g: Game) -> None:
        self.g = g
        index = g.resource_index
        self.n = g.players.n
        self.acts = [[tuple(sorted(index[r] for r in a)) for a in acts] for acts in g.actions]
        self.rules = [g.compiled[(r.rule, r.welfare)] for r in g.resources]
        self.welf = [g.welfares[r.welfare] for r in g.resources]
        self.v = [r.v for r in g.resources]

    def loads(self, profile: Profile) -> list[Subset]:
        loads = [0] * len(self.v)
        for i, choice in enumerate(profile):
            for r in self.acts[i][choice]:
                loads[r] |= 1 << i
        return loads

    def utility_given(self, loads: Sequence[Subset], i: int, action: int) -> Fraction:
        """Utility of ``i`` playing ``action`` against the other players in ``loads``."""
        bi = 1 << i
        total = Fraction(0)
        for r in self.acts[i][action]:
            total += self.v[r] * self.rules[r](i, (loads[r] & ~bi) | bi)
        return total

    def deviations(self, profile: Profile, loads: Sequence[Subset], i: int) -> list[Fraction]:
        return [self.utility_given(loads, i, b) for b in range(len(self.acts[i]))]


def _check_budget(g: Game, budget: Optional[int]) -> None:
    budget = default_budget() if budget is None else budget
    count = g.profile_count()
    if count > budget:
        raise BudgetExceeded(count, budget)


def utility(g: Game, profile: Profile, i: int) -> Fraction:
    """``sum over r in a_i of v_r * f_r(i, {a}_r)``."""
    ev = _Evaluator(g)
    return ev.utility_given(ev.loads(profile), i, profile[i])


def welfare_of_profile(g: Game, profile: Profile) -> Fraction:
    """``sum over resources of v_r * W_r({a}_r)``."""
    ev = _Evaluator(g)
    loads = ev.loads(profile)
    return sum((ev.v[r] * ev.welf[r](loads[r]) for r in range(len(loads))), Fraction(0))


def all_profiles(g: Game) -> list[Profile]:
    return list(product(*(range(len(acts)) for acts in g.actions)))


def find_pne(g: Game, budget: Optional[int] = None) -> list[Profile]:
    """Every pure Nash equilibrium, in lexicographic action-index order."""
    _check_budget(g, budget)
    ev = _Evaluator(g)
    out = []
    for profile in product(*(range(len(acts)) for acts in g.actions)):
        loads = ev.loads(profile)
        stable = True
        for i in range(ev.n):
            if len(ev.acts[i]) == 1:
                continue
            current = ev.utility_given(loads, i, profile[i])
            if any(ev.utility_given(loads, i, b) > current
                   for b in range(len(ev.acts[i])) if b != profile[i]):
                stable = False
                break
        if stable:
            out.append(profile)
    return out


@dataclass(frozen=True)
class CycleStep:
    profile: Profile
    player: int
    action: int


def _best_response_moves(ev: _Evaluator, profile: Profile) -> list[tuple[int, int]]:
    """(player, best action) for every player with a strict improvement; lowest index wins ties."""
    loads = ev.loads(profile)
    moves = []
    for i in range(ev.n):
        if len(ev.acts[i]) == 1:
            continue
        utils = ev.deviations(profile, loads, i)
        best = max(utils)
        if best > utils[profile[i]]:
            moves.append((i, utils.index(best)))
    return moves


def best_response_cycle(g: Game, budget: Optional[int] = None) -> Optional[list[CycleStep]]:
    """A closed walk of strict best-response moves, or None when the move graph is acyclic.

    The move graph links a profile to the profile reached when one player
    switches to a best response that strictly improves their utility.
    """
    _check_budget(g, budget)
    ev = _Evaluator(g)
    edges: dict[Profile, list[tuple[int, int]]] = {}

    def moves(p: Profile) -> list[tuple[int, int]]:
        if p not in edges:
            edges[p] = _best_response_moves(ev, p)
        return edges[p]

    state: dict[Profile, int] = {}  # 1 on stack, 2 finished
    for start in product(*(range(len(acts)) for acts in g.actions)):
        if start in state:
            continue
        stack: list[tuple[Profile, int]] = [(start, 0)]
        path: list[Profile] = [start]
        state[start] = 1
        while stack:
            p, k = stack[-1]
            ms = moves(p)
            if k == len(ms):
                stack.pop()
                path.pop()
                state[p] = 2
                continue
            stack[-1] = (p, k + 1)
            i, b = ms[k]
            nxt = p[:i] + (b,) + p[i + 1:]
            mark = state.get(nxt)
            if mark == 1:
                begin = path.index(nxt)
                loop = path[begin:] + [nxt]
                steps = []
                for a, c in zip(loop, loop[1:]):
                    player = next(x for x in range(ev.n) if a[x] != c[x])
                    steps.append(CycleStep(a, player, c[player]))
                return steps
            if mark is None:
                state[nxt] = 1
                stack.append((nxt, 0))
                path.append(nxt)
    return None


def local_potential_closed(ground_mc: BasisForm, omega: WeightSystem, s: Subset) -> tuple[Fraction, ...]:
    """Component ``k`` (1-based) is the marginal-type ground welfare of ``s`` minus blocks ``< m-k+1``."""
    m = omega.m
    return tuple(basis_evaluate(ground_mc, omega.residual(s, m - k)) for k in range(1, m + 1))


def local_potential_recursive(ground_sv: BasisForm, omega: WeightSystem, s: Subset) -> tuple[Fraction, ...]:
    """Same vector computed from the Shapley-type ground welfare by recursion over removals.

    ``P(X) = (W'(X) - W'(X - top) + sum_{i in top} lam_i P(X - i)) / lam(top)``
    where ``top`` is the top-priority part of ``X`` and ``P`` of the empty set is 0.
    """
    cache: dict[Subset, Fraction] = {}

    def p(x: Subset) -> Fraction:
        if x == 0:
            return Fraction(0)
        if x in cache:
            return cache[x]
        top = omega.top(x)
        total = basis_evaluate(ground_sv, x) - basis_evaluate(ground_sv, x & ~top)
        for i in members(top):
            total += omega.lam[i] * p(x & ~(1 << i))
        cache[x] = total / omega.weight(top)
        return cache[x]

    m = omega.m
    return tuple(p(omega.residual(s, m - k)) for k in range(1, m + 1))


def _mc_grounds(g: Game, omega: WeightSystem) -> list[BasisForm]:
    """Marginal-type ground welfare per resource; rejects rules outside the common-omega families."""
    cache: dict[tuple[str, str], BasisForm] = {}
    out = []
    for r in g.resources:
        key = (r.rule, r.welfare)
        if key not in cache:
            spec = g.rules[r.rule]
            own = spec.weight_system(g.players.n)
            if own is None:
                raise ModelError(f"rule {r.rule!r} is not a Shapley- or marginal-type rule")
            if own != omega:
                raise ModelError(f"rule {r.rule!r} uses a different weight system")
            ground = spec.ground if spec.ground is not None else mobius_decompose(g.welfares[r.welfare])
            cache[key] = gwsv_ground_to_gwmc_ground(ground, omega) if spec.shapley_like else ground
        out.append(cache[key])
    return out


def global_potential(g: Game, omega: WeightSystem, profile: Profile) -> tuple[Fraction, ...]:
    """``sum_r v_r * phi_r({a}_r)`` using each resource's closed-form local potential."""
    grounds = _mc_grounds(g, omega)
    ev = _Evaluator(g)
    loads = ev.loads(profile)
    total = [Fraction(0)] * omega.m
    for r, ground in enumerate(grounds):
        for k, x in enumerate(local_potential_closed(ground, omega, loads[r])):
            total[k] += ev.v[r] * x
    return tuple(total)


def global_potential_recursive(g: Game, omega: WeightSystem, profile: Profile) -> tuple[Fraction, ...]:
    """:func:`global_potential` evaluated through the recursive local form."""
    grounds = [gwmc_ground_to_gwsv_ground(b, omega) for b in _mc_grounds(g, omega)]
    ev = _Evaluator(g)
    loads = ev.loads(profile)
    total = [Fraction(0)] * omega.m
    for r, ground in enumerate(grounds):
        for k, x in enumerate(local_potential_recursive(ground, omega, loads[r])):
            total[k] += ev.v[r] * x
    return tuple(total)


@dataclass(frozen=True)
class PotentialViolation:
    profile: Profile
    player: int
    action: int
    utility_change: Fraction
    potential_change: tuple[Fraction, ...]


def verify_potential_property(
    g: Game, omega: WeightSystem, budget: Optional[int] = None
) -> tuple[bool, Optional[PotentialViolation]]:
    """Check every unilateral deviation against the vector potential.

    For a player in priority block ``b`` the tracked component is ``m - b``
    (0-based): all earlier components must not move, and the utility change
    must equal ``lam_i`` times the change of the tracked component.
    """
    _check_budget(g, budget)
    ev = _Evaluator(g)
    m = omega.m
    phi: dict[Profile, tuple[Fraction, ...]] = {}

    def pot(p: Profile) -> tuple[Fraction, ...]:
        if p not in phi:
            phi[p] = global_potential(g, omega, p)
        return phi[p]

    for profile in product(*(range(len(acts)) for acts in g.actions)):
        loads = ev.loads(profile)
        for i in range(ev.n):
            tracked = m - 1 - omega.block_of(i)
            u0 = ev.utility_given(loads, i, profile[i])
            for b in range(len(ev.acts[i])):
                if b == profile[i]:
                    continue
                alt = profile[:i] + (b,) + profile[i + 1:]
                du = ev.utility_given(loads, i, b) - u0
                dphi = tuple(x - y for x, y in zip(pot(alt), pot(profile)))
                ok = all(x == 0 for x in dphi[:tracked]) and du == omega.lam[i] * dphi[tracked]
                if not ok:
                    return False, PotentialViolation(profile, i, b, du, dphi)
    return True, None


def potential_maximizers(g: Game, omega: WeightSystem, budget: Optional[int] = None) -> list[Profile]:
    """Profiles maximizing the potential lexicographically, component 1 first.

    A deviation by a block-``b`` player leaves components ``1..m-b`` unchanged,
    so comparing from component 1 upward makes every maximizer an equilibrium.
    """
    _check_budget(g, budget)
    best: Optional[tuple[Fraction, ...]] = None
    out: list[Profile] = []
    for profile in all_profiles(g):
        key = global_potential(g, omega, profile)
        if best is None or key > best:
            best, out = key, [profile]
        elif key == best:
            out.append(profile)
    return out
