"""Distribution-rule families, weight systems and the ground-welfare transform.

Shapley-type families are evaluated through the unanimity basis: decompose the
ground welfare once and add up the per-coalition basis rules. The closed-form
expressions in :func:`direct_share` are kept as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations
from math import factorial
from typing import Mapping, Optional, Sequence

from .core_model import (
    BasisForm,
    ModelError,
    PlayerSet,
    Subset,
    WelfareFunction,
    basis_to_welfare,
    members,
    mobius_decompose,
    submasks,
)

FAMILIES = (
    "equal_share",
    "proportional",
    "shapley",
    "weighted_shapley",
    "gwsv",
    "mc",
    "wmc",
    "gwmc",
    "table",
)
_WEIGHTED = ("proportional", "weighted_shapley", "wmc")
_SYSTEM = ("gwsv", "gwmc")
_SHAPLEY_LIKE = ("shapley", "weighted_shapley", "gwsv")
_MARGINAL_LIKE = ("mc", "wmc", "gwmc")


@dataclass(frozen=True)
class WeightSystem:
    """Positive player weights plus an ordered partition into priority blocks.

    Block 0 has the highest priority: in a coalition ``T`` only the members
    lying in the earliest block that meets ``T`` are paid.
    """

    lam: tuple[Fraction, ...]
    sigma: tuple[Subset, ...]

    def __post_init__(self) -> None:
        lam = tuple(Fraction(x) for x in self.lam)
        sigma = tuple(self.sigma)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sigma", sigma)
        if any(x <= 0 for x in lam):
            raise ModelError("player weights must be strictly positive")
        seen = 0
        for block in sigma:
            if block & seen:
                raise ModelError("priority blocks must be disjoint")
            seen |= block
        if seen != (1 << len(lam)) - 1:
            raise ModelError("priority blocks must cover every player")

    @classmethod
    def uniform(cls, n: int) -> WeightSystem:
        return cls(tuple(Fraction(1) for _ in range(n)), ((1 << n) - 1,))

    @classmethod
    def single_block(cls, weights: Sequence[Fraction]) -> WeightSystem:
        return cls(tuple(weights), ((1 << len(weights)) - 1,))

    @property
    def m(self) -> int:
        return len(self.sigma)

    def top(self, mask: Subset) -> Subset:
        """Members of ``mask`` in the earliest block that meets it (0 for the empty set)."""
        for block in self.sigma:
            if block & mask:
                return block & mask
        return 0

    def block_of(self, i: int) -> int:
        for k, block in enumerate(self.sigma):
            if block >> i & 1:
                return k
        raise ModelError(f"player index {i} is in no block")

    def residual(self, mask: Subset, k: int) -> Subset:
        """``mask`` with the members of blocks ``0..k-1`` removed."""
        for block in self.sigma[:k]:
            mask &= ~block
        return mask

    def weight(self, mask: Subset) -> Fraction:
        return sum((self.lam[k] for k in members(mask)), Fraction(0))


@dataclass(frozen=True)
class RuleSpec:
    """A named rule family with its parameters, or an explicit share table.

    ``weights`` parameterises the proportional and single-block weighted
    families; ``omega`` and ``ground`` parameterise the priority families.
    A missing ``ground`` means the welfare the rule is attached to.
    """

    family: str
    weights: Optional[tuple[Fraction, ...]] = None
    omega: Optional[WeightSystem] = None
    ground: Optional[BasisForm] = None
    table: Optional[Mapping[tuple[int, Subset], Fraction]] = field(default=None, hash=False)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ModelError(f"unknown rule family {self.family!r}")
        if self.family in _WEIGHTED:
            if self.weights is None:
                raise ModelError(f"{self.family} needs player weights")
            weights = tuple(Fraction(w) for w in self.weights)
            if any(w <= 0 for w in weights):
                raise ModelError("player weights must be strictly positive")
            object.__setattr__(self, "weights", weights)
        if self.family in _SYSTEM and self.omega is None:
            raise ModelError(f"{self.family} needs a weight system")
        if self.family == "table":
            if self.table is None:
                raise ModelError("an explicit rule needs a share table")
            clean = {}
            for (i, mask), value in self.table.items():
                if not mask >> i & 1:
                    raise ModelError("explicit shares are only given for members of the coalition")
                clean[(i, mask)] = Fraction(value)
            object.__setattr__(self, "table", clean)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RuleSpec):
            return NotImplemented
        return (
            self.family == other.family
            and self.weights == other.weights
            and self.omega == other.omega
            and self.ground == other.ground
            and (dict(self.table) if self.table is not None else None)
            == (dict(other.table) if other.table is not None else None)
        )

    __hash__ = None  # type: ignore[assignment]

    def weight_system(self, n: int) -> Optional[WeightSystem]:
        """The weight system behind a Shapley- or marginal-type family, else None."""
        if self.family in ("shapley", "mc"):
            return WeightSystem.uniform(n)
        if self.family in ("weighted_shapley", "wmc"):
            return WeightSystem.single_block(self.weights)
        if self.family in _SYSTEM:
            return self.omega
        return None

    @property
    def shapley_like(self) -> bool:
        return self.family in _SHAPLEY_LIKE

    @property
    def marginal_like(self) -> bool:
        return self.family in _MARGINAL_LIKE


@dataclass(frozen=True)
class DistributionRule:
    """Fully tabulated shares ``f(i, S)`` for every ``i`` in ``S``."""

    players: PlayerSet
    shares: Mapping[tuple[int, Subset], Fraction] = field(hash=False, compare=False)
    spec: RuleSpec = field(compare=False)

    def __call__(self, i: int, mask: Subset) -> Fraction:
        if not mask >> i & 1:
            return Fraction(0)
        return self.shares[(i, mask)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DistributionRule):
            return NotImplemented
        return self.players == other.players and dict(self.shares) == dict(other.shares)

    __hash__ = None  # type: ignore[assignment]

    def row(self, mask: Subset) -> tuple[Fraction, ...]:
        return tuple(self.shares[(i, mask)] for i in members(mask))


def basis_rule_gwsv(t: Subset, omega: WeightSystem, i: int, s: Subset) -> Fraction:
    """Unanimity-game share: weight-proportional split among the top-priority members of ``t``."""
    if t == 0:
        raise ModelError("basis rules need a nonempty coalition")
    if t & ~s or not t >> i & 1:
        return Fraction(0)
    top = omega.top(t)
    if not top >> i & 1:
        return Fraction(0)
    return omega.lam[i] / omega.weight(top)


def basis_rule_gwmc(t: Subset, omega: WeightSystem, i: int, s: Subset) -> Fraction:
    """Unanimity-game marginal share: ``lambda_i`` for top-priority members of ``t``."""
    if t == 0:
        raise ModelError("basis rules need a nonempty coalition")
    if t & ~s or not omega.top(t) >> i & 1:
        return Fraction(0)
    return omega.lam[i]


def _check_players(spec: RuleSpec, players: PlayerSet) -> None:
    n = players.n
    if spec.weights is not None and len(spec.weights) != n:
        raise ModelError("weight vector length does not match the player set")
    if spec.omega is not None and len(spec.omega.lam) != n:
        raise ModelError("weight system does not match the player set")
    if spec.ground is not None and spec.ground.players != players:
        raise ModelError("ground welfare is over a different player set")


def _ground(spec: RuleSpec, w: WelfareFunction) -> BasisForm:
    return spec.ground if spec.ground is not None else mobius_decompose(w)


def _basis_share(spec: RuleSpec, basis: BasisForm, omega: WeightSystem, i: int, s: Subset) -> Fraction:
    rule = basis_rule_gwsv if spec.shapley_like else basis_rule_gwmc
    total = Fraction(0)
    for t, q in basis.coefficients.items():
        if t & ~s == 0 and t >> i & 1:
            total += q * rule(t, omega, i, s)
    return total


def eval_rule(spec: RuleSpec, w: WelfareFunction, i: int, s: Subset) -> Fraction:
    """Share of player ``i`` when coalition ``s`` uses a resource with welfare ``w``."""
    _check_players(spec, w.players)
    if not s >> i & 1:
        return Fraction(0)
    fam = spec.family
    if fam == "equal_share":
        return w(s) / s.bit_count()
    if fam == "proportional":
        return spec.weights[i] / sum(spec.weights[k] for k in members(s)) * w(s)
    if fam == "table":
        try:
            return spec.table[(i, s)]
        except KeyError:
            raise ModelError(
                f"explicit table has no share for player {w.players.ids[i]} in "
                f"{{{w.players.format(s)}}}"
            ) from None
    omega = spec.weight_system(w.players.n)
    return _basis_share(spec, _ground(spec, w), omega, i, s)


def build_rule(spec: RuleSpec, w: WelfareFunction) -> DistributionRule:
    """Tabulate ``spec`` against ``w`` for every player and coalition."""
    _check_players(spec, w.players)
    players = w.players
    shares: dict[tuple[int, Subset], Fraction] = {}
    if spec.family in ("equal_share", "proportional", "table"):
        for s in range(1, 1 << players.n):
            for i in members(s):
                shares[(i, s)] = eval_rule(spec, w, i, s)
        return DistributionRule(players, shares, spec)
    basis = _ground(spec, w)
    omega = spec.weight_system(players.n)
    rule = basis_rule_gwsv if spec.shapley_like else basis_rule_gwmc
    # per-coalition unit shares, then spread each to all supersets
    acc = [dict() for _ in range(1 << players.n)]
    for t, q in basis.coefficients.items():
        contrib = {i: q * rule(t, omega, i, t) for i in members(t)}
        for s in range(1 << players.n):
            if t & ~s == 0:
                row = acc[s]
                for i, v in contrib.items():
                    row[i] = row.get(i, Fraction(0)) + v
    for s in range(1, 1 << players.n):
        row = acc[s]
        for i in members(s):
            shares[(i, s)] = row.get(i, Fraction(0))
    return DistributionRule(players, shares, spec)


def table_rule(players: PlayerSet, shares: Mapping[tuple[int, Subset], Fraction]) -> DistributionRule:
    """Wrap an explicit share table; missing (player, coalition) entries read as 0."""
    full = {}
    for s in range(1, 1 << players.n):
        for i in members(s):
            full[(i, s)] = Fraction(shares.get((i, s), 0))
    spec = RuleSpec("table", table=full)
    return DistributionRule(players, full, spec)


def _q_direct(w: WelfareFunction, t: Subset) -> Fraction:
    st = t.bit_count()
    return sum(
        ((-1) ** (st - r.bit_count()) * w(r) for r in submasks(t)), Fraction(0)
    )


def direct_share(spec: RuleSpec, w: WelfareFunction, i: int, s: Subset) -> Fraction:
    """Closed-form share straight from the family's defining expression (no basis)."""
    _check_players(spec, w.players)
    if not s >> i & 1:
        return Fraction(0)
    fam = spec.family
    ground = basis_to_welfare(spec.ground) if spec.ground is not None else w
    bi = 1 << i
    if fam in ("equal_share", "proportional", "table"):
        return eval_rule(spec, w, i, s)
    if fam == "shapley":
        ns = s.bit_count()
        total = Fraction(0)
        for t in submasks(s & ~bi):
            nt = t.bit_count()
            coef = Fraction(factorial(nt) * factorial(ns - nt - 1), factorial(ns))
            total += coef * (ground(t | bi) - ground(t))
        return total
    if fam == "mc":
        return ground(s) - ground(s & ~bi)
    if fam == "wmc":
        return spec.weights[i] * (ground(s) - ground(s & ~bi))
    if fam == "weighted_shapley":
        wts = spec.weights
        total = Fraction(0)
        for t in submasks(s):
            if t & bi:
                total += wts[i] / sum(wts[k] for k in members(t)) * _q_direct(ground, t)
        return total
    omega = spec.omega
    if fam == "gwsv":
        total = Fraction(0)
        for t in submasks(s):
            top = omega.top(t)
            if top & bi:
                total += omega.lam[i] / omega.weight(top) * _q_direct(ground, t)
        return total
    # gwmc: weighted marginal contribution once higher blocks are removed
    k = omega.block_of(i)
    rest = omega.residual(s, k)
    return omega.lam[i] * (ground(rest) - ground(rest & ~bi))


def shapley_by_permutations(w: WelfareFunction, i: int, s: Subset) -> Fraction:
    """Average marginal contribution of ``i`` over every arrival order of ``s``."""
    order_members = members(s)
    total = Fraction(0)
    count = 0
    for perm in permutations(order_members):
        before = 0
        for k in perm:
            if k == i:
                total += w(before | (1 << k)) - w(before)
                break
            before |= 1 << k
        count += 1
    return total / count


def actual_welfare(f: DistributionRule) -> WelfareFunction:
    """Welfare the rule actually hands out: ``W'(S) = sum_{i in S} f(i, S)``."""
    return WelfareFunction.from_function(
        f.players, lambda s: sum((f(i, s) for i in members(s)), Fraction(0))
    )


def is_budget_balanced(f: DistributionRule, w: WelfareFunction) -> bool:
    return actual_welfare(f) == w


def gwsv_ground_to_gwmc_ground(ground: BasisForm, omega: WeightSystem) -> BasisForm:
    """Divide each ``q_T`` by the weight of the top-priority part of ``T``.

    The Shapley-type rule on the input equals the marginal-type rule on the output.
    """
    return BasisForm(
        ground.players,
        {t: q / omega.weight(omega.top(t)) for t, q in ground.coefficients.items()},
    )


def gwmc_ground_to_gwsv_ground(ground: BasisForm, omega: WeightSystem) -> BasisForm:
    """Inverse of :func:`gwsv_ground_to_gwmc_ground`."""
    return BasisForm(
        ground.players,
        {t: q * omega.weight(omega.top(t)) for t, q in ground.coefficients.items()},
    )
