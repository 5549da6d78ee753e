"""Players, subsets, welfare functions and their unanimity-basis form.

Subsets are plain ``int`` bitmasks over a :class:`PlayerSet`: bit ``k`` set
means the player at canonical index ``k`` is a member. All values are exact
:class:`fractions.Fraction` numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

Rational = Fraction
Subset = int

MAX_PLAYERS = 16
_FORBIDDEN_LABEL_CHARS = frozenset(",|")


class ModelError(ValueError):
    """Raised when a model object would violate one of its invariants."""


def members(mask: Subset) -> tuple[int, ...]:
    """Player indices of ``mask`` in increasing order."""
    out = []
    k = 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return tuple(out)


def size(mask: Subset) -> int:
    return mask.bit_count()


def bit(i: int) -> Subset:
    return 1 << i


def is_subset(a: Subset, b: Subset) -> bool:
    return a & ~b == 0


def subset_key(mask: Subset) -> tuple[int, tuple[int, ...]]:
    """Sort key giving the canonical (size, lexicographic) scan order."""
    return (mask.bit_count(), members(mask))


def ordered_subsets(universe: Subset) -> list[Subset]:
    """All subsets of ``universe`` in (size, lexicographic) order, starting with the empty set."""
    return sorted(submasks(universe), key=subset_key)


def submasks(mask: Subset) -> Iterator[Subset]:
    """Every subset of ``mask`` (including ``mask`` and 0), in no particular order."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


@dataclass(frozen=True)
class PlayerSet:
    """Ordered, duplicate-free player labels; a label's position is its index."""

    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        ids = tuple(self.ids)
        object.__setattr__(self, "ids", ids)
        if not ids:
            raise ModelError("a player set needs at least one player")
        if len(ids) > MAX_PLAYERS:
            raise ModelError(f"at most {MAX_PLAYERS} players are supported, got {len(ids)}")
        if len(set(ids)) != len(ids):
            raise ModelError("player labels must be unique")
        for label in ids:
            if not isinstance(label, str) or not label or _FORBIDDEN_LABEL_CHARS & set(label):
                raise ModelError(f"invalid player label {label!r}")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def full(self) -> Subset:
        return (1 << len(self.ids)) - 1

    def index(self, label: str) -> int:
        try:
            return self.ids.index(label)
        except ValueError:
            raise ModelError(f"unknown player {label!r}") from None

    def mask(self, labels: Iterable[str]) -> Subset:
        out = 0
        for label in labels:
            out |= 1 << self.index(label)
        return out

    def labels(self, mask: Subset) -> list[str]:
        return [self.ids[k] for k in members(mask)]

    def format(self, mask: Subset) -> str:
        """Canonical text form: sorted labels joined by commas; the empty set is ``""``."""
        return ",".join(sorted(self.labels(mask)))

    def parse(self, text: str) -> Subset:
        text = text.strip()
        if not text:
            return 0
        parts = [p.strip() for p in text.split(",")]
        if len(set(parts)) != len(parts):
            raise ModelError(f"repeated player in subset {text!r}")
        return self.mask(parts)


@dataclass(frozen=True)
class WelfareFunction:
    """Total map from subsets to rationals, stored as a table indexed by bitmask."""

    players: PlayerSet
    values: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        values = tuple(Fraction(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if len(values) != 1 << self.players.n:
            raise ModelError("welfare table must cover every subset")
        if values[0] != 0:
            raise ModelError("welfare of the empty set must be 0")

    @classmethod
    def from_mapping(cls, players: PlayerSet, table: Mapping[Subset, Fraction]) -> WelfareFunction:
        """Build from a partial map; missing subsets default to 0."""
        values = [Fraction(0)] * (1 << players.n)
        for mask, value in table.items():
            values[mask] = Fraction(value)
        return cls(players, tuple(values))

    @classmethod
    def from_function(cls, players: PlayerSet, fn) -> WelfareFunction:
        return cls(players, tuple(Fraction(fn(mask)) for mask in range(1 << players.n)))

    def __call__(self, mask: Subset) -> Fraction:
        return self.values[mask]


@dataclass(frozen=True)
class BasisForm:
    """Nonzero unanimity-basis coefficients ``q_T`` keyed by coalition bitmask."""

    players: PlayerSet
    coefficients: Mapping[Subset, Fraction] = field(hash=False)

    def __post_init__(self) -> None:
        full = self.players.full
        clean: dict[Subset, Fraction] = {}
        for mask in sorted(self.coefficients, key=subset_key):
            value = Fraction(self.coefficients[mask])
            if mask == 0:
                raise ModelError("the empty coalition cannot carry a basis coefficient")
            if mask & ~full:
                raise ModelError("coalition outside the player set")
            if value == 0:
                raise ModelError("basis coefficients must be nonzero")
            clean[mask] = value
        object.__setattr__(self, "coefficients", clean)

    @classmethod
    def pruned(cls, players: PlayerSet, coefficients: Mapping[Subset, Fraction]) -> BasisForm:
        """Like the constructor, but silently drops zero coefficients."""
        return cls(players, {m: Fraction(v) for m, v in coefficients.items() if v != 0})

    @property
    def support(self) -> tuple[Subset, ...]:
        """Support coalitions in (size, lexicographic) order."""
        return tuple(self.coefficients)

    def q(self, mask: Subset) -> Fraction:
        return self.coefficients.get(mask, Fraction(0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BasisForm):
            return NotImplemented
        return self.players == other.players and dict(self.coefficients) == dict(other.coefficients)


def mobius_decompose(w: WelfareFunction) -> BasisForm:
    """Unanimity-basis coefficients ``q_T = sum_{R <= T} (-1)^{|T|-|R|} W(R)``.

    Uses the in-place subset-difference transform, one pass per player.
    """
    if w.values[0] != 0:
        raise ModelError("welfare of the empty set must be 0")
    table = list(w.values)
    for k in range(w.players.n):
        b = 1 << k
        for mask in range(len(table)):
            if mask & b:
                table[mask] -= table[mask ^ b]
    return BasisForm.pruned(w.players, {m: v for m, v in enumerate(table) if m})


def basis_evaluate(basis: BasisForm, mask: Subset) -> Fraction:
    """``W(S)`` as the sum of coefficients of support coalitions inside ``S``."""
    return sum((q for t, q in basis.coefficients.items() if t & ~mask == 0), Fraction(0))


def basis_to_welfare(basis: BasisForm) -> WelfareFunction:
    table = [Fraction(0)] * (1 << basis.players.n)
    for t, q in basis.coefficients.items():
        table[t] += q
    for k in range(basis.players.n):
        b = 1 << k
        for mask in range(len(table)):
            if mask & b:
                table[mask] += table[mask ^ b]
    return WelfareFunction(basis.players, tuple(table))


def unanimity(players: PlayerSet, coalition: Subset, scale: Fraction = Fraction(1)) -> WelfareFunction:
    """Inclusion function of ``coalition``: ``scale`` on supersets, 0 elsewhere."""
    return WelfareFunction.from_function(
        players, lambda m: scale if coalition & ~m == 0 else 0
    )


def contributing_coalitions(basis: BasisForm, mask: Subset) -> list[Subset]:
    """Support coalitions contained in ``mask``."""
    return [t for t in basis.support if t & ~mask == 0]


def contributing_players(basis: BasisForm, mask: Subset) -> Subset:
    """Union of the support coalitions contained in ``mask``."""
    out = 0
    for t in contributing_coalitions(basis, mask):
        out |= t
    return out


def coalitions_containing_pair(basis: BasisForm, i: int, j: int) -> list[Subset]:
    pair = (1 << i) | (1 << j)
    return [t for t in basis.support if t & pair == pair]


def minimal_elements(family: Sequence[Subset]) -> list[Subset]:
    """Members of ``family`` with no strict subset in ``family``, in input order."""
    return [
        t for t in family
        if not any(u != t and u & ~t == 0 for u in family)
    ]


def min_partition(family: Sequence[Subset]) -> list[list[Subset]]:
    """Peel off minimal elements repeatedly; each peel is one block."""
    if len(set(family)) != len(family):
        raise ModelError("min_partition needs a family without duplicates")
    remaining = list(family)
    blocks = []
    while remaining:
        block = minimal_elements(remaining)
        blocks.append(block)
        taken = set(block)
        remaining = [t for t in remaining if t not in taken]
    return blocks
