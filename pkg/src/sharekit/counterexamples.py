"""Games without a pure equilibrium, built from a failed necessary condition.

Every generator checks its premise, constructs the game, and then confirms by
exhaustive enumeration that no pure Nash equilibrium exists before returning.
Two-player gadgets share one builder: resources carry a fixture set, a
welfare/rule pair and a multiplicity group, and free group multiplicities are
chosen by exact elimination over the strict deviation inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Any, Optional, Sequence

from .core_model import (
    BasisForm,
    ModelError,
    PlayerSet,
    Subset,
    WelfareFunction,
    contributing_players,
    members,
    mobius_decompose,
)
from .distribution_rules import DistributionRule, RuleSpec, actual_welfare, build_rule
from .game_engine import Game, Resource, find_pne

Form = tuple[Fraction, ...]


class PremiseError(ValueError):
    """The witness does not satisfy the generator's premise inequality."""


class ConstructionError(RuntimeError):
    """A constructed game failed verification; indicates a bug."""


# ---------------------------------------------------------------- solving


def solve_strict(forms: Sequence[Form]) -> Optional[tuple[int, ...]]:
    """Positive integers ``x`` with ``sum_k c_k x_k > 0`` for every form ``c``.

    The forms are homogeneous, so ``x_0`` is pinned to 1 and the remaining
    variables are removed by Fourier-Motzkin elimination. Values are chosen
    back to front: the midpoint of a bounded open interval, ``lo + 1`` when
    unbounded above. The result is scaled to coprime integers.
    """
    if not forms:
        return (1,)
    dim = len(forms[0])
    # constraint: const + sum coeffs[k-1] * x_k > 0 over x_1..x_{dim-1}
    cons = [(Fraction(c[0]), tuple(Fraction(x) for x in c[1:])) for c in forms]
    for k in range(1, dim):
        unit = tuple(Fraction(int(m == k - 1)) for m in range(dim - 1))
        cons.append((Fraction(0), unit))
    levels = [cons]
    for k in range(dim - 2, -1, -1):
        lower, upper, rest = [], [], []
        for c in levels[-1]:
            a = c[1][k]
            (lower if a > 0 else upper if a < 0 else rest).append(c)
        for lo in lower:
            for up in upper:
                sl, su = 1 / lo[1][k], 1 / -up[1][k]
                rest.append((
                    lo[0] * sl + up[0] * su,
                    tuple(x * sl + y * su for x, y in zip(lo[1], up[1])),
                ))
        levels.append(rest)
    if any(c[0] <= 0 for c in levels[-1]):
        return None
    values: list[Fraction] = []
    for k in range(dim - 1):
        lo, hi = None, None
        for const, coeffs in levels[dim - 2 - k]:
            a = coeffs[k]
            if a == 0:
                continue
            bound = -(const + sum(coeffs[m] * values[m] for m in range(k))) / a
            if a > 0:
                lo = bound if lo is None else max(lo, bound)
            else:
                hi = bound if hi is None else min(hi, bound)
        values.append(_pick(lo, hi))
    return _integral([Fraction(1)] + values)


def _pick(lo: Optional[Fraction], hi: Optional[Fraction]) -> Fraction:
    lo = Fraction(0) if lo is None else lo
    if hi is None:
        return lo + 1
    if not lo < hi:
        raise ConstructionError("elimination produced an empty interval")
    return (lo + hi) / 2


def _integral(values: Sequence[Fraction]) -> tuple[int, ...]:
    scale = lcm(*(v.denominator for v in values))
    ints = [int(v * scale) for v in values]
    g = gcd(*ints)
    return tuple(x // g for x in ints)


# ---------------------------------------------------------------- gadget builder


@dataclass(frozen=True)
class _Slot:
    rid: str
    pair: int
    fixed: Subset
    group: int
    base: int


class _Builder:
    """Resources of a gadget plus the moving players' raw actions."""

    def __init__(self, pairs: Sequence[tuple[WelfareFunction, DistributionRule]], groups: int = 1) -> None:
        self.players = pairs[0][0].players
        self.pairs = list(pairs)
        self.groups = groups
        self.slots: list[_Slot] = []
        self.moves: dict[int, list[set[str]]] = {}

    def add(self, rid: str, pair: int, fixed: Subset, group: int = 0, base: int = 1) -> str:
        if base <= 0:
            raise ConstructionError("multiplicity base must be positive")
        self.slots.append(_Slot(rid, pair, fixed, group, base))
        return rid

    def mandatory(self, p: int) -> frozenset[str]:
        return frozenset(s.rid for s in self.slots if s.fixed >> p & 1)

    def action(self, p: int, rids) -> frozenset[str]:
        return frozenset(rids) | self.mandatory(p)

    def utility_form(self, p: int, choice: dict[int, frozenset[str]]) -> Form:
        """Utility of ``p`` as a linear form in the group multiplicities."""
        out = [Fraction(0)] * self.groups
        for s in self.slots:
            load = s.fixed
            for q, rids in choice.items():
                if s.rid in rids:
                    load |= 1 << q
            if load >> p & 1:
                out[s.group] += s.base * self.pairs[s.pair][1](p, load)
        return tuple(out)

    def game(self, values: Sequence[int]) -> Game:
        welfares, rules, names = {}, {}, {}
        for k, (w, f) in enumerate(self.pairs):
            if any(s.pair == k for s in self.slots):
                names[k] = str(k + 1)
                welfares[f"w{k + 1}"] = w
                rules[f"f{k + 1}"] = _spec_for(w, f)
        resources = tuple(
            Resource(s.rid, f"w{names[s.pair]}", f"f{names[s.pair]}", s.base * values[s.group])
            for s in self.slots
        )
        actions = []
        for p in range(self.players.n):
            if p in self.moves:
                actions.append(tuple(self.action(p, a) for a in self.moves[p]))
            else:
                actions.append((self.mandatory(p),))
        return Game(self.players, welfares, rules, resources, tuple(actions))


def _spec_for(w: WelfareFunction, f: DistributionRule) -> RuleSpec:
    """The rule's own spec when it reproduces ``f`` on ``w``, else an explicit table."""
    try:
        if build_rule(f.spec, w) == f:
            return f.spec
    except ModelError:
        pass
    return RuleSpec("table", table=dict(f.shares))


def _sub(a: Form, b: Form) -> Form:
    return tuple(x - y for x, y in zip(a, b))


def _neg(a: Form) -> Form:
    return tuple(-x for x in a)


def _two_mover_forms(b: _Builder, p: int, q: int) -> tuple[list[Form], list[Form]]:
    """Strict inequalities for the two best-response cycle orientations.

    With actions indexed 0/1, orientation ``+`` moves ``p`` up at ``(0,0)``,
    ``q`` up at ``(1,0)``, ``p`` down at ``(1,1)`` and ``q`` down at ``(0,1)``.
    A 2x2 game has no pure equilibrium exactly when one orientation holds.
    """
    ap = [b.action(p, a) for a in b.moves[p]]
    aq = [b.action(q, a) for a in b.moves[q]]

    def u(who: int, x: int, y: int) -> Form:
        return b.utility_form(who, {p: ap[x], q: aq[y]})

    gp0 = _sub(u(p, 1, 0), u(p, 0, 0))
    gp1 = _sub(u(p, 1, 1), u(p, 0, 1))
    gq0 = _sub(u(q, 0, 1), u(q, 0, 0))
    gq1 = _sub(u(q, 1, 1), u(q, 1, 0))
    forward = [gp0, gq1, _neg(gp1), _neg(gq0)]
    return forward, [_neg(g) for g in forward]


def _solve_two_mover(b: _Builder, p: int, q: int) -> Optional[tuple[int, ...]]:
    for forms in _two_mover_forms(b, p, q):
        sol = solve_strict(forms)
        if sol is not None:
            return sol
    return None


def _verified(g: Game, budget: Optional[int]) -> Game:
    count = len(find_pne(g, budget))
    if count:
        raise ConstructionError(f"constructed game has {count} pure equilibria")
    return g


def _finish(b: _Builder, p: int, q: int, budget: Optional[int]) -> Game:
    sol = _solve_two_mover(b, p, q)
    if sol is None:
        raise ConstructionError("no multiplicities produce a best-response cycle")
    return _verified(b.game(sol), budget)


def _label(players: PlayerSet, mask: Subset) -> str:
    """Resource-id suffix naming a coalition; ``|`` keeps ids comma-free."""
    return "{" + "|".join(sorted(players.labels(mask))) + "}"


def _require_pair(s: Subset, i: int, j: int) -> None:
    if i == j or not (s >> i & 1 and s >> j & 1):
        raise PremiseError("both moving players must be distinct members of the coalition")


# ---------------------------------------------------------------- CE1 / CE2


def gen_ce1(f: DistributionRule, w: WelfareFunction, s: Subset, i: int, j: int,
            budget: Optional[int] = None) -> Game:
    """Two resources; ``i`` and ``j`` each pick one, the rest of ``S`` sits on both.

    Premise: ``(f(i,S) - f(i,S-j)) * (f(j,S) - f(j,S-i)) < 0``.
    """
    _require_pair(s, i, j)
    di = f(i, s) - f(i, s & ~(1 << j))
    dj = f(j, s) - f(j, s & ~(1 << i))
    if di * dj >= 0:
        raise PremiseError("joining must help one mover and hurt the other")
    b = _Builder([(w, f)])
    rest = s & ~((1 << i) | (1 << j))
    b.add("r1", 0, rest)
    b.add("r2", 0, rest)
    b.moves[i] = [{"r1"}, {"r2"}]
    b.moves[j] = [{"r1"}, {"r2"}]
    return _verified(b.game((1,)), budget)


def gen_ce2(f: DistributionRule, w: WelfareFunction, s: Subset, i: int, j: int,
            budget: Optional[int] = None) -> Game:
    """Four resources in a 2x2 box; ``S - N(S)`` sits on the off-diagonal only.

    Premise: ``(A_i - B_i) * (A_j - B_j) < 0`` where
    ``A_x = f(x,N) + f(x,S-y)`` and ``B_x = f(x,S) + f(x,N-y)``.
    """
    _require_pair(s, i, j)
    basis = mobius_decompose(actual_welfare(f))
    n_s = contributing_players(basis, s)
    if not (n_s >> i & 1 and n_s >> j & 1):
        raise PremiseError("both moving players must be contributing players of S")

    def gap(x: int, y: int) -> Fraction:
        a = f(x, n_s) + f(x, s & ~(1 << y))
        b = f(x, s) + f(x, n_s & ~(1 << y))
        return a - b

    if gap(i, j) * gap(j, i) >= 0:
        raise PremiseError("the two movers' incentives do not oppose each other")
    b = _Builder([(w, f)])
    core = n_s & ~((1 << i) | (1 << j))
    extra = s & ~n_s
    b.add("r11", 0, core)
    b.add("r12", 0, core | extra)
    b.add("r21", 0, core | extra)
    b.add("r22", 0, core)
    b.moves[i] = [{"r11", "r12"}, {"r21", "r22"}]
    b.moves[j] = [{"r11", "r21"}, {"r12", "r22"}]
    return _verified(b.game((1,)), budget)


# ---------------------------------------------------------------- CE3 / CE4 / CE5a


def _box(b: _Builder, i: int, j: int, family: dict[Subset, int], pair: int, group: int,
         tag: str, core: Optional[tuple[int, int, Subset]] = None) -> None:
    """Fill the 2x2 box from signed coefficients over coalitions.

    Top copies go right when positive and left when negative; bottom copies
    the reverse. ``core`` optionally adds one top-left and one bottom-right
    resource ``(pair, group, fixtures)``. ``i`` picks a row, ``j`` a column.
    """
    players = b.players
    top, bottom, left, right = set(), set(), set(), set()
    if core is not None:
        cp, cg, cfix = core
        top.add(b.add("r1", cp, cfix, cg))
        left.add("r1")
        bottom.add(b.add("r2", cp, cfix, cg))
        right.add("r2")
    pair_mask = (1 << i) | (1 << j)
    for t, coeff in family.items():
        if coeff == 0:
            continue
        fixed = t & ~pair_mask
        up = b.add(f"{tag}1{_label(players, t)}", pair, fixed, group, abs(coeff))
        down = b.add(f"{tag}2{_label(players, t)}", pair, fixed, group, abs(coeff))
        if t >> i & 1:
            top.add(up)
            bottom.add(down)
        if t >> j & 1:
            if coeff > 0:
                right.add(up)
                left.add(down)
            else:
                left.add(up)
                right.add(down)
    b.moves[i] = [top, bottom]
    b.moves[j] = [left, right]


def _basis_and_rules(f: DistributionRule):
    from .classifier import construct_basis_rules

    basis = mobius_decompose(actual_welfare(f))
    return basis, construct_basis_rules(basis, f)


def gen_ce3(f: DistributionRule, w: WelfareFunction, s: Subset, i: int, j: int,
            n_tilde: Optional[dict[Subset, int]] = None, budget: Optional[int] = None) -> Game:
    """Decomposition failure at ``S``: ``i`` is overpaid and ``j`` underpaid versus the basis sum."""
    from .classifier import aggregated_coeffs, decomposed_share

    _require_pair(s, i, j)
    basis, rules = _basis_and_rules(f)
    if not (f(i, s) > decomposed_share(basis, rules, i, s)
            and f(j, s) < decomposed_share(basis, rules, j, s)):
        raise PremiseError("need f(i,S) above and f(j,S) below their basis sums")
    if n_tilde is None:
        n_tilde = aggregated_coeffs(basis, s)
    b = _Builder([(w, f)])
    _box(b, i, j, n_tilde, 0, 0, "r", core=(0, 0, s & ~((1 << i) | (1 << j))))
    return _finish(b, i, j, budget)


def gen_ce4(f: DistributionRule, w: WelfareFunction, t: Subset, i: int, j: int,
            n_t: Optional[dict[Subset, int]] = None, budget: Optional[int] = None) -> Game:
    """Negative basis share: ``q_T f^T(i,T) < 0 < q_T f^T(j,T)``."""
    from .classifier import inclusion_exclusion_coeffs

    _require_pair(t, i, j)
    basis, rules = _basis_and_rules(f)
    if t not in rules:
        raise PremiseError("coalition is not in the support")
    q = basis.q(t)
    if not (q * rules[t][i] < 0 < q * rules[t][j]):
        raise PremiseError("need q_T f^T(i,T) < 0 < q_T f^T(j,T)")
    if n_t is None:
        n_t = inclusion_exclusion_coeffs(basis, t)
    b = _Builder([(w, f)])
    _box(b, i, j, n_t, 0, 0, "r")
    return _finish(b, i, j, budget)


# ---------------------------------------------------------------- CE5


def gen_ce5(f1: DistributionRule, w1: WelfareFunction, f2: DistributionRule, w2: WelfareFunction,
            i: int, j: int, s: Subset, t: Subset, budget: Optional[int] = None) -> Game:
    """Inconsistent share ratios of ``i`` and ``j`` across two coalitions.

    ``S`` is minimal among first-welfare coalitions paying ``i`` or ``j``,
    with ``f^{1,S}(i,S) > 0``. Chooses the symmetric box when
    ``q1_S q2_T > 0`` and the asymmetric construction otherwise.
    """
    return _ce5(f1, w1, f2, w2, i, j, s, t, budget)[0]


def _ce5(f1, w1, f2, w2, i, j, s, t, budget) -> tuple[Game, dict]:
    from .classifier import inclusion_exclusion_coeffs, positive_pair_coalitions

    _require_pair(s, i, j)
    _require_pair(t, i, j)
    basis1, rules1 = _basis_and_rules(f1)
    basis2, rules2 = _basis_and_rules(f2)
    if s not in rules1 or t not in rules2:
        raise PremiseError("coalitions must lie in the respective supports")
    if s not in _minimal(positive_pair_coalitions(basis1, rules1, i, j)):
        raise PremiseError("S must be minimal among paid coalitions holding both players")
    r_s, r_t = rules1[s], rules2[t]
    if not r_s[i] > 0:
        raise PremiseError("need f^{1,S}(i,S) > 0")
    if r_t[i] * r_s[j] == r_s[i] * r_t[j]:
        raise PremiseError("share ratios agree; nothing to exploit")
    pairs = [(w1, f1), (w2, f2)]
    fixed_s = s & ~((1 << i) | (1 << j))
    if basis1.q(s) * basis2.q(t) > 0:
        b = _Builder(pairs, groups=2)
        _box(b, i, j, inclusion_exclusion_coeffs(basis2, t), 1, 0, "r", core=(0, 1, fixed_s))
        return _finish(b, i, j, budget), {"construction": "ce5a"}
    bases = (basis1, basis2)
    options = [(2, t, False), (2, t, True), (1, s, False), (1, s, True)]
    for x, t_j, swap_j in options:
        for y, t_i, swap_i in options:
            b = _Builder(pairs, groups=4)
            b.add("r2", 0, fixed_s, 1)
            top, bottom, up, down = {"r2"}, set(), {"r2"}, set()
            for tt, c in inclusion_exclusion_coeffs(basis2, t).items():
                rid = b.add(f"r1{_label(b.players, tt)}", 1, tt & ~((1 << i) | (1 << j)), 0, abs(c))
                if tt >> i & 1:
                    (bottom if c > 0 else top).add(rid)
                if tt >> j & 1:
                    down.add(rid)
            for tt, c in inclusion_exclusion_coeffs(bases[x - 1], t_j).items():
                rid = b.add(f"r3{_label(b.players, tt)}", x - 1, tt & ~(1 << j), 2, abs(c))
                if tt >> j & 1:
                    (down if (c > 0) != swap_j else up).add(rid)
            for tt, c in inclusion_exclusion_coeffs(bases[y - 1], t_i).items():
                rid = b.add(f"r4{_label(b.players, tt)}", y - 1, tt & ~(1 << i), 3, abs(c))
                if tt >> i & 1:
                    (bottom if (c > 0) != swap_i else top).add(rid)
            b.moves[i] = [top, bottom]
            b.moves[j] = [up, down]
            sol = _solve_two_mover(b, i, j)
            if sol is not None:
                info = {
                    "construction": "ce5b",
                    "x": x, "t_j": t_j, "swap_j": swap_j,
                    "y": y, "t_i": t_i, "swap_i": swap_i,
                }
                return _verified(b.game(sol), budget), info
    raise ConstructionError("no asymmetric construction produced a best-response cycle")


def _minimal(family: Sequence[Subset]) -> list[Subset]:
    return [t for t in family if not any(u != t and u & ~t == 0 for u in family)]


# ---------------------------------------------------------------- CE6


@dataclass(frozen=True)
class Segment:
    """Maximal run of a cyclic sign profile of length ``k``: ``kind`` is P, M or Z.

    Columns are 1-based and inclusive.
    """

    kind: str
    start: int
    end: int
    k: int

    @property
    def length(self) -> int:
        return len(self.columns)

    @property
    def columns(self) -> list[int]:
        """Columns in order; wraps past the last column when ``start > end``."""
        if self.start <= self.end:
            return list(range(self.start, self.end + 1))
        return list(range(self.start, self.k + 1)) + list(range(1, self.end + 1))

    def __str__(self) -> str:
        return f"{self.kind}{self.length}"


def cyclic_shift(signs: Sequence[int]) -> int:
    """0-based column that becomes column 1 after the cyclic relabelling.

    Prefers a negative column preceded by two positives, then one preceded by
    a single positive, else column 1.
    """
    k = len(signs)
    starts = [j for j in range(k) if signs[j - 1] > 0 and signs[j] < 0]
    preferred = [j for j in starts if signs[j - 2] > 0]
    if preferred:
        return preferred[0]
    if starts:
        return starts[0]
    return 0


def rotate(seq: Sequence, shift: int) -> list:
    return list(seq[shift:]) + list(seq[:shift])


def segments(signs: Sequence[int]) -> list[Segment]:
    """Unique decomposition of a relabelled sign profile into P, M and Z segments.

    Columns are read cyclically. Runs of equal signs longer than one are P or
    M segments; each stretch of singleton runs becomes one alternating Z
    segment, borrowing the last column of a preceding minus run and the first
    column of a following plus run so that it starts negative and ends
    positive. A Z segment may wrap past column ``k``, in which case its start
    exceeds its end.
    """
    k = len(signs)
    if all(x == signs[0] for x in signs):
        return [Segment("P" if signs[0] > 0 else "M", 1, k, k)]
    # rotate so column ``base`` opens a run, then split into runs
    base = next(c for c in range(k) if signs[c] != signs[c - 1])
    cols = [(base + t) % k for t in range(k)]
    runs = []
    first = 0
    for t in range(1, k + 1):
        if t == k or signs[cols[t]] != signs[cols[first]]:
            runs.append(cols[first:t])
            first = t
    if all(len(r) == 1 for r in runs):
        if k % 2:
            raise ModelError("an alternating cycle needs an even length")
        return [Segment("Z", 1, k, k)] if signs[0] < 0 else [Segment("Z", 2, 1, k)]
    # start the scan on a long run so no singleton stretch is split
    pivot = next(t for t, r in enumerate(runs) if len(r) > 1)
    runs = runs[pivot:] + runs[:pivot]
    out: list[Segment] = []
    r = 0
    while r < len(runs):
        run = runs[r]
        if len(run) > 1:
            out.append(Segment("P" if signs[run[0]] > 0 else "M", run[0] + 1, run[-1] + 1, k))
            r += 1
            continue
        lo = run[0]
        while r < len(runs) and len(runs[r]) == 1:
            hi = runs[r][0]
            r += 1
        if signs[lo] > 0:
            lo = (lo - 1) % k
        if signs[hi] < 0:
            hi = (hi + 1) % k
        out.append(Segment("Z", lo + 1, hi + 1, k))
    return sorted(out, key=lambda seg: (seg.start, seg.kind != "M"))


def straight_players(signs: Sequence[int], segs: Sequence[Segment]) -> list[bool]:
    """Whether player ``i_j`` (1-based ``j``) uses the straight action set."""
    k = len(signs)

    def q(col: int) -> int:
        return signs[(col - 1) % k]

    ends = {s.end: s for s in segs}
    begins_m = {s.start for s in segs if s.kind == "M"}
    begins_p = {s.start for s in segs if s.kind == "P"}
    in_z = {c for s in segs if s.kind == "Z" for c in s.columns}
    ends_p = {s.end for s in segs if s.kind == "P"}
    # a single Z segment spanning the whole cycle needs i_1 straight, else the
    # diagonal count has the parity that admits an equilibrium
    whole_z = len(segs) == 1 and segs[0].kind == "Z"
    out = [q(1) > 0 or (1 in begins_m and k in ends_p) or whole_z]
    for j in range(2, k + 1):
        seg = ends.get(j)
        closes = seg is not None and (seg.kind in "MZ" or seg.length % 2 == 1)
        out.append(
            closes
            or (q(j) < 0 and j in in_z)
            or (q(j) > 0 and q(j - 1) < 0 and j in begins_p)
            or (q(j) < 0 and q(j - 1) > 0 and q(j - 2) < 0 and j in begins_m)
        )
    return out


def cycle_multiplicities(q: Sequence[Fraction], a: Sequence[Fraction], b: Sequence[Fraction]) -> tuple[int, ...]:
    """Positive integers with ``v_j|q_j|b_j > v_{j+1}|q_{j+1}|a_{j+1}`` cyclically.

    Needs every ``b_j > 0`` and ``prod a < prod b``. With a zero ``a`` the
    chain is solved backwards from it; otherwise the ratio bounds are walked
    forwards, taking interval midpoints.
    """
    k = len(q)
    if any(x <= 0 for x in b) or any(x < 0 for x in a):
        raise PremiseError("cycle shares must be nonnegative with positive b")
    if _prod(a) >= _prod(b):
        raise PremiseError("need prod a < prod b")
    mag = [abs(Fraction(x)) for x in q]
    if any(m == 0 for m in mag):
        raise PremiseError("cycle coefficients must be nonzero")
    v: list[Fraction] = [Fraction(0)] * k
    zeros = [j for j in range(k) if a[j] == 0]
    if zeros:
        z = zeros[0]
        v[z - 1] = Fraction(1)
        for step in range(2, k + 1):
            j = (z - step) % k
            nxt = (j + 1) % k
            v[j] = v[nxt] * mag[nxt] * a[nxt] / (mag[j] * b[j]) + 1
    else:
        vp = [Fraction(1)]
        a_ = list(a) + [a[0]]
        lo = _prod(a_[2:k + 1]) / _prod(b[1:k])
        vp.append((lo + b[0] / a[1]) / 2)
        for i in range(3, k + 1):
            lo = _prod(a_[i - 1:k + 1]) / _prod(b[i - 1:k])
            hi = b[i - 2] * vp[-1]
            vp.append((lo + hi) / 2 / a[i - 1])
        v = [vp[j] / mag[j] for j in range(k)]
    ints = _integral(v)
    for j in range(k):
        nxt = (j + 1) % k
        if not ints[j] * mag[j] * b[j] > ints[nxt] * mag[nxt] * a[nxt]:
            raise ConstructionError("multiplicities violate the cycle inequalities")
    return ints


def _prod(xs) -> Fraction:
    out = Fraction(1)
    for x in xs:
        out *= x
    return out


@dataclass(frozen=True)
class CyclePlan:
    """Normalized cycle: players ``i_1..i_k`` and column ``j`` between ``i_j`` and ``i_{j+1}``."""

    players: tuple[int, ...]
    columns: tuple[int, ...]
    coalitions: tuple[Subset, ...]
    q: tuple[Fraction, ...]
    a: tuple[Fraction, ...]
    b: tuple[Fraction, ...]
    segments: tuple[Segment, ...]
    straight: tuple[bool, ...]
    multiplicities: tuple[int, ...]


def plan_ce6(rules: Sequence[DistributionRule], cycle: Sequence[int],
             coalitions: Sequence[Subset]) -> CyclePlan:
    """Orientation, relabelling, action shapes and multiplicities for a share cycle.

    ``coalitions[j]`` holds ``cycle[j]`` and ``cycle[j+1]`` and is minimal
    among its rule's paid coalitions for that pair; ``rules[j]`` is its rule.
    """
    from .classifier import positive_pair_coalitions

    k = len(cycle)
    if k < 3 or len(set(cycle)) != k or len(coalitions) != k or len(rules) != k:
        raise PremiseError("need a cycle of at least three distinct players with one coalition per link")
    qs, avals, bvals = [], [], []
    for col in range(k):
        x, y, t = cycle[col], cycle[(col + 1) % k], coalitions[col]
        _require_pair(t, x, y)
        basis, brules = _basis_and_rules(rules[col])
        if t not in _minimal(positive_pair_coalitions(basis, brules, x, y)):
            raise PremiseError("each link coalition must be minimal among paid coalitions of its pair")
        qs.append(basis.q(t))
        avals.append(brules[t][x])
        bvals.append(brules[t][y])
    players = list(cycle)
    cols = list(range(k))
    if _prod(avals) == _prod(bvals):
        raise PremiseError("forward and backward share products agree")
    if _prod(avals) > _prod(bvals):
        players = [players[0]] + players[1:][::-1]
        cols = cols[::-1]
        qs, avals, bvals = qs[::-1], bvals[::-1], avals[::-1]
    signs = [1 if x > 0 else -1 for x in qs]
    shift = cyclic_shift(signs)
    players, cols, qs, avals, bvals, signs = (
        rotate(x, shift) for x in (players, cols, qs, avals, bvals, signs)
    )
    segs = segments(signs)
    straight = straight_players(signs, segs)
    diagonal = k - sum(straight)
    negative = sum(1 for x in signs if x < 0)
    if diagonal % 2 != (negative + 1) % 2:
        raise ConstructionError("straight/diagonal assignment leaves an equilibrium")
    mult = cycle_multiplicities(qs, avals, bvals)
    return CyclePlan(
        tuple(players), tuple(cols), tuple(coalitions[c] for c in cols),
        tuple(qs), tuple(avals), tuple(bvals), tuple(segs), tuple(straight), mult,
    )


def gen_ce6(rules: Sequence[DistributionRule], welfares: Sequence[WelfareFunction],
            cycle: Sequence[int], coalitions: Sequence[Subset], budget: Optional[int] = None) -> Game:
    """Two circular rows of ``k`` resources; each cycle player straddles two adjacent columns."""
    return _ce6(rules, welfares, cycle, coalitions, budget)[0]


def _ce6(rules, welfares, cycle, coalitions, budget) -> tuple[Game, CyclePlan]:
    plan = plan_ce6(rules, cycle, coalitions)
    k = len(plan.players)
    pairs: list[tuple[WelfareFunction, DistributionRule]] = []
    index = []
    for c in plan.columns:
        key = (welfares[c], rules[c])
        for m, (w, f) in enumerate(pairs):
            if w == key[0] and f == key[1]:
                index.append(m)
                break
        else:
            index.append(len(pairs))
            pairs.append(key)
    b = _Builder(pairs, groups=k)
    for j in range(k):
        x, y = plan.players[j], plan.players[(j + 1) % k]
        fixed = plan.coalitions[j] & ~((1 << x) | (1 << y))
        b.add(f"u{j + 1}", index[j], fixed, j)
        b.add(f"d{j + 1}", index[j], fixed, j)
    for j in range(k):
        prev, cur = (j - 1) % k + 1, j + 1
        if plan.straight[j]:
            acts = [{f"u{prev}", f"u{cur}"}, {f"d{prev}", f"d{cur}"}]
        else:
            acts = [{f"u{prev}", f"d{cur}"}, {f"d{prev}", f"u{cur}"}]
        b.moves[plan.players[j]] = acts
    return _verified(b.game(plan.multiplicities), budget), plan


# ---------------------------------------------------------------- dispatch from the classifier


def counterexample_for(stage, inp, analyses, witness: dict, budget: Optional[int]) -> tuple[Game, dict[str, Any]]:
    """Pick and run the generator matching a failed stage; return the game and construction notes.

    Malformed or non-failing witnesses raise :class:`PremiseError`.
    """
    try:
        return _dispatch(stage, inp, analyses, witness, budget)
    except (KeyError, IndexError, StopIteration, TypeError) as exc:
        raise PremiseError(f"witness does not fit the {getattr(stage, 'value', stage)} construction") from exc


def _dispatch(stage, inp, analyses, witness: dict, budget: Optional[int]) -> tuple[Game, dict[str, Any]]:
    from .classifier import Stage, decomposed_share

    if stage in (Stage.CONTRIBUTING, Stage.DECOMPOSITION, Stage.NONNEGATIVITY):
        pair = inp.pairs[witness["pair_index"]]
        an = analyses[witness["pair_index"]]
        f, w = pair.rule, pair.welfare
    if stage is Stage.CONTRIBUTING:
        return _contributing(f, w, an.basis, witness["coalition"], budget)
    if stage is Stage.DECOMPOSITION:
        s = witness["coalition"]
        gaps = {x: f(x, s) - decomposed_share(an.basis, an.basis_rules, x, s) for x in members(s)}
        i = next(x for x in members(s) if gaps[x] > 0)
        j = next(x for x in members(s) if gaps[x] < 0)
        return gen_ce3(f, w, s, i, j, budget=budget), {"construction": "ce3", "movers": (i, j)}
    if stage is Stage.NONNEGATIVITY:
        t = witness["coalition"]
        neg = witness["player"]
        pos = next(x for x in members(t) if an.basis_rules[t][x] > 0)
        i, j = (neg, pos) if an.basis.q(t) > 0 else (pos, neg)
        return gen_ce4(f, w, t, i, j, budget=budget), {"construction": "ce4", "movers": (i, j)}
    if stage is Stage.GLOBAL_CONSISTENCY:
        i, j = witness["players"]
        a, s = witness["first"]
        c, t = witness["second"]
        if not analyses[a].basis_rules[s][i] > 0:
            i, j = j, i
        p1, p2 = inp.pairs[a], inp.pairs[c]
        game, info = _ce5(p1.rule, p1.welfare, p2.rule, p2.welfare, i, j, s, t, budget)
        return game, {**info, "movers": (i, j)}
    if stage is Stage.CYCLIC_CONSISTENCY:
        cycle = witness["cycle"]
        links = witness["coalitions"]
        rules = [inp.pairs[p].rule for p, _ in links]
        welfares = [inp.pairs[p].welfare for p, _ in links]
        game, plan = _ce6(rules, welfares, cycle, [t for _, t in links], budget)
        return game, {
            "construction": "ce6",
            "order": plan.players,
            "segments": tuple(str(s) for s in plan.segments),
            "straight": plan.straight,
            "multiplicities": plan.multiplicities,
        }
    raise ValueError(f"unknown stage {stage!r}")


def _contributing(f: DistributionRule, w: WelfareFunction, basis: BasisForm, s: Subset,
                  budget: Optional[int]) -> tuple[Game, dict]:
    """Noncontributing player paid something: CE1; otherwise a CE2 pair inside ``N(S)``."""
    n_s = contributing_players(basis, s)
    outsiders = [x for x in members(s & ~n_s) if f(x, s) != 0]
    if outsiders:
        i = outsiders[0]
        for j in members(s):
            if j == i:
                continue
            di = f(i, s) - f(i, s & ~(1 << j))
            dj = f(j, s) - f(j, s & ~(1 << i))
            if di * dj < 0:
                return gen_ce1(f, w, s, i, j, budget), {"construction": "ce1", "movers": (i, j)}
    inside = members(n_s)
    for x in inside:
        for y in inside:
            if x < y:
                try:
                    game = gen_ce2(f, w, s, x, y, budget)
                except PremiseError:
                    continue
                return game, {"construction": "ce2", "movers": (x, y)}
    raise ConstructionError("no mover pair satisfies a contributing-stage construction premise")
