"""JSON forms of the model objects, versioned as ``sharekit/1``.

Rationals are strings ``"p"`` or ``"p/q"`` (plain JSON integers are also
accepted); subsets are comma-joined player labels with ``""`` for the empty
set. Parse errors raise :class:`SchemaError` carrying a JSON-pointer path.
"""

from __future__ import annotations

import json
import re
from fractions import Fraction
from typing import Any, Mapping, Optional, Sequence

from .core_model import (
    BasisForm,
    ModelError,
    PlayerSet,
    Subset,
    WelfareFunction,
    members,
    ordered_subsets,
    subset_key,
)
from .distribution_rules import FAMILIES, DistributionRule, RuleSpec, WeightSystem, build_rule
from .game_engine import CycleStep, Game, Profile, Resource

SCHEMA = "sharekit/1"
_RATIONAL = re.compile(r"^-?\d+(/\d+)?$")


class SchemaError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path or '/'}: {message}")
        self.path = path
        self.message = message


def _ptr(path: str, key: Any) -> str:
    return f"{path}/{str(key).replace('~', '~0').replace('/', '~1')}"


def _expect(value: Any, kind: type, path: str, what: str) -> Any:
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise SchemaError(path, f"expected {what}")
    return value


def _reraise(path: str):
    """Turn model validation errors into schema errors at ``path``."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, kind, exc, tb):
            if exc is not None and isinstance(exc, ModelError) and not isinstance(exc, SchemaError):
                raise SchemaError(path, str(exc)) from exc
            return False

    return _Ctx()


# ---------------------------------------------------------------- scalars


def parse_rational(value: Any, path: str = "") -> Fraction:
    if isinstance(value, int) and not isinstance(value, bool):
        return Fraction(value)
    if not isinstance(value, str) or not _RATIONAL.match(value):
        raise SchemaError(path, f"expected a rational like \"3\" or \"-2/5\", got {value!r}")
    num, _, den = value.partition("/")
    if den and int(den) == 0:
        raise SchemaError(path, f"zero denominator in {value!r}")
    return Fraction(int(num), int(den) if den else 1)


def dump_rational(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def parse_players(value: Any, path: str = "/players") -> PlayerSet:
    _expect(value, list, path, "a list of player labels")
    for k, label in enumerate(value):
        _expect(label, str, _ptr(path, k), "a player label")
    with _reraise(path):
        return PlayerSet(tuple(value))


def parse_subset(players: PlayerSet, value: Any, path: str) -> Subset:
    if isinstance(value, list):
        for k, label in enumerate(value):
            _expect(label, str, _ptr(path, k), "a player label")
        labels = value
    else:
        _expect(value, str, path, "a subset string or label list")
        labels = [p.strip() for p in value.split(",")] if value.strip() else []
    if len(set(labels)) != len(labels):
        raise SchemaError(path, "repeated player in subset")
    with _reraise(path):
        return players.mask(labels)


def dump_subset(players: PlayerSet, mask: Subset) -> str:
    return players.format(mask)


def _subset_map(players: PlayerSet, value: Any, path: str) -> dict[Subset, Fraction]:
    _expect(value, dict, path, "an object keyed by subsets")
    out: dict[Subset, Fraction] = {}
    for key, raw in value.items():
        p = _ptr(path, key)
        mask = parse_subset(players, key, p)
        if mask in out:
            raise SchemaError(p, "subset listed twice")
        out[mask] = parse_rational(raw, p)
    return out


def _dump_subset_map(players: PlayerSet, table: Mapping[Subset, Fraction]) -> dict[str, str]:
    return {dump_subset(players, m): dump_rational(table[m]) for m in sorted(table, key=subset_key)}


# ---------------------------------------------------------------- model objects


def parse_welfare(players: PlayerSet, value: Any, path: str) -> WelfareFunction:
    """Object ``{subset: value}``; unlisted subsets are 0."""
    table = _subset_map(players, value, path)
    if table.get(0, Fraction(0)) != 0:
        raise SchemaError(_ptr(path, ""), "welfare of the empty set must be 0")
    with _reraise(path):
        return WelfareFunction.from_mapping(players, table)


def dump_welfare(w: WelfareFunction) -> dict[str, str]:
    return _dump_subset_map(w.players, {m: v for m, v in enumerate(w.values) if v != 0})


def parse_basis(players: PlayerSet, value: Any, path: str) -> BasisForm:
    table = _subset_map(players, value, path)
    if 0 in table:
        raise SchemaError(_ptr(path, ""), "the empty coalition cannot carry a coefficient")
    with _reraise(path):
        return BasisForm.pruned(players, table)


def dump_basis(b: BasisForm) -> dict[str, str]:
    return _dump_subset_map(b.players, b.coefficients)


def _weights(players: PlayerSet, value: Any, path: str) -> tuple[Fraction, ...]:
    _expect(value, dict, path, "an object of player weights")
    if set(value) != set(players.ids):
        raise SchemaError(path, "weights must list every player exactly once")
    return tuple(parse_rational(value[label], _ptr(path, label)) for label in players.ids)


def parse_omega(players: PlayerSet, value: Any, path: str) -> WeightSystem:
    """``{"lambda": {label: w}, "sigma": [[labels], ...]}``, highest priority block first."""
    _expect(value, dict, path, "a weight system object")
    lam = _weights(players, value.get("lambda"), _ptr(path, "lambda"))
    sigma_raw = _expect(value.get("sigma"), list, _ptr(path, "sigma"), "a list of blocks")
    sigma = tuple(
        parse_subset(players, block, _ptr(_ptr(path, "sigma"), k)) for k, block in enumerate(sigma_raw)
    )
    with _reraise(path):
        return WeightSystem(lam, sigma)


def dump_omega(players: PlayerSet, omega: WeightSystem) -> dict[str, Any]:
    return {
        "lambda": {label: dump_rational(x) for label, x in zip(players.ids, omega.lam)},
        "sigma": [players.labels(block) for block in omega.sigma],
    }


def parse_rule_spec(players: PlayerSet, value: Any, path: str) -> RuleSpec:
    """``{"family": name, ...parameters}``; an explicit table uses ``"shares": {subset: {label: x}}``."""
    _expect(value, dict, path, "a rule object")
    family = value.get("family")
    if family not in FAMILIES:
        raise SchemaError(_ptr(path, "family"), f"family must be one of {', '.join(FAMILIES)}")
    weights = omega = ground = table = None
    if "weights" in value:
        weights = _weights(players, value["weights"], _ptr(path, "weights"))
    if "omega" in value:
        omega = parse_omega(players, value["omega"], _ptr(path, "omega"))
    if "ground" in value:
        ground = parse_basis(players, value["ground"], _ptr(path, "ground"))
    if "shares" in value:
        sp = _ptr(path, "shares")
        rows = _expect(value["shares"], dict, sp, "an object keyed by subsets")
        table = {}
        for key, row in rows.items():
            rp = _ptr(sp, key)
            mask = parse_subset(players, key, rp)
            _expect(row, dict, rp, "an object of player shares")
            for label, x in row.items():
                i = players.index(label) if label in players.ids else None
                if i is None or not mask >> i & 1:
                    raise SchemaError(_ptr(rp, label), "share for a player outside the coalition")
                table[(i, mask)] = parse_rational(x, _ptr(rp, label))
        for s in range(1, 1 << players.n):
            for i in members(s):
                table.setdefault((i, s), Fraction(0))
    with _reraise(path):
        return RuleSpec(family, weights=weights, omega=omega, ground=ground, table=table)


def dump_rule_spec(players: PlayerSet, spec: RuleSpec) -> dict[str, Any]:
    out: dict[str, Any] = {"family": spec.family}
    if spec.weights is not None:
        out["weights"] = {label: dump_rational(x) for label, x in zip(players.ids, spec.weights)}
    if spec.omega is not None:
        out["omega"] = dump_omega(players, spec.omega)
    if spec.ground is not None:
        out["ground"] = dump_basis(spec.ground)
    if spec.table is not None:
        out["shares"] = _dump_share_rows(players, spec.table)
    return out


def _dump_share_rows(players: PlayerSet, table: Mapping[tuple[int, Subset], Fraction]) -> dict:
    rows: dict[str, dict[str, str]] = {}
    for s in ordered_subsets(players.full):
        if s == 0:
            continue
        row = {players.ids[i]: dump_rational(table.get((i, s), Fraction(0))) for i in members(s)}
        if any(x != "0" for x in row.values()):
            rows[dump_subset(players, s)] = row
    return rows


def dump_rule_shares(f: DistributionRule, coalitions: Optional[Sequence[Subset]] = None) -> dict:
    """``{subset: {label: share}}`` for the given coalitions, or every nonempty one."""
    players = f.players
    if coalitions is None:
        coalitions = [s for s in ordered_subsets(players.full) if s]
    return {
        dump_subset(players, s): {players.ids[i]: dump_rational(f(i, s)) for i in members(s)}
        for s in coalitions
    }


# ---------------------------------------------------------------- games


def parse_game(value: Any, path: str = "") -> Game:
    _expect(value, dict, path, "a game object")
    players = parse_players(value.get("players"), _ptr(path, "players"))
    wp = _ptr(path, "welfares")
    welfares = {
        name: parse_welfare(players, w, _ptr(wp, name))
        for name, w in _expect(value.get("welfares"), dict, wp, "an object of welfare functions").items()
    }
    rp = _ptr(path, "rules")
    rules = {
        name: parse_rule_spec(players, r, _ptr(rp, name))
        for name, r in _expect(value.get("rules"), dict, rp, "an object of rules").items()
    }
    resp = _ptr(path, "resources")
    resources = []
    for k, raw in enumerate(_expect(value.get("resources"), list, resp, "a list of resources")):
        p = _ptr(resp, k)
        _expect(raw, dict, p, "a resource object")
        rid = _expect(raw.get("id"), str, _ptr(p, "id"), "a resource id")
        if not rid or "," in rid:
            raise SchemaError(_ptr(p, "id"), "resource ids must be nonempty and comma-free")
        v = _expect(raw.get("v", 1), int, _ptr(p, "v"), "a positive integer multiplicity")
        welfare = _expect(raw.get("welfare"), str, _ptr(p, "welfare"), "a welfare name")
        rule = _expect(raw.get("rule"), str, _ptr(p, "rule"), "a rule name")
        with _reraise(p):
            resources.append(Resource(rid, welfare, rule, v))
    ap = _ptr(path, "actions")
    acts_raw = _expect(value.get("actions"), dict, ap, "an object of action lists")
    if set(acts_raw) != set(players.ids):
        raise SchemaError(ap, "actions must list every player exactly once")
    actions = []
    for label in players.ids:
        lp = _ptr(ap, label)
        lst = _expect(acts_raw[label], list, lp, "a list of actions")
        acts = []
        for k, a in enumerate(lst):
            _expect(a, list, _ptr(lp, k), "a list of resource ids")
            acts.append(frozenset(a))
        actions.append(tuple(acts))
    with _reraise(path):
        return Game(players, welfares, rules, tuple(resources), tuple(actions))


def dump_game(g: Game) -> dict[str, Any]:
    players = g.players
    return {
        "players": list(players.ids),
        "welfares": {name: dump_welfare(w) for name, w in g.welfares.items()},
        "rules": {name: dump_rule_spec(players, r) for name, r in g.rules.items()},
        "resources": [
            {"id": r.id, "welfare": r.welfare, "rule": r.rule, "v": r.v} for r in g.resources
        ],
        "actions": {
            label: [sorted(a) for a in acts] for label, acts in zip(players.ids, g.actions)
        },
    }


def dump_profile(g: Game, profile: Profile) -> dict[str, str]:
    return {
        label: ",".join(sorted(g.actions[i][profile[i]]))
        for i, label in enumerate(g.players.ids)
    }


def dump_cycle(g: Game, steps: Sequence[CycleStep]) -> list[dict[str, Any]]:
    return [
        {
            "profile": dump_profile(g, s.profile),
            "player": g.players.ids[s.player],
            "action": ",".join(sorted(g.actions[s.player][s.action])),
        }
        for s in steps
    ]


# ---------------------------------------------------------------- documents


def load_json(path: str) -> Any:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"invalid JSON: {exc}") from exc


def check_schema(doc: Any) -> dict:
    _expect(doc, dict, "", "a JSON object")
    if doc.get("schema") != SCHEMA:
        raise SchemaError("/schema", f"expected \"{SCHEMA}\"")
    return doc


def parse_welfare_doc(doc: Any) -> WelfareFunction:
    doc = check_schema(doc)
    players = parse_players(doc.get("players"))
    return parse_welfare(players, doc.get("welfare"), "/welfare")


def welfare_doc(w: WelfareFunction) -> dict:
    return {"schema": SCHEMA, "players": list(w.players.ids), "welfare": dump_welfare(w)}


def parse_basis_doc(doc: Any) -> BasisForm:
    doc = check_schema(doc)
    players = parse_players(doc.get("players"))
    return parse_basis(players, doc.get("basis"), "/basis")


def basis_doc(b: BasisForm) -> dict:
    return {"schema": SCHEMA, "players": list(b.players.ids), "basis": dump_basis(b)}


def parse_omega_doc(doc: Any) -> WeightSystem:
    doc = check_schema(doc)
    players = parse_players(doc.get("players"))
    return parse_omega(players, doc.get("omega"), "/omega")


def omega_doc(players: PlayerSet, omega: WeightSystem) -> dict:
    return {"schema": SCHEMA, "players": list(players.ids), "omega": dump_omega(players, omega)}


def parse_rule_doc(doc: Any) -> tuple[PlayerSet, RuleSpec]:
    doc = check_schema(doc)
    players = parse_players(doc.get("players"))
    return players, parse_rule_spec(players, doc.get("rule"), "/rule")


def rule_doc(players: PlayerSet, spec: RuleSpec) -> dict:
    return {"schema": SCHEMA, "players": list(players.ids), "rule": dump_rule_spec(players, spec)}


def parse_game_doc(doc: Any) -> Game:
    doc = check_schema(doc)
    return parse_game(doc.get("game"), "/game")


def game_doc(g: Game) -> dict:
    return {"schema": SCHEMA, "game": dump_game(g)}


def parse_pairs_doc(doc: Any):
    """``{"players": [...], "pairs": [{"welfare": {...}, "rule": {...}}, ...]}``."""
    from .classifier import ClassifierInput, RulePair

    doc = check_schema(doc)
    players = parse_players(doc.get("players"))
    raw = _expect(doc.get("pairs"), list, "/pairs", "a list of welfare/rule pairs")
    if not raw:
        raise SchemaError("/pairs", "need at least one pair")
    pairs = []
    for k, item in enumerate(raw):
        p = _ptr("/pairs", k)
        _expect(item, dict, p, "a pair object")
        w = parse_welfare(players, item.get("welfare"), _ptr(p, "welfare"))
        spec = parse_rule_spec(players, item.get("rule"), _ptr(p, "rule"))
        with _reraise(_ptr(p, "rule")):
            pairs.append(RulePair(w, build_rule(spec, w)))
    return ClassifierInput(players, tuple(pairs))


def pairs_doc(inp) -> dict:
    players = inp.players
    return {
        "schema": SCHEMA,
        "players": list(players.ids),
        "pairs": [
            {"welfare": dump_welfare(p.welfare), "rule": dump_rule_spec(players, p.rule.spec)}
            for p in inp.pairs
        ],
    }


# ---------------------------------------------------------------- verdicts and witnesses

_SUBSET_KEYS = ("coalition", "t_i", "t_j")
_PLAYER_KEYS = ("player",)
_PLAYER_LIST_KEYS = ("players", "movers", "cycle", "order")
_PAIR_COALITION_KEYS = ("first", "second")


def dump_witness(players: PlayerSet, witness: Mapping[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in witness.items():
        if key in _SUBSET_KEYS:
            out[key] = dump_subset(players, value)
        elif key in _PLAYER_KEYS:
            out[key] = players.ids[value]
        elif key in _PLAYER_LIST_KEYS:
            out[key] = [players.ids[x] for x in value]
        elif key in _PAIR_COALITION_KEYS:
            out[key] = {"pair": value[0], "coalition": dump_subset(players, value[1])}
        elif key == "coalitions":
            out[key] = [{"pair": p, "coalition": dump_subset(players, t)} for p, t in value]
        elif isinstance(value, tuple):
            out[key] = list(value)
        else:
            out[key] = value
    return out


def parse_witness(players: PlayerSet, value: Any, path: str = "/witness") -> dict[str, Any]:
    _expect(value, dict, path, "a witness object")
    out: dict[str, Any] = {}
    for key, raw in value.items():
        p = _ptr(path, key)
        if key in _SUBSET_KEYS:
            out[key] = parse_subset(players, raw, p)
        elif key in _PLAYER_KEYS:
            out[key] = _player(players, raw, p)
        elif key in _PLAYER_LIST_KEYS:
            _expect(raw, list, p, "a list of players")
            out[key] = tuple(_player(players, x, _ptr(p, k)) for k, x in enumerate(raw))
        elif key in _PAIR_COALITION_KEYS:
            out[key] = _pair_coalition(players, raw, p)
        elif key == "coalitions":
            _expect(raw, list, p, "a list of pair coalitions")
            out[key] = tuple(_pair_coalition(players, x, _ptr(p, k)) for k, x in enumerate(raw))
        elif key == "pair_index":
            out[key] = _expect(raw, int, p, "a pair index")
        else:
            out[key] = raw
    return out


def _player(players: PlayerSet, raw: Any, path: str) -> int:
    _expect(raw, str, path, "a player label")
    if raw not in players.ids:
        raise SchemaError(path, f"unknown player {raw!r}")
    return players.ids.index(raw)


def _pair_coalition(players: PlayerSet, raw: Any, path: str) -> tuple[int, Subset]:
    _expect(raw, dict, path, "an object with pair and coalition")
    pair = _expect(raw.get("pair", 0), int, _ptr(path, "pair"), "a pair index")
    return pair, parse_subset(players, raw.get("coalition"), _ptr(path, "coalition"))


def verdict_doc(players: PlayerSet, verdict) -> dict[str, Any]:
    if verdict.passed:
        return {
            "schema": SCHEMA,
            "outcome": "pass",
            "omega": dump_omega(players, verdict.omega),
            "grounds": [dump_basis(b) for b in verdict.grounds],
        }
    return {
        "schema": SCHEMA,
        "outcome": "fail",
        "stage": verdict.stage.value,
        "witness": dump_witness(players, verdict.witness),
        "counterexample_game": dump_game(verdict.game),
        "pne_count": verdict.pne_count,
    }


def dumps(doc: Any, pretty: bool = False) -> str:
    """Deterministic text: compact by default, two-space indent when ``pretty``."""
    if pretty:
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
    return json.dumps(doc, separators=(",", ":"), ensure_ascii=False) + "\n"
