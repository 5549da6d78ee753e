"""Command-line front end: JSON files in, deterministic JSON out.

Exit codes: 0 on success, 2 when ``classify`` returns a failing verdict,
1 on usage, schema, premise or budget errors.
"""

from __future__ import annotations

import functools
import sys
from typing import Any, Optional

import click

from . import serialization as ser
from .classifier import Stage, analyse_pair, classify, reduce_to_budget_balanced
from .core_model import ModelError, mobius_decompose
from .counterexamples import ConstructionError, PremiseError, counterexample_for
from .distribution_rules import build_rule, gwmc_ground_to_gwsv_ground, gwsv_ground_to_gwmc_ground
from .game_engine import (
    BudgetExceeded,
    best_response_cycle,
    find_pne,
    global_potential,
    all_profiles,
    potential_maximizers,
    verify_potential_property,
)

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _common(fn):
    """Shared flags; the chosen values reach the command as keyword arguments."""

    @click.option("--budget", type=click.IntRange(min=1), default=None,
                  help="Maximum number of action profiles to enumerate (default: $SHAREKIT_BUDGET or 10^7).")
    @click.option("--seed", type=int, default=None,
                  help="Seed for randomized commands; accepted for interface stability.")
    @click.option("--output", type=click.Path(dir_okay=False, writable=True), default=None,
                  help="Write the JSON result here instead of stdout.")
    @click.option("--format", "fmt", type=click.Choice(["json", "pretty"]), default="json",
                  help="Compact JSON or two-space indented JSON.")
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)

    return wrapper


def _emit(doc: Any, output: Optional[str], fmt: str) -> None:
    text = ser.dumps(doc, pretty=fmt == "pretty")
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@click.group()
@click.version_option(package_name="artifact")
def cli() -> None:
    """Exact analysis of welfare-sharing games and distribution rules."""


@cli.command("decompose")
@click.argument("welfare_file", type=click.Path(exists=True, dir_okay=False))
@_common
def cmd_decompose(welfare_file, budget, seed, output, fmt):
    """Unanimity-basis coefficients of a welfare function."""
    w = ser.parse_welfare_doc(ser.load_json(welfare_file))
    _emit(ser.basis_doc(mobius_decompose(w)), output, fmt)
    return EXIT_OK


@cli.command("eval-rule")
@click.argument("rule_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("welfare_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--coalition", "coalitions", multiple=True,
              help="Coalition to report, as comma-joined labels; repeatable. Default: all.")
@_common
def cmd_eval_rule(rule_file, welfare_file, coalitions, budget, seed, output, fmt):
    """Shares a rule assigns on a welfare function."""
    players, spec = ser.parse_rule_doc(ser.load_json(rule_file))
    w = ser.parse_welfare_doc(ser.load_json(welfare_file))
    if w.players != players:
        raise ser.SchemaError("/players", "rule and welfare files use different players")
    f = build_rule(spec, w)
    masks = [ser.parse_subset(players, c, f"--coalition {c}") for c in coalitions] or None
    doc = {"schema": ser.SCHEMA, "players": list(players.ids), "shares": ser.dump_rule_shares(f, masks)}
    _emit(doc, output, fmt)
    return EXIT_OK


@cli.command("solve-game")
@click.argument("game_file", type=click.Path(exists=True, dir_okay=False))
@_common
def cmd_solve_game(game_file, budget, seed, output, fmt):
    """Pure Nash equilibria, or a best-response cycle when there are none."""
    g = ser.parse_game_doc(ser.load_json(game_file))
    pne = find_pne(g, budget)
    cycle = None if pne else best_response_cycle(g, budget)
    doc = {
        "schema": ser.SCHEMA,
        "pne": [ser.dump_profile(g, p) for p in pne],
        "pne_count": len(pne),
        "cycle": ser.dump_cycle(g, cycle) if cycle else None,
    }
    _emit(doc, output, fmt)
    return EXIT_OK


@cli.command("potential")
@click.argument("game_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("omega_file", type=click.Path(exists=True, dir_okay=False))
@_common
def cmd_potential(game_file, omega_file, budget, seed, output, fmt):
    """Vector potential of every profile and the potential-property verdict."""
    g = ser.parse_game_doc(ser.load_json(game_file))
    omega = ser.parse_omega_doc(ser.load_json(omega_file))
    holds, violation = verify_potential_property(g, omega, budget)
    table = [
        {"profile": ser.dump_profile(g, p),
         "potential": [ser.dump_rational(x) for x in global_potential(g, omega, p)]}
        for p in all_profiles(g)
    ]
    doc = {
        "schema": ser.SCHEMA,
        "potential": table,
        "maximizers": [ser.dump_profile(g, p) for p in potential_maximizers(g, omega, budget)],
        "property": {
            "holds": holds,
            "violation": None if violation is None else {
                "profile": ser.dump_profile(g, violation.profile),
                "player": g.players.ids[violation.player],
                "action": ",".join(sorted(g.actions[violation.player][violation.action])),
                "utility_change": ser.dump_rational(violation.utility_change),
                "potential_change": [ser.dump_rational(x) for x in violation.potential_change],
            },
        },
    }
    _emit(doc, output, fmt)
    return EXIT_OK


@cli.command("transform")
@click.argument("ground_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("omega_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--direction", type=click.Choice(["gwsv-to-gwmc", "gwmc-to-gwsv"]),
              default="gwsv-to-gwmc", show_default=True)
@_common
def cmd_transform(ground_file, omega_file, direction, budget, seed, output, fmt):
    """Map a ground welfare between the Shapley-type and marginal-type families."""
    ground = ser.parse_basis_doc(ser.load_json(ground_file))
    omega = ser.parse_omega_doc(ser.load_json(omega_file))
    if direction == "gwsv-to-gwmc":
        out = gwsv_ground_to_gwmc_ground(ground, omega)
    else:
        out = gwmc_ground_to_gwsv_ground(ground, omega)
    _emit(ser.basis_doc(out), output, fmt)
    return EXIT_OK


@cli.command("classify")
@click.argument("pairs_file", type=click.Path(exists=True, dir_okay=False))
@_common
def cmd_classify(pairs_file, budget, seed, output, fmt):
    """Certify a rule set or report the first failed condition with a counterexample game."""
    inp = ser.parse_pairs_doc(ser.load_json(pairs_file))
    verdict = classify(inp, budget)
    _emit(ser.verdict_doc(inp.players, verdict), output, fmt)
    return EXIT_OK if verdict.passed else EXIT_FAIL


@cli.command("gen-counterexample")
@click.option("--stage", required=True, type=click.Choice([s.value for s in Stage]))
@click.option("--witness", "witness_file", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Pairs document with an added \"witness\" object in verdict form.")
@_common
def cmd_gen_counterexample(stage, witness_file, budget, seed, output, fmt):
    """Build and verify the equilibrium-free game for a stage failure."""
    doc = ser.load_json(witness_file)
    inp = ser.parse_pairs_doc(doc)
    witness = ser.parse_witness(inp.players, doc.get("witness"))
    analyses = [analyse_pair(p)[1] for p in reduce_to_budget_balanced(inp).pairs]
    game, info = counterexample_for(Stage(stage), inp, analyses, witness, budget)
    pne = find_pne(game, budget)
    out = {
        "schema": ser.SCHEMA,
        "game": ser.dump_game(game),
        "verification": {
            "stage": stage,
            "pne_count": len(pne),
            "profiles": game.profile_count(),
            "construction": ser.dump_witness(inp.players, info),
        },
    }
    _emit(out, output, fmt)
    return EXIT_OK


def main(argv: Optional[list[str]] = None) -> int:
    try:
        code = cli.main(args=argv, prog_name="sharekit", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_ERROR
    except click.ClickException as exc:
        exc.show()
        return EXIT_ERROR
    except (ser.SchemaError, ModelError, PremiseError, BudgetExceeded, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ERROR
    except ConstructionError as exc:
        click.echo(f"internal error: {exc}", err=True)
        return EXIT_ERROR
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
