import json
import subprocess
import sys
from importlib import resources

import pytest

from sharekit import serialization as ser
from sharekit.cli import main

from support import fixture_doc


def _fixture_path(name):
    return str(resources.files("sharekit").joinpath("fixtures", name))


def _write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _game_doc():
    return {"schema": ser.SCHEMA, "game": {
        "players": ["a", "b"],
        "welfares": {"w": {"a": "1", "b": "1", "a,b": "1"}},
        "rules": {"f": {"family": "shapley"}},
        "resources": [{"id": "r1", "welfare": "w", "rule": "f"}, {"id": "r2", "welfare": "w", "rule": "f"}],
        "actions": {"a": [["r1"], ["r2"]], "b": [["r1"], ["r2"]]},
    }}


def _uniform_omega(labels):
    return {"schema": ser.SCHEMA, "players": labels,
            "omega": {"lambda": {x: "1" for x in labels}, "sigma": [labels]}}


def test_decompose_example_welfare(capsys):
    code, out, _ = _run(capsys, "decompose", _fixture_path("example6_welfare.json"))
    assert code == 0
    basis = json.loads(out)["basis"]
    assert basis == {"i": "5", "j": "3", "l": "3", "i,j": "-2", "i,k": "-3", "j,k": "-3", "i,j,l": "-2"}


def test_eval_rule_with_coalition_filter(tmp_path, capsys):
    rule = _write(tmp_path, "rule.json", {"schema": ser.SCHEMA, "players": ["i", "j", "k"],
                                          "rule": {"family": "shapley"}})
    code, out, _ = _run(capsys, "eval-rule", rule, _fixture_path("appendix1_welfare.json"),
                        "--coalition", "i,j,k")
    assert code == 0
    assert json.loads(out)["shares"] == {"i,j,k": {"i": "5/6", "j": "4/3", "k": "11/6"}}


def test_eval_rule_rejects_player_mismatch(tmp_path, capsys):
    rule = _write(tmp_path, "rule.json", {"schema": ser.SCHEMA, "players": ["a"], "rule": {"family": "shapley"}})
    code, _, err = _run(capsys, "eval-rule", rule, _fixture_path("appendix1_welfare.json"))
    assert code == 1 and "/players" in err


def test_solve_game_reports_equilibria(tmp_path, capsys):
    game = _write(tmp_path, "game.json", _game_doc())
    code, out, _ = _run(capsys, "solve-game", game)
    doc = json.loads(out)
    assert code == 0
    assert doc["pne_count"] == 2 and doc["cycle"] is None
    assert doc["pne"] == [{"a": "r1", "b": "r2"}, {"a": "r2", "b": "r1"}]


def test_solve_game_budget_error(tmp_path, capsys):
    game = _write(tmp_path, "game.json", _game_doc())
    code, _, err = _run(capsys, "solve-game", game, "--budget", "2")
    assert code == 1 and err.startswith("error:")


def test_budget_falls_back_to_environment(tmp_path, capsys, monkeypatch):
    game = _write(tmp_path, "game.json", _game_doc())
    monkeypatch.setenv("SHAREKIT_BUDGET", "2")
    assert _run(capsys, "solve-game", game)[0] == 1
    monkeypatch.setenv("SHAREKIT_BUDGET", "4")
    assert _run(capsys, "solve-game", game)[0] == 0


def test_potential_table(tmp_path, capsys):
    game = _write(tmp_path, "game.json", _game_doc())
    omega = _write(tmp_path, "omega.json", _uniform_omega(["a", "b"]))
    code, out, _ = _run(capsys, "potential", game, omega)
    doc = json.loads(out)
    assert code == 0
    assert doc["property"] == {"holds": True, "violation": None}
    assert len(doc["potential"]) == 4
    assert doc["maximizers"] == [{"a": "r1", "b": "r2"}, {"a": "r2", "b": "r1"}]


def test_transform_round_trip(tmp_path, capsys):
    ground = _write(tmp_path, "ground.json", {"schema": ser.SCHEMA, "players": ["a", "b"],
                                              "basis": {"a,b": "1"}})
    omega = _write(tmp_path, "omega.json", {"schema": ser.SCHEMA, "players": ["a", "b"],
                                            "omega": {"lambda": {"a": "1", "b": "3"}, "sigma": [["a", "b"]]}})
    code, out, _ = _run(capsys, "transform", ground, omega)
    assert code == 0
    assert json.loads(out)["basis"] == {"a,b": "1/4"}
    mc = _write(tmp_path, "mc.json", json.loads(out))
    code, out, _ = _run(capsys, "transform", mc, omega, "--direction", "gwmc-to-gwsv")
    assert json.loads(out)["basis"] == {"a,b": "1"}


def test_classify_pass_and_fail_exit_codes(capsys):
    code, out, _ = _run(capsys, "classify", _fixture_path("example6_f2.json"))
    assert code == 0 and json.loads(out)["outcome"] == "pass"
    code, out, _ = _run(capsys, "classify", _fixture_path("example6_f4.json"))
    doc = json.loads(out)
    assert code == 2
    assert doc["outcome"] == "fail" and doc["pne_count"] == 0


def test_malformed_rational_is_a_schema_error(tmp_path, capsys):
    doc = fixture_doc("example6_welfare.json")
    doc["welfare"]["i"] = "1/0"
    code, out, err = _run(capsys, "decompose", _write(tmp_path, "w.json", doc))
    assert code == 1 and out == ""
    assert "/welfare/i" in err and "zero denominator" in err


def test_wrong_schema_and_missing_file(tmp_path, capsys):
    code, _, err = _run(capsys, "decompose", _write(tmp_path, "w.json", {"schema": "other/2"}))
    assert code == 1 and "/schema" in err
    assert _run(capsys, "decompose", str(tmp_path / "absent.json"))[0] == 1
    assert _run(capsys, "no-such-command")[0] == 1


@pytest.mark.parametrize("name", ["example6_f1.json", "example6_f3.json", "example6_f4.json"])
def test_gen_counterexample_from_classify_witness(name, tmp_path, capsys):
    code, out, _ = _run(capsys, "classify", _fixture_path(name))
    verdict = json.loads(out)
    assert code == 2
    doc = fixture_doc(name)
    doc["witness"] = verdict["witness"]
    path = _write(tmp_path, "witness.json", doc)
    code, out, _ = _run(capsys, "gen-counterexample", "--stage", verdict["stage"], "--witness", path)
    report = json.loads(out)
    assert code == 0
    assert report["verification"]["pne_count"] == 0
    assert report["game"] == verdict["counterexample_game"]


def test_gen_counterexample_rejects_bad_witness(tmp_path, capsys):
    doc = fixture_doc("example6_f4.json")
    doc["witness"] = {"cycle": ["i", "j", "k"], "coalitions": [
        {"pair": 0, "coalition": "i,j"}, {"pair": 0, "coalition": "j,k"}, {"pair": 0, "coalition": "i,l"}]}
    code, _, err = _run(capsys, "gen-counterexample", "--stage", "cyclic_consistency",
                        "--witness", _write(tmp_path, "witness.json", doc))
    assert code == 1 and err.startswith("error:")


def test_output_file_and_pretty_format(tmp_path, capsys):
    target = tmp_path / "out.json"
    code, out, _ = _run(capsys, "decompose", _fixture_path("appendix1_welfare.json"),
                        "--output", str(target), "--format", "pretty")
    assert code == 0 and out == ""
    text = target.read_text(encoding="utf-8")
    assert text == json.dumps(json.loads(text), indent=2) + "\n"


def test_repeated_runs_are_byte_identical():
    argv = [sys.executable, "-m", "sharekit", "classify", _fixture_path("example6_f4.json"), "--seed", "7"]
    first = subprocess.run(argv, capture_output=True)
    second = subprocess.run(argv, capture_output=True)
    assert first.returncode == second.returncode == 2
    assert first.stdout == second.stdout and first.stdout


@pytest.mark.parametrize("name", sorted(
    p.name for p in resources.files("sharekit").joinpath("fixtures").iterdir() if p.name.endswith(".json")))
def test_bundled_fixtures_round_trip(name):
    doc = fixture_doc(name)
    if "pairs" in doc:
        parse, dump = ser.parse_pairs_doc, ser.pairs_doc
    elif "basis" in doc:
        parse, dump = ser.parse_basis_doc, ser.basis_doc
    else:
        parse, dump = ser.parse_welfare_doc, ser.welfare_doc
    value = parse(doc)
    assert parse(json.loads(ser.dumps(dump(value)))) == value
