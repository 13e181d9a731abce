# tests/test_cli.py
import json
import os

import pytest

from app.config import settings
from app.main import EXIT_CONFIG, EXIT_OK, EXIT_PLANNING_FAILED, main
from tests.conftest import SUITE

CASE_ENV = os.path.join(SUITE, "envs", "kitchen_case.yaml")
CASE_INSTRUCTION = "Put the tomato into the fridge and turn off the room light."
CASE_GOAL = ["--goal", "(in tomato fridge)", "--goal", "(not (lit roomlight))"]
SCRIPT = os.path.join(SUITE, "script.yaml")


def _plan(out, *extra, command="plan"):
    return main([command, CASE_INSTRUCTION, "--env", CASE_ENV, *CASE_GOAL, "--out", str(out), *extra])


def test_plan_writes_artifacts(tmp_path, suite_script, capsys):
    assert _plan(tmp_path, "--script", suite_script) == EXIT_OK
    printed = capsys.readouterr().out
    assert f"plan: {tmp_path / 'plan.json'}" in printed
    with open(tmp_path / "plan.json", encoding="utf-8") as f:
        plan = json.load(f)
    assert plan["cost"] == 7
    for name in ("trace.jsonl", "prompts.jsonl", "specs.jsonl"):
        assert (tmp_path / name).exists()


def test_plan_failure_exit_code(tmp_path, suite_script, capsys):
    assert _plan(tmp_path, "--script", suite_script, "--kmax", "1") == EXIT_PLANNING_FAILED
    assert "no valid plan after 1 iterations" in capsys.readouterr().err
    assert not (tmp_path / "plan.json").exists()


def test_record_then_replay(tmp_path, suite_script):
    recorded, replayed = tmp_path / "recorded", tmp_path / "replayed"
    assert _plan(recorded, "--script", suite_script, command="record") == EXIT_OK
    cassette = recorded / "cassette.json"
    assert cassette.exists()
    assert _plan(replayed, "--cassette", str(cassette)) == EXIT_OK
    assert (recorded / "plan.json").read_text() == (replayed / "plan.json").read_text()
    assert (recorded / "trace.jsonl").read_text() == (replayed / "trace.jsonl").read_text()


@pytest.mark.parametrize("extra", [
    ["--script", SCRIPT, "--goal", "(in tomato"],
    ["--script", SCRIPT, "--layers", "1"],
    ["--backend", "scripted"],
    ["--cassette", "/no/such/cassette.json"],
    ["--config", "/no/such/config.yaml"],
])
def test_configuration_errors(tmp_path, extra, capsys):
    assert _plan(tmp_path, *extra) == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("error: ")


def test_live_backend_needs_a_key(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "OPENAI_API_KEY", None)
    assert _plan(tmp_path) == EXIT_CONFIG


def test_missing_environment(tmp_path, suite_script, capsys):
    code = main(["plan", "x", "--env", str(tmp_path / "none.yaml"), "--script", suite_script])
    assert code == EXIT_CONFIG
    assert "none.yaml" in capsys.readouterr().err


def test_prompts_shows_updates(tmp_path, suite_script, capsys):
    _plan(tmp_path, "--script", suite_script)
    capsys.readouterr()
    assert main(["prompts", str(tmp_path / "prompts.jsonl"), "E1.0"]) == EXIT_OK
    shown = capsys.readouterr().out
    assert shown.startswith("Owner E1.0\nVersion 0 (initial)\n")
    assert "Iteration 0" in shown
    assert 'Append "before putting the tomato into the fridge, it is necessary to open the fridge."' in shown

    assert main(["prompts", str(tmp_path / "trace.jsonl"), "E1.0"]) == EXIT_OK
    from_trace = capsys.readouterr().out
    assert from_trace == shown
    assert 'Append "after opening the fridge, move to a non-blocking waypoint to clear the doorway."' in shown


def test_prompts_unknown_owner(tmp_path, suite_script, capsys):
    _plan(tmp_path, "--script", suite_script)
    assert main(["prompts", str(tmp_path / "prompts.jsonl"), "E9.9"]) == EXIT_CONFIG
    assert "known: E0.0" in capsys.readouterr().err


@pytest.mark.parametrize("content", [
    '{"owner": "E1.0", "text": "a"}\n{"owner": "E1.0", "te\n',
    '[1, 2]\n',
    '{"kind": "prompt-version", "data": {}}\n',
])
def test_prompts_rejects_a_malformed_log(tmp_path, content, capsys):
    log = tmp_path / "prompts.jsonl"
    log.write_text(content, encoding="utf-8")
    assert main(["prompts", str(log), "E1.0"]) == EXIT_CONFIG
    assert capsys.readouterr().err.startswith("error: ")


def test_oracle_lists_ground_truths(capsys):
    assert main(["oracle"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["task", "category", "actions", "makespan"]
    case = next(line.split() for line in lines if line.startswith("case "))
    assert case[:3] == ["case", "compound", "7"]
    assert len(lines) == 13


def test_eval_bundled_suite(tmp_path, capsys):
    assert main(["eval", "--seeds", "1", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.splitlines()[3].startswith("hierarchical |")
    with open(tmp_path / "metrics.json", encoding="utf-8") as f:
        report = json.load(f)
    assert report["overall"]["episodes"] == 12
    assert 0 < report["overall"]["sr"] < 1
    assert (tmp_path / "metrics.txt").read_text() in out
    assert sum(1 for _ in open(tmp_path / "episodes.jsonl", encoding="utf-8")) == 12


def test_eval_ablation_label(tmp_path, capsys):
    assert main(["eval", "--seeds", "1", "--no-meta-sharing", "--out", str(tmp_path)]) == EXIT_OK
    assert "no-meta-sharing |" in capsys.readouterr().out


def test_eval_cassette_runs_are_byte_identical(tmp_path, capsys):
    cassette = str(tmp_path / "suite.json")
    recorded = tmp_path / "recorded"
    assert main(["eval", "--seeds", "1", "--out", str(recorded), "--output-cassette", cassette]) == EXIT_OK
    assert f"cassette: {cassette}" in capsys.readouterr().out

    replays = [tmp_path / "first", tmp_path / "second"]
    for out in replays:
        assert main(["eval", "--seeds", "1", "--cassette", cassette, "--out", str(out)]) == EXIT_OK
    for name in ("metrics.txt", "metrics.json", "episodes.jsonl"):
        assert (replays[0] / name).read_bytes() == (replays[1] / name).read_bytes()
    with open(replays[0] / "metrics.json", encoding="utf-8") as f:
        assert json.load(f)["overall"]["successes"] > 0


def test_eval_cassette_needs_local_executor(tmp_path, capsys):
    code = main(["eval", "--seeds", "1", "--executor", "celery", "--out", str(tmp_path),
                 "--output-cassette", str(tmp_path / "c.json")])
    assert code == EXIT_CONFIG
    assert "--output-cassette" in capsys.readouterr().err
