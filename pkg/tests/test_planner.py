# tests/test_planner.py
import glob
import os
import stat

import pytest

from app.evaluation.suite import load_suite
from app.exceptions import NodeCapExceededError
from app.multirobot.models import parse_goal
from app.pddl.parser import parse_domain, parse_problem
from app.pddl.semantics import validate_plan
from app.planner.external import ExternalSolverConfig, SolverFailure, external_solve
from app.planner.heuristics import AdditiveHeuristic, BlindHeuristic
from app.planner.search import (
    BudgetExhausted,
    NoneWithinDepth,
    OptimalPlan,
    Plan,
    SearchBudget,
    Unsolvable,
    bfs_oracle,
    solve,
)
from app.planner.strategy import ExternalPlanner, InternalPlanner, default_planner
from app.planner.task import compile_task
from tests.conftest import BLOCKS, BLOCKS_PROBLEM, SUITE

# GBFS is not optimal; on these small problems it stays within this many extra actions.
GBFS_TOLERANCE = 3


@pytest.fixture
def blocks():
    domain = parse_domain(BLOCKS)
    return domain, parse_problem(BLOCKS_PROBLEM, domain)


def _problem(domain, init, goal):
    text = f"""(define (problem p) (:domain blocks) (:objects a b c - block)
      (:init {init}) (:goal (and {goal})))"""
    return parse_problem(text, domain)


def test_compile_task_interns_atoms(blocks):
    domain, problem = blocks
    task = compile_task(domain, problem)
    assert len(task.operators) == 24
    assert task.table.atoms(task.init) == problem.init
    assert not task.goal_reached(task.init)


def test_successor_is_add_then_delete(blocks):
    domain, problem = blocks
    task = compile_task(domain, problem)
    for op in task.operators:
        if op.applicable(task.init):
            succ = op.successor(task.init)
            assert op.add - op.delete <= succ
            assert not (op.delete - op.add) & succ


def test_solve_finds_a_valid_plan(blocks):
    domain, problem = blocks
    result = solve(domain, problem)
    assert isinstance(result, Plan)
    assert validate_plan(domain, problem, result.actions).valid


def test_oracle_is_shortest(blocks):
    domain, problem = blocks
    result = bfs_oracle(domain, problem)
    assert isinstance(result, OptimalPlan)
    assert len(result) == 4
    assert validate_plan(domain, problem, result.actions).valid


def test_solve_stays_close_to_oracle(blocks):
    domain, problem = blocks
    for goal in ["(on a b)", "(on b c) (on a b)", "(on c b) (ontable a)", "(holding b)"]:
        p = _problem(domain, "(ontable a) (ontable b) (on c a) (clear b) (clear c) (handempty)", goal)
        found, best = solve(domain, p), bfs_oracle(domain, p)
        assert isinstance(found, Plan) and isinstance(best, OptimalPlan)
        assert 0 <= len(found) - len(best) <= GBFS_TOLERANCE


def test_solve_is_deterministic(blocks):
    domain, problem = blocks
    first = solve(domain, problem)
    second = solve(domain, problem)
    assert first.actions == second.actions


def test_goal_already_true_gives_empty_plan(blocks):
    domain, _ = blocks
    p = _problem(domain, "(ontable a) (ontable b) (ontable c) (clear a) (clear b) (clear c) (handempty)",
                 "(ontable a)")
    assert len(solve(domain, p)) == 0
    assert len(bfs_oracle(domain, p)) == 0


def test_unsolvable_problem(blocks):
    domain, _ = blocks
    p = _problem(domain, "(ontable a) (ontable b) (ontable c) (clear a) (clear b) (clear c) (handempty)",
                 "(holding a) (holding b)")
    assert isinstance(solve(domain, p), Unsolvable)
    assert isinstance(bfs_oracle(domain, p), NoneWithinDepth)


def test_expansion_budget(blocks):
    domain, problem = blocks
    result = solve(domain, problem, SearchBudget(max_expansions=1))
    assert isinstance(result, BudgetExhausted)
    assert result.expanded == 1


def test_oracle_depth_and_node_caps(blocks):
    domain, problem = blocks
    assert isinstance(bfs_oracle(domain, problem, depth_cap=2), NoneWithinDepth)
    with pytest.raises(NodeCapExceededError):
        bfs_oracle(domain, problem, node_cap=3)


def test_blind_heuristic_also_solves(blocks):
    domain, problem = blocks
    result = solve(domain, problem, heuristic=BlindHeuristic())
    assert validate_plan(domain, problem, result.actions).valid


def test_additive_heuristic_counts_negative_goals(kitchen_case):
    env = kitchen_case.with_goal(parse_goal(["(not (lit roomlight))"]))
    task = compile_task(env.domain, env.joint_problem())
    assert AdditiveHeuristic().evaluate(task, task.init) == 1.0


def _fake_planner(tmp_path, body: str) -> str:
    path = tmp_path / "fake-planner.sh"
    path.write_text("#!/bin/sh\n" + body + "\n", encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


def test_external_planner_plan_is_validated(blocks, tmp_path):
    domain, problem = blocks
    script = _fake_planner(tmp_path, "printf '(unstack c a)\\n(putdown c)\\n(pickup a)\\n(stack a b)\\n' > \"$3\"")
    result = external_solve(domain, problem, ExternalSolverConfig(script))
    assert isinstance(result, Plan)
    assert [a.name for a in result.actions] == ["unstack", "putdown", "pickup", "stack"]


def test_external_planner_invalid_plan(blocks, tmp_path):
    domain, problem = blocks
    script = _fake_planner(tmp_path, "printf '(pickup a)\\n' > \"$3\"")
    result = external_solve(domain, problem, ExternalSolverConfig(script))
    assert isinstance(result, SolverFailure)
    assert result.kind == "validation"
    assert result.report.violated == "(clear a)"


def test_external_planner_failures(blocks, tmp_path):
    domain, problem = blocks
    assert external_solve(domain, problem, ExternalSolverConfig(_fake_planner(tmp_path, "exit 3"))).kind == "nonzero-exit"
    missing = os.path.join(str(tmp_path), "no-such-planner")
    assert external_solve(domain, problem, ExternalSolverConfig(missing)).kind == "launch"


def test_default_planner_follows_settings(monkeypatch):
    from app.config import settings

    assert isinstance(default_planner(), InternalPlanner)
    monkeypatch.setattr(settings, "EXTERNAL_PLANNER", "/usr/bin/planner")
    planner = default_planner()
    assert isinstance(planner, ExternalPlanner)
    assert planner.cfg.executable == "/usr/bin/planner"


def test_external_planner_plan_file_not_utf8(blocks, tmp_path):
    domain, problem = blocks
    script = _fake_planner(tmp_path, "printf '\\377\\376(pickup a)\\n' > \"$3\"")
    result = external_solve(domain, problem, ExternalSolverConfig(script))
    assert isinstance(result, SolverFailure)
    assert result.kind == "unparseable"
    assert "not UTF-8" in result.message


def test_external_planner_binary_stdout_is_tolerated(blocks, tmp_path):
    domain, problem = blocks
    script = _fake_planner(tmp_path, "printf '\\377\\376'\n"
                                     "printf '(unstack c a)\\n(putdown c)\\n(pickup a)\\n(stack a b)\\n' > \"$3\"")
    assert isinstance(external_solve(domain, problem, ExternalSolverConfig(script)), Plan)


# ===============================
# Bundled suite
# ===============================

@pytest.fixture(scope="module")
def suite():
    return load_suite(SUITE)


SUITE_TASKS = sorted(os.path.splitext(os.path.basename(p))[0]
                     for p in glob.glob(os.path.join(SUITE, "tasks", "*.yaml")))


def test_suite_has_twelve_tasks():
    assert len(SUITE_TASKS) == 12


@pytest.mark.parametrize("task_id", SUITE_TASKS)
def test_solve_is_valid_and_never_shorter_than_oracle(suite, task_id):
    env = suite.task(task_id).env
    problem, actions = env.joint_problem(), env.joint_actions()
    found = solve(env.domain, problem, actions=actions)
    best = bfs_oracle(env.domain, problem, actions=actions)
    assert isinstance(found, Plan) and isinstance(best, OptimalPlan)
    assert len(found) >= len(best) == suite.task(task_id).gt_action_count
    assert validate_plan(env.domain, problem, found.actions).valid
    assert validate_plan(env.domain, problem, best.actions).valid
