# tests/test_evaluation.py
import dataclasses
import os
import random
import textwrap

import pytest
from pydantic import ValidationError

from app.evaluation.executor import execute_symbolic
from app.evaluation.metrics import metrics, render_table
from app.evaluation.schemas import EpisodeResult, Fault, FaultSpec, TaskCase, TaskCategory
from app.evaluation.suite import SuiteRunConfig, ground_truth, load_suite, run_episode, run_suite
from app.exceptions import ConfigurationError, SuiteLoadError
from app.llm.backend import LLMBackend
from app.multirobot.merge import deorder
from app.multirobot.models import parse_goal
from app.pddl.grounding import bind
from tests.conftest import SUITE


@pytest.fixture(scope="module")
def suite():
    return load_suite(SUITE)


# ===============================
# Metrics
# ===============================

@pytest.fixture
def truths(kitchen_case):
    two = kitchen_case.with_goal(parse_goal(["(in tomato fridge)", "(not (lit roomlight))"]))
    one = kitchen_case.with_goal(parse_goal(["(not (lit roomlight))"]))
    return {
        "t1": TaskCase("t1", TaskCategory.compound, "Store and switch.", two, gt_action_count=4, gt_makespan=2),
        "t2": TaskCase("t2", TaskCategory.vague, "Make it dark.", one, gt_action_count=4, gt_makespan=2),
    }


@pytest.fixture
def results():
    return [
        EpisodeResult(task_id="t1", category="compound", seed=0, success=True, action_count=8, makespan=2),
        EpisodeResult(task_id="t1", category="compound", seed=1, success=False, achieved=["(in tomato fridge)"]),
        EpisodeResult(task_id="t2", category="vague", seed=0, success=True, action_count=3, makespan=4),
    ]


def test_metrics_overall_and_per_category(results, truths):
    report = metrics(results, truths)
    overall = report.overall
    assert (overall.episodes, overall.successes) == (3, 2)
    assert overall.sr == pytest.approx(2 / 3)
    assert overall.gcr == pytest.approx(2.5 / 3)
    assert overall.ru == pytest.approx(0.75)
    assert overall.eff == pytest.approx(0.75)

    compound = report.categories["compound"]
    assert (compound.sr, compound.gcr, compound.ru, compound.eff) == pytest.approx((0.5, 0.75, 0.5, 1.0))
    assert report.categories["vague"].ru == 1.0
    assert "complex" not in report.categories


def test_metrics_reject_unknown_tasks(results, truths):
    results.append(EpisodeResult(task_id="t9", category="vague", seed=0, success=False))
    with pytest.raises(KeyError):
        metrics(results, truths)


def test_render_table_aligns_groups(results, truths):
    table = render_table({"hierarchical": metrics(results, truths)})
    lines = table.splitlines()
    assert lines[0].split("|")[1].strip() == "Compound"
    assert "Complex" not in lines[0]
    assert lines[1].endswith("    SR   GCR    RU   Eff")
    assert lines[3] == ("hierarchical |   0.50  0.75  0.50  1.00 |   1.00  1.00  1.00  0.50 "
                        "|   0.67  0.83  0.75  0.75")


def _random_results(rng, truths, episodes=10):
    results = []
    for seed in range(episodes):
        task_id = rng.choice(sorted(truths))
        case = truths[task_id]
        success = rng.random() < 0.6
        achieved = case.goal_atoms if success else [g for g in case.goal_atoms if rng.random() < 0.5]
        results.append(EpisodeResult(
            task_id=task_id,
            category=case.category,
            seed=seed,
            success=success,
            achieved=achieved,
            action_count=rng.randint(1, 12) if success else 0,
            makespan=rng.randint(1, 6) if success else 0,
        ))
    return results


def _independent_fold(results, truths):
    if not results:
        return None
    n = len(results)
    sr = sum(r.success for r in results) / n
    gcr = 0.0
    for r in results:
        goal = truths[r.task_id].goal_atoms
        gcr += 1.0 if r.success else sum(g in r.achieved for g in goal) / len(goal)
    won = [r for r in results if r.success]
    ru = sum(min(1.0, truths[r.task_id].gt_action_count / r.action_count) for r in won) / len(won) if won else 0.0
    eff = sum(min(1.0, truths[r.task_id].gt_makespan / r.makespan) for r in won) / len(won) if won else 0.0
    return sr, gcr / n, ru, eff


@pytest.mark.parametrize("seed", range(20))
def test_metrics_agree_with_an_independent_fold(truths, seed):
    rng = random.Random(seed)
    results = _random_results(rng, truths)
    report = metrics(results, truths)

    o = report.overall
    assert (o.sr, o.gcr, o.ru, o.eff) == pytest.approx(_independent_fold(results, truths))
    for category, m in report.categories.items():
        subset = [r for r in results if r.category.value == category]
        assert (m.sr, m.gcr, m.ru, m.eff) == pytest.approx(_independent_fold(subset, truths))
    for m in [o, *report.categories.values()]:
        assert all(0.0 <= v <= 1.0 for v in (m.sr, m.gcr, m.ru, m.eff))


# ===============================
# Execution
# ===============================

@pytest.fixture
def pickup(kitchen_case):
    problem = kitchen_case.joint_problem()
    return deorder([bind(kitchen_case.domain, problem, "pickupobject", ["robot0", "tomato", "counter"])])


def test_execution_reaches_goal(kitchen_case, pickup):
    trace = execute_symbolic(pickup, kitchen_case.init, goal=parse_goal(["(holding robot0 tomato)"]))
    assert trace.success
    assert trace.steps == ["(pickupobject robot0 tomato counter)"]
    assert trace.achieved == ["(holding robot0 tomato)"]
    assert len(trace.states) == 2


def test_fault_deletes_atom_before_step(kitchen_case, pickup):
    faults = FaultSpec(faults=[Fault(atom="(handempty robot0)", step=0)])
    trace = execute_symbolic(pickup, kitchen_case.init, faults)
    assert not trace.success
    assert trace.injected == [(0, "(handempty robot0)")]
    assert trace.failed_step == 0
    assert trace.failed_robot == "robot0"
    assert trace.report.violated == "(handempty robot0)"


def test_fault_limited_to_iterations(kitchen_case, pickup):
    faults = FaultSpec(faults=[Fault(atom="(handempty robot0)", action="pickupobject", iterations=[1])])
    assert execute_symbolic(pickup, kitchen_case.init, faults, iteration=0).success
    assert not execute_symbolic(pickup, kitchen_case.init, faults, iteration=1).success


def test_random_faults_are_seeded(kitchen_case, pickup):
    faults = FaultSpec(fault_rate=1.0, seed=3)
    first = execute_symbolic(pickup, kitchen_case.init, faults)
    again = execute_symbolic(pickup, kitchen_case.init, faults)
    assert not first.success
    assert len(first.injected) == 1
    assert first.injected == again.injected


@pytest.mark.parametrize("fields", [
    {"atom": "(open fridge)"},
    {"atom": "(open fridge)", "step": 0, "action": "putobject"},
    {"atom": "(not (open fridge))", "step": 0},
    {"atom": "(open", "step": 0},
])
def test_malformed_faults(fields):
    with pytest.raises(ValidationError):
        Fault(**fields)


# ===============================
# Suite
# ===============================

def _write_suite(root, task):
    domain = os.path.join(SUITE, "domains", "kitchen.pddl")
    (root / "envs").mkdir()
    (root / "tasks").mkdir()
    (root / "envs" / "mini.yaml").write_text(textwrap.dedent(f"""\
        id: mini
        domain: {domain}
        robots: {{robot0: manipulator}}
        capabilities: {{manipulator: [goto, pickupobject]}}
        objects: {{location: [counter], item: [tomato]}}
        init: ["(at robot0 counter)", "(handempty robot0)", "(at tomato counter)"]
        """), encoding="utf-8")
    (root / "tasks" / "t.yaml").write_text(textwrap.dedent(task), encoding="utf-8")


def test_load_suite_computes_ground_truth(tmp_path):
    _write_suite(tmp_path, """\
        category: vague
        instruction: Pick up the tomato.
        environment: mini
        goal: ["(holding robot0 tomato)"]
        """)
    loaded = load_suite(str(tmp_path))
    (case,) = loaded.tasks
    assert case.id == "t"
    assert (case.gt_action_count, case.gt_makespan) == (1, 1)
    assert loaded.script is None


@pytest.mark.parametrize("task", [
    "instruction: x\nenvironment: mini\ngoal: ['(holding robot0 tomato)']\n",
    "category: vague\ninstruction: x\nenvironment: nowhere\ngoal: ['(holding robot0 tomato)']\n",
    "category: vague\ninstruction: x\nenvironment: mini\n",
    "category: vague\ninstruction: x\nenvironment: mini\ngoal: ['(in tomato fridge)']\n",
])
def test_load_suite_rejects_bad_tasks(tmp_path, task):
    _write_suite(tmp_path, task)
    with pytest.raises(SuiteLoadError):
        load_suite(str(tmp_path))


def test_missing_suite_directory(tmp_path):
    with pytest.raises(SuiteLoadError):
        load_suite(str(tmp_path / "absent"))


def test_bundled_suite(suite):
    assert len(suite.tasks) == 12
    assert {t.category for t in suite.tasks} == set(TaskCategory)
    assert suite.script is not None
    assert suite.task("case").gt_action_count == 7
    assert ground_truth(suite.task("va1").env) == (1, 1)
    with pytest.raises(SuiteLoadError):
        suite.task("nope")


def test_run_suite_is_deterministic(suite):
    subset = dataclasses.replace(suite, tasks=tuple(suite.task(t) for t in ("va2", "case", "b1")))
    config = SuiteRunConfig(seeds=2)
    first = run_suite(subset, config)
    again = run_suite(subset, dataclasses.replace(config, parallel=3))
    assert first.results == again.results
    assert first.report == again.report

    assert [(r.task_id, r.seed) for r in first.results] == [
        ("b1", 0), ("b1", 1), ("case", 0), ("case", 1), ("va2", 0), ("va2", 1)]
    by_task = {r.task_id: r for r in first.results}
    assert by_task["case"].success and by_task["case"].iterations == 3
    assert by_task["case"].action_count == 7
    assert by_task["b1"].iterations == 2
    assert not by_task["va2"].success
    assert by_task["va2"].achieved == ["(in tomato fridge)"]
    assert first.report.categories["vague"].gcr == pytest.approx(0.5)


def test_unknown_executor(suite):
    with pytest.raises(ConfigurationError):
        run_suite(suite, SuiteRunConfig(executor="carrier-pigeon"))


class _CrashingBackend(LLMBackend):
    def _invoke(self, request):
        raise RuntimeError("socket closed")


def test_unexpected_backend_crash_is_recorded(suite):
    result = run_episode(suite.task("va1"), 0, _CrashingBackend())
    assert not result.success
    assert result.error == "RuntimeError: socket closed"
    assert result.task_id == "va1"
