# tests/test_pddl.py
import dataclasses
import glob
import os
import random

import pytest

from app.exceptions import (
    GroundingExplosionError,
    InapplicableActionError,
    PDDLSemanticError,
    PDDLSyntaxError,
    UnsupportedRequirementError,
)
from app.multirobot.models import load_environment
from app.pddl.grounding import bind, ground
from app.pddl.parser import parse_domain, parse_literal, parse_problem
from app.pddl.schemas import Atom, FailureReason, Literal
from app.pddl.semantics import applicable, apply, validate_plan, validate_plan_naive
from app.pddl.serializer import serialize_domain, serialize_problem
from tests.conftest import BLOCKS, BLOCKS_PROBLEM, SUITE


@pytest.fixture
def flawed_manipulator():
    with open(os.path.join(SUITE, "pddl", "manipulator_flawed.pddl"), "r", encoding="utf-8") as f:
        return parse_domain(f.read())


@pytest.fixture
def blocks():
    domain = parse_domain(BLOCKS)
    return domain, parse_problem(BLOCKS_PROBLEM, domain)


def test_parse_domain_lowercases_and_reads_effects(blocks):
    domain, _ = blocks
    assert domain.name == "blocks"
    unstack = domain.action("unstack")
    assert [p.name for p in unstack.params] == ["?x", "?y"]
    assert Atom("holding", ("?x",)) in unstack.add
    assert Atom("on", ("?x", "?y")) in unstack.delete
    assert parse_domain(BLOCKS.upper()).action("unstack") is not None


def test_kitchen_domain_type_hierarchy(kitchen_domain):
    assert kitchen_domain.is_subtype("robot", "locatable")
    assert kitchen_domain.is_subtype("item", "object")
    assert not kitchen_domain.is_subtype("location", "locatable")
    opener = kitchen_domain.action("openobject")
    assert any(not lit.positive for lit in opener.pre)


def test_syntax_error_carries_position():
    with pytest.raises(PDDLSyntaxError) as info:
        parse_domain("(define (domain d)\n  (:predicates (p ?x)\n")
    assert info.value.line is not None
    assert info.value.column is not None


def test_unbalanced_close_paren_position():
    with pytest.raises(PDDLSyntaxError) as info:
        parse_domain("(define (domain d)))")
    assert (info.value.line, info.value.column) == (1, 20)


@pytest.mark.parametrize("requirement", [":conditional-effects", ":fluents", ":durative-actions"])
def test_unsupported_requirement(requirement):
    with pytest.raises(UnsupportedRequirementError):
        parse_domain(f"(define (domain d) (:requirements :strips {requirement}))")


def test_disjunctive_precondition_is_rejected():
    text = """(define (domain d) (:predicates (p) (q))
      (:action a :parameters () :precondition (or (p) (q)) :effect (and (p))))"""
    with pytest.raises(UnsupportedRequirementError):
        parse_domain(text)


def test_undeclared_predicate_in_action():
    text = """(define (domain d) (:predicates (p))
      (:action a :parameters () :precondition (and (p)) :effect (and (q))))"""
    with pytest.raises(PDDLSemanticError):
        parse_domain(text)


def test_problem_with_unknown_object(blocks):
    domain, _ = blocks
    text = BLOCKS_PROBLEM.replace("(on a b)", "(on a z)")
    with pytest.raises(PDDLSemanticError):
        parse_problem(text, domain)


def test_serialized_domain_parses_back_to_the_same_domain(blocks):
    domain, problem = blocks
    assert parse_domain(serialize_domain(domain)) == domain
    again = parse_problem(serialize_problem(problem), domain)
    assert again.init == problem.init
    assert again.goal == problem.goal


def test_ground_enumerates_typed_bindings(blocks):
    domain, problem = blocks
    actions = ground(domain, problem)
    # pickup/putdown: 3 each, stack/unstack: 9 each
    assert len(actions) == 24
    assert actions[0].name == "pickup"
    assert all(a.robot is None for a in actions)


def test_ground_respects_cap(blocks):
    domain, problem = blocks
    with pytest.raises(GroundingExplosionError):
        ground(domain, problem, cap=10)


def test_bind_tags_robot_owner(kitchen_case):
    action = bind(kitchen_case.domain, kitchen_case.joint_problem(), "goto", ["robot1", "waypoint", "fridgefront"])
    assert action.robot == "robot1"
    assert str(action) == "(goto robot1 waypoint fridgefront)"


def test_bind_rejects_wrong_type(kitchen_case):
    with pytest.raises(PDDLSemanticError):
        bind(kitchen_case.domain, kitchen_case.joint_problem(), "goto", ["tomato", "counter", "fridgefront"])


def test_apply_is_add_then_delete(blocks):
    domain, problem = blocks
    unstack = bind(domain, problem, "unstack", ["c", "a"])
    after = apply(problem.init, unstack)
    assert Atom("holding", ("c",)) in after
    assert Atom("clear", ("a",)) in after
    assert Atom("on", ("c", "a")) not in after
    assert Atom("handempty") not in after
    assert Atom("handempty") in problem.init


def test_apply_raises_when_inapplicable(blocks):
    domain, problem = blocks
    with pytest.raises(InapplicableActionError):
        apply(problem.init, bind(domain, problem, "pickup", ["a"]))


def test_validate_plan_reports_first_violation(blocks):
    domain, problem = blocks
    plan = [bind(domain, problem, "pickup", ["a"])]
    report = validate_plan(domain, problem, plan)
    assert not report.valid
    assert report.step == 0
    assert report.reason == FailureReason.precondition
    assert report.violated == "(clear a)"
    assert "(on c a)" in report.state


def test_validate_plan_goal_failure(blocks):
    domain, problem = blocks
    plan = [bind(domain, problem, "unstack", ["c", "a"]), bind(domain, problem, "putdown", ["c"])]
    report = validate_plan(domain, problem, plan)
    assert report.reason == FailureReason.goal
    assert report.unsatisfied_goals == ["(on a b)"]


def test_validate_plan_agrees_with_naive_checker(blocks):
    domain, problem = blocks
    names = [("unstack", ["c", "a"]), ("putdown", ["c"]), ("pickup", ["a"]), ("stack", ["a", "b"])]
    plan = [bind(domain, problem, n, args) for n, args in names]
    assert validate_plan(domain, problem, plan).valid
    assert validate_plan_naive(problem, plan)
    assert not validate_plan_naive(problem, plan[1:])
    assert not validate_plan(domain, problem, plan[1:]).valid


def test_validate_plan_regrounds_against_authoritative_domain(kitchen_case, flawed_manipulator):
    world = kitchen_case.domain
    problem = kitchen_case.joint_problem()
    flawed = flawed_manipulator
    steps = [("pickupobject", ["robot0", "tomato", "counter"]),
             ("goto", ["robot0", "counter", "fridgefront"]),
             ("putobject", ["robot0", "tomato", "fridge", "fridgefront"])]
    plan = [bind(flawed, problem, n, args) for n, args in steps]
    report = validate_plan(world, problem, plan)
    assert report.step == 2
    assert report.violated == "(open fridge)"


def test_validate_plan_rejects_foreign_robot_and_skill(kitchen_case):
    problem = kitchen_case.joint_problem()
    goto = bind(kitchen_case.domain, problem, "goto", ["robot1", "waypoint", "fridgefront"])
    report = validate_plan(kitchen_case.domain, problem, [goto], robot="robot0")
    assert report.reason == FailureReason.wrong_robot
    switch = bind(kitchen_case.domain, problem, "switchoff", ["robot2", "roomlight", "lightpanel"])
    report = validate_plan(kitchen_case.type_domain("switcher"), problem, [switch], robot="robot2",
                           skills={"goto"})
    assert report.reason == FailureReason.wrong_robot


def test_parse_literal_forms():
    assert str(parse_literal("(not (lit roomlight))")) == "(not (lit roomlight))"
    assert str(parse_literal("in tomato fridge")) == "(in tomato fridge)"


# ===============================
# Randomized properties
# ===============================

SAMPLES = 10_000
WALKS = 1_000


def _bundled_domains():
    return sorted(glob.glob(os.path.join(SUITE, "**", "*.pddl"), recursive=True))


@pytest.mark.parametrize("path", _bundled_domains(), ids=os.path.basename)
def test_every_bundled_domain_survives_serialization(path):
    with open(path, "r", encoding="utf-8") as f:
        domain = parse_domain(f.read())
    assert parse_domain(serialize_domain(domain)) == domain


def test_every_environment_problem_survives_serialization(suite_root):
    paths = sorted(glob.glob(os.path.join(suite_root, "envs", "*.yaml")))
    assert paths
    for path in paths:
        env = load_environment(path)
        problem = env.joint_problem()
        assert parse_problem(serialize_problem(problem), env.domain) == problem


def _universe(actions, init):
    atoms = set(init)
    for action in actions:
        atoms |= action.reads() | action.writes()
    return sorted(atoms)


def test_apply_agrees_with_set_algebra_on_random_states(kitchen_case):
    rng = random.Random(20240611)
    actions = kitchen_case.joint_actions()
    universe = _universe(actions, kitchen_case.init)
    applied = 0
    for _ in range(SAMPLES):
        action = rng.choice(actions)
        state = {atom for atom in universe if rng.random() < 0.3}
        if rng.random() < 0.5:
            state = (state | action.pre_pos) - action.pre_neg
        state = frozenset(state)

        expected = action.pre_pos <= state and state.isdisjoint(action.pre_neg)
        assert applicable(state, action) == expected
        if not expected:
            with pytest.raises(InapplicableActionError):
                apply(state, action)
            continue

        applied += 1
        after = apply(state, action)
        for atom in universe:
            if atom in action.delete:
                assert atom not in after
            elif atom in action.add:
                assert atom in after
            else:
                assert (atom in after) == (atom in state)
    assert applied > SAMPLES // 4


def test_random_walks_match_a_fold_of_set_operations(kitchen_case):
    rng = random.Random(11)
    actions = kitchen_case.joint_actions()
    problem = kitchen_case.joint_problem()
    for _ in range(WALKS):
        state, folded, walk = kitchen_case.init, set(kitchen_case.init), []
        for _ in range(rng.randint(1, 8)):
            options = [a for a in actions if applicable(state, a)]
            if not options:
                break
            action = rng.choice(options)
            walk.append(action)
            state = apply(state, action)
            folded = folded.union(action.add).difference(action.delete)
        assert state == frozenset(folded)

        reached = dataclasses.replace(problem, goal=tuple(Literal(atom) for atom in sorted(state)))
        assert validate_plan(kitchen_case.domain, reached, walk).valid
        assert validate_plan_naive(reached, walk)
