# app/pddl/semantics.py
from typing import Collection, Iterable, List, Optional, Sequence

from app.exceptions import InapplicableActionError, PDDLSemanticError
from app.pddl.grounding import bind
from app.pddl.schemas import (
    Domain,
    FailureReason,
    GroundAction,
    Literal,
    Problem,
    State,
    ValidationReport,
    state_digest,
    state_snapshot,
)


def first_violation(state: State, action: GroundAction) -> Optional[Literal]:
    for lit in action.pre:
        if not lit.holds(state):
            return lit
    return None


def applicable(state: State, action: GroundAction) -> bool:
    return first_violation(state, action) is None


def apply(state: State, action: GroundAction) -> State:
    """Successor state: (s | add) - delete. The input state is not modified."""
    violated = first_violation(state, action)
    if violated is not None:
        raise InapplicableActionError(str(action), str(violated))
    return frozenset((state | action.add) - action.delete)


def unsatisfied(goal: Iterable[Literal], state: State) -> List[str]:
    return [str(lit) for lit in goal if not lit.holds(state)]


def _failure(state: State, plan_length: int, **fields) -> ValidationReport:
    return ValidationReport(
        valid=False,
        plan_length=plan_length,
        state=state_snapshot(state),
        state_digest=state_digest(state),
        **fields,
    )


def validate_plan(
    domain: Domain,
    problem: Problem,
    plan: Sequence[GroundAction],
    robot: Optional[str] = None,
    skills: Optional[Collection[str]] = None,
) -> ValidationReport:
    """
    Replays a plan from the problem's initial state.

    Every step is re-grounded against `domain` by name and arguments, so the
    domain's own preconditions and effects are authoritative whatever domain
    the plan was found in. With `robot`/`skills` given, steps owned by another
    robot or using a schema outside `skills` are rejected.
    """
    state = problem.init
    for step, action in enumerate(plan):
        try:
            bound = bind(domain, problem, action.name, action.args)
        except PDDLSemanticError as e:
            reason = FailureReason.unknown_action if domain.action(action.name) is None else FailureReason.type_error
            return _failure(state, len(plan), step=step, action=str(action), reason=reason, violated=str(e))
        if skills is not None and bound.name not in skills:
            return _failure(state, len(plan), step=step, action=str(bound), robot=bound.robot,
                            reason=FailureReason.wrong_robot, violated=f"skill {bound.name} not available")
        if robot is not None and bound.robot != robot:
            return _failure(state, len(plan), step=step, action=str(bound), robot=bound.robot,
                            reason=FailureReason.wrong_robot, violated=f"action belongs to {bound.robot}, not {robot}")
        violated = first_violation(state, bound)
        if violated is not None:
            return _failure(state, len(plan), step=step, action=str(bound), robot=bound.robot,
                            reason=FailureReason.precondition, violated=str(violated))
        state = apply(state, bound)

    missing = unsatisfied(problem.goal, state)
    if missing:
        return _failure(state, len(plan), reason=FailureReason.goal, violated=missing[0], unsatisfied_goals=missing)
    return ValidationReport(
        valid=True,
        plan_length=len(plan),
        state=state_snapshot(state),
        state_digest=state_digest(state),
    )


def validate_plan_naive(problem: Problem, plan: Sequence[GroundAction]) -> bool:
    """Independent checker using each action's own ground pre/eff and plain set algebra."""
    state = set(problem.init)
    for action in plan:
        for lit in action.pre:
            if (lit.atom in state) != lit.positive:
                return False
        state = state.union(action.add).difference(action.delete)
    return all((lit.atom in state) == lit.positive for lit in problem.goal)


def bind_plan(domain: Domain, problem: Problem, plan: Sequence[GroundAction]) -> List[GroundAction]:
    """Re-grounds every step of a plan against `domain`."""
    return [bind(domain, problem, a.name, a.args) for a in plan]
