# app/evaluation/executor.py
import logging
from typing import Iterable, List, Optional, Tuple

from app.evaluation.schemas import NO_FAULTS, ExecutionTrace, FaultSpec
from app.multirobot.merge import PartialOrderPlan
from app.pddl.schemas import Atom, FailureReason, Literal, ValidationReport, state_digest, state_snapshot
from app.pddl.semantics import apply, first_violation, unsatisfied

logger = logging.getLogger(__name__)


def execute_symbolic(
    plan: PartialOrderPlan,
    init: Iterable[Atom],
    faults: Optional[FaultSpec] = None,
    goal: Tuple[Literal, ...] = (),
    iteration: Optional[int] = None,
) -> ExecutionTrace:
    """
    Runs the canonical linear extension from `init`. Faults delete atoms just
    before the step they target; any failure is reported in the trace.
    """
    faults = faults or NO_FAULTS
    rng = faults.rng(iteration)
    order = plan.canonical_linearization()
    state = frozenset(init)
    states: List[List[str]] = []
    injected: List[Tuple[int, str]] = []

    for index, step in enumerate(order):
        deleted = faults.deletions(index, step.action, state, iteration, rng)
        if deleted & state:
            injected.extend((index, str(a)) for a in sorted(deleted & state))
            logger.debug(f"fault before step {index}: deleted {', '.join(str(a) for a in sorted(deleted))}")
        state = state - deleted
        states.append(state_snapshot(state))
        violated = first_violation(state, step.action)
        if violated is not None:
            report = ValidationReport(
                valid=False,
                plan_length=len(order),
                step=index,
                action=str(step.action),
                robot=step.robot,
                violated=str(violated),
                reason=FailureReason.precondition,
                state=state_snapshot(state),
                state_digest=state_digest(state),
            )
            return ExecutionTrace(
                success=False,
                steps=[str(s.action) for s in order],
                sources=[s.source for s in order],
                states=states,
                injected=injected,
                report=report,
                failed_step=index,
                failed_source=step.source,
                failed_robot=step.robot,
                achieved=[str(lit) for lit in goal if lit.holds(state)],
            )
        state = apply(state, step.action)

    states.append(state_snapshot(state))
    missing = unsatisfied(goal, state)
    report = ValidationReport(
        valid=not missing,
        plan_length=len(order),
        violated=missing[0] if missing else None,
        reason=FailureReason.goal if missing else None,
        unsatisfied_goals=missing,
        state=state_snapshot(state),
        state_digest=state_digest(state),
    )
    return ExecutionTrace(
        success=not missing,
        steps=[str(s.action) for s in order],
        sources=[s.source for s in order],
        states=states,
        injected=injected,
        report=report,
        achieved=[str(lit) for lit in goal if lit.holds(state)],
    )
