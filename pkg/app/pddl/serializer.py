# app/pddl/serializer.py
from typing import Iterable, List, Union

from app.pddl.schemas import ROOT_TYPE, ActionSchema, Domain, Problem, TypedName


def _typed(names: Iterable[TypedName]) -> str:
    parts = []
    for n in names:
        parts.append(n.name if n.type == ROOT_TYPE else f"{n.name} - {n.type}")
    return " ".join(parts)


def _conjunction(literals: List[str]) -> str:
    if not literals:
        return "(and)"
    return "(and " + " ".join(literals) + ")"


def _action(action: ActionSchema) -> List[str]:
    effects = [str(a) for a in action.add] + [f"(not {a})" for a in action.delete]
    return [
        f"  (:action {action.name}",
        f"    :parameters ({_typed(action.params)})",
        f"    :precondition {_conjunction([str(lit) for lit in action.pre])}",
        f"    :effect {_conjunction(effects)})",
    ]


def serialize_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append("  (:types")
        lines.extend(f"    {name} - {parent}" for name, parent in domain.types)
        lines.append("  )")
    lines.append("  (:predicates")
    for pred in domain.predicates:
        args = _typed(pred.params)
        lines.append(f"    ({pred.name}{' ' + args if args else ''})")
    lines.append("  )")
    for action in domain.actions:
        lines.extend(_action(action))
    lines.append(")")
    return "\n".join(lines) + "\n"


def serialize_problem(problem: Problem) -> str:
    lines = [f"(define (problem {problem.name})"]
    if problem.domain_name:
        lines.append(f"  (:domain {problem.domain_name})")
    lines.append(f"  (:objects {_typed(problem.objects)})")
    lines.append("  (:init")
    lines.extend(f"    {atom}" for atom in sorted(problem.init))
    lines.append("  )")
    lines.append(f"  (:goal {_conjunction([str(lit) for lit in problem.goal])})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def serialize(item: Union[Domain, Problem]) -> str:
    if isinstance(item, Domain):
        return serialize_domain(item)
    if isinstance(item, Problem):
        return serialize_problem(item)
    raise TypeError(f"cannot serialize {type(item).__name__}")
