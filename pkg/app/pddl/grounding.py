# app/pddl/grounding.py
import itertools
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from app.config import settings
from app.exceptions import GroundingExplosionError, PDDLSemanticError
from app.pddl.schemas import ROOT_TYPE, ActionSchema, Domain, GroundAction, Problem

logger = logging.getLogger(__name__)

ROBOT_TYPE = "robot"


def objects_by_type(domain: Domain, problem: Problem) -> Dict[str, List[str]]:
    """Maps every domain type to the sorted objects that are instances of it."""
    result: Dict[str, List[str]] = {t: [] for t in domain.type_names()}
    for obj in problem.objects:
        for type_name in result:
            if domain.is_subtype(obj.type, type_name):
                result[type_name].append(obj.name)
    return {t: sorted(objs) for t, objs in result.items()}


def robot_parameter(domain: Domain, schema: ActionSchema) -> Optional[int]:
    """Index of the first parameter typed as (a subtype of) robot, if any."""
    if ROBOT_TYPE not in domain.type_parents:
        return None
    for i, param in enumerate(schema.params):
        if param.type != ROOT_TYPE and domain.is_subtype(param.type, ROBOT_TYPE):
            return i
    return None


def bind(domain: Domain, problem: Problem, name: str, args: Sequence[str]) -> GroundAction:
    """
    Grounds one named action against a domain/problem pair, checking that every
    argument is a declared object of the parameter's type.
    """
    schema = domain.action(name)
    if schema is None:
        raise PDDLSemanticError(f"unknown action {name}")
    if len(args) != len(schema.params):
        raise PDDLSemanticError(f"action {name} expects {len(schema.params)} arguments, got {len(args)}")
    types = problem.object_types()
    for arg, param in zip(args, schema.params):
        if arg not in types:
            raise PDDLSemanticError(f"({name} {' '.join(args)}): unknown object {arg}")
        if not domain.is_subtype(types[arg], param.type):
            raise PDDLSemanticError(f"({name} {' '.join(args)}): {arg} is not a {param.type}")
    idx = robot_parameter(domain, schema)
    return schema.ground(tuple(args), robot=args[idx] if idx is not None else None)


def grounding_size(domain: Domain, problem: Problem) -> int:
    by_type = objects_by_type(domain, problem)
    total = 0
    for schema in domain.actions:
        count = 1
        for param in schema.params:
            count *= len(by_type.get(param.type, []))
        total += count
    return total


def ground(domain: Domain, problem: Problem, cap: Optional[int] = None) -> Tuple[GroundAction, ...]:
    """
    Enumerates every type-consistent binding of every schema, in schema order
    then lexicographic argument order. The result's position is the ground
    action id used for search tie-breaking.
    """
    cap = settings.GROUNDING_CAP if cap is None else cap
    count = grounding_size(domain, problem)
    if count > cap:
        raise GroundingExplosionError(count, cap)

    by_type = objects_by_type(domain, problem)
    actions: List[GroundAction] = []
    for schema in domain.actions:
        idx = robot_parameter(domain, schema)
        pools = [by_type.get(p.type, []) for p in schema.params]
        for args in itertools.product(*pools):
            actions.append(schema.ground(tuple(args), robot=args[idx] if idx is not None else None))
    logger.debug(f"grounded {len(actions)} actions for {domain.name}/{problem.name}")
    return tuple(actions)
