# app/pddl/schemas.py
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from pydantic import BaseModel

from app.exceptions import PDDLSemanticError

ROOT_TYPE = "object"


# ===============================
# Atoms and literals
# ===============================

@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: Tuple[str, ...] = ()

    def __str__(self) -> str:
        return "(" + " ".join((self.predicate,) + self.args) + ")"

    def substitute(self, binding: Dict[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


@dataclass(frozen=True, order=True)
class Literal:
    atom: Atom
    positive: bool = True

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"(not {self.atom})"

    def holds(self, state: FrozenSet[Atom]) -> bool:
        return (self.atom in state) == self.positive

    def substitute(self, binding: Dict[str, str]) -> "Literal":
        return Literal(self.atom.substitute(binding), self.positive)


State = FrozenSet[Atom]


@dataclass(frozen=True)
class TypedName:
    name: str
    type: str = ROOT_TYPE


@dataclass(frozen=True)
class Predicate:
    name: str
    params: Tuple[TypedName, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


# ===============================
# Action schemas and ground actions
# ===============================

@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: Tuple[TypedName, ...] = ()
    pre: Tuple[Literal, ...] = ()
    add: Tuple[Atom, ...] = ()
    delete: Tuple[Atom, ...] = ()

    def __post_init__(self):
        names = {p.name for p in self.params}
        if len(names) != len(self.params):
            raise PDDLSemanticError(f"action {self.name}: duplicate parameter name")
        atoms = [lit.atom for lit in self.pre] + list(self.add) + list(self.delete)
        for atom in atoms:
            for arg in atom.args:
                if arg.startswith("?") and arg not in names:
                    raise PDDLSemanticError(f"action {self.name}: parameter {arg} is not declared")
        both = set(self.add) & set(self.delete)
        if both:
            raise PDDLSemanticError(
                f"action {self.name}: {sorted(str(a) for a in both)[0]} is both added and deleted"
            )

    def ground(self, args: Tuple[str, ...], robot: Optional[str] = None) -> "GroundAction":
        if len(args) != len(self.params):
            raise PDDLSemanticError(f"action {self.name} expects {len(self.params)} arguments, got {len(args)}")
        binding = {p.name: a for p, a in zip(self.params, args)}
        return GroundAction(
            name=self.name,
            args=tuple(args),
            pre=tuple(lit.substitute(binding) for lit in self.pre),
            add=frozenset(a.substitute(binding) for a in self.add),
            delete=frozenset(a.substitute(binding) for a in self.delete),
            params=tuple(p.name for p in self.params),
            robot=robot,
        )


@dataclass(frozen=True)
class GroundAction:
    """
    A schema instance. Identity is the (name, args) pair; ground pre/eff are
    derived from the schema at construction time.
    """
    name: str
    args: Tuple[str, ...]
    pre: Tuple[Literal, ...] = field(default=(), compare=False)
    add: FrozenSet[Atom] = field(default=frozenset(), compare=False)
    delete: FrozenSet[Atom] = field(default=frozenset(), compare=False)
    params: Tuple[str, ...] = field(default=(), compare=False)
    robot: Optional[str] = field(default=None, compare=False)

    def __str__(self) -> str:
        return "(" + " ".join((self.name,) + self.args) + ")"

    @property
    def binding(self) -> Dict[str, str]:
        return dict(zip(self.params, self.args))

    @property
    def pre_pos(self) -> FrozenSet[Atom]:
        return frozenset(lit.atom for lit in self.pre if lit.positive)

    @property
    def pre_neg(self) -> FrozenSet[Atom]:
        return frozenset(lit.atom for lit in self.pre if not lit.positive)

    def reads(self) -> FrozenSet[Atom]:
        return frozenset(lit.atom for lit in self.pre)

    def writes(self) -> FrozenSet[Atom]:
        return self.add | self.delete


# ===============================
# Domain and problem
# ===============================

@dataclass(frozen=True)
class Domain:
    name: str
    requirements: Tuple[str, ...] = ()
    types: Tuple[Tuple[str, str], ...] = ()
    predicates: Tuple[Predicate, ...] = ()
    actions: Tuple[ActionSchema, ...] = ()

    def __post_init__(self):
        pred_names = [p.name for p in self.predicates]
        if len(set(pred_names)) != len(pred_names):
            raise PDDLSemanticError(f"domain {self.name}: duplicate predicate declaration")
        action_names = [a.name for a in self.actions]
        if len(set(action_names)) != len(action_names):
            raise PDDLSemanticError(f"domain {self.name}: duplicate action name")
        parents = self.type_parents
        for start in parents:
            seen = {start}
            current = parents.get(start)
            while current is not None and current != ROOT_TYPE:
                if current in seen:
                    raise PDDLSemanticError(f"domain {self.name}: type hierarchy is cyclic at {current}")
                seen.add(current)
                current = parents.get(current)

    @property
    def type_parents(self) -> Dict[str, str]:
        return dict(self.types)

    def type_names(self) -> List[str]:
        return [ROOT_TYPE] + [name for name, _ in self.types]

    def is_subtype(self, type_name: str, ancestor: str) -> bool:
        if ancestor == ROOT_TYPE or type_name == ancestor:
            return True
        parents = self.type_parents
        current = parents.get(type_name)
        while current is not None:
            if current == ancestor:
                return True
            if current == ROOT_TYPE:
                return False
            current = parents.get(current)
        return False

    def predicate(self, name: str) -> Optional[Predicate]:
        return next((p for p in self.predicates if p.name == name), None)

    def action(self, name: str) -> Optional[ActionSchema]:
        return next((a for a in self.actions if a.name == name), None)

    def restrict(self, skills: Iterable[str]) -> "Domain":
        """Copy of the domain keeping only the named action schemas."""
        keep = set(skills)
        return Domain(
            name=self.name,
            requirements=self.requirements,
            types=self.types,
            predicates=self.predicates,
            actions=tuple(a for a in self.actions if a.name in keep),
        )


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: Tuple[TypedName, ...] = ()
    init: State = frozenset()
    goal: Tuple[Literal, ...] = ()

    def object_types(self) -> Dict[str, str]:
        return {o.name: o.type for o in self.objects}

    def goal_satisfied(self, state: State) -> bool:
        return all(lit.holds(state) for lit in self.goal)


# ===============================
# Validation report (structured record)
# ===============================

class FailureReason(str, Enum):
    precondition = "precondition"
    goal = "goal"
    unknown_action = "unknown-action"
    wrong_robot = "wrong-robot"
    type_error = "type-error"


def state_snapshot(state: Iterable[Atom]) -> List[str]:
    return sorted(str(a) for a in state)


def state_digest(state: Iterable[Atom]) -> str:
    return hashlib.sha256("\n".join(state_snapshot(state)).encode("utf-8")).hexdigest()


class ValidationReport(BaseModel):
    valid: bool
    plan_length: int = 0
    step: Optional[int] = None
    action: Optional[str] = None
    robot: Optional[str] = None
    violated: Optional[str] = None
    reason: Optional[FailureReason] = None
    unsatisfied_goals: List[str] = []
    state: List[str] = []
    state_digest: str = ""
