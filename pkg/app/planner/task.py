# app/planner/task.py
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from app.pddl.grounding import ground
from app.pddl.schemas import Atom, Domain, GroundAction, Problem, State


class AtomTable:
    """Interns ground atoms to dense integer ids."""

    def __init__(self):
        self._ids: Dict[Atom, int] = {}
        self._atoms: List[Atom] = []

    def intern(self, atom: Atom) -> int:
        idx = self._ids.get(atom)
        if idx is None:
            idx = len(self._atoms)
            self._ids[atom] = idx
            self._atoms.append(atom)
        return idx

    def ids(self, atoms) -> FrozenSet[int]:
        return frozenset(self.intern(a) for a in atoms)

    def atom(self, idx: int) -> Atom:
        return self._atoms[idx]

    def atoms(self, ids) -> State:
        return frozenset(self._atoms[i] for i in ids)

    def __len__(self) -> int:
        return len(self._atoms)


@dataclass(frozen=True)
class Operator:
    index: int
    action: GroundAction
    pre_pos: FrozenSet[int]
    pre_neg: FrozenSet[int]
    add: FrozenSet[int]
    delete: FrozenSet[int]

    def applicable(self, state: FrozenSet[int]) -> bool:
        return self.pre_pos <= state and not (self.pre_neg & state)

    def successor(self, state: FrozenSet[int]) -> FrozenSet[int]:
        return (state | self.add) - self.delete


@dataclass(frozen=True)
class STRIPSTask:
    table: AtomTable
    operators: Tuple[Operator, ...]
    init: FrozenSet[int]
    goal_pos: FrozenSet[int]
    goal_neg: FrozenSet[int]

    def goal_reached(self, state: FrozenSet[int]) -> bool:
        return self.goal_pos <= state and not (self.goal_neg & state)


def compile_task(
    domain: Domain,
    problem: Problem,
    cap: Optional[int] = None,
    actions: Optional[Sequence[GroundAction]] = None,
) -> STRIPSTask:
    """Interns atoms and operators; `actions` replaces full grounding when given."""
    table = AtomTable()
    init = table.ids(sorted(problem.init))
    goal_pos = table.ids(lit.atom for lit in problem.goal if lit.positive)
    goal_neg = table.ids(lit.atom for lit in problem.goal if not lit.positive)
    operators = []
    if actions is None:
        actions = ground(domain, problem, cap=cap)
    for i, action in enumerate(actions):
        operators.append(Operator(
            index=i,
            action=action,
            pre_pos=table.ids(action.pre_pos),
            pre_neg=table.ids(action.pre_neg),
            add=table.ids(sorted(action.add)),
            delete=table.ids(sorted(action.delete)),
        ))
    return STRIPSTask(table, tuple(operators), init, goal_pos, goal_neg)
