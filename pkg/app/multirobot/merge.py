# app/multirobot/merge.py
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
from pydantic import BaseModel

from app.exceptions import CycleError
from app.pddl.schemas import GroundAction

logger = logging.getLogger(__name__)

UNOWNED = "_"


@dataclass(frozen=True, order=True)
class PlanStep:
    """One robot-tagged action; identity is (robot, per-robot index)."""
    robot: str
    index: int
    action: GroundAction = field(compare=False)
    source: str = field(default="", compare=False)

    @property
    def id(self) -> str:
        return f"{self.robot}#{self.index}"

    def __str__(self) -> str:
        return f"{self.id} {self.action}"


@dataclass(frozen=True)
class SubPlan:
    key: str
    robot: str
    actions: Tuple[GroundAction, ...]


class PlanStepRecord(BaseModel):
    id: str
    robot: str
    index: int
    action: str
    source: str = ""


class PartialOrderPlanRecord(BaseModel):
    actions: List[PlanStepRecord]
    edges: List[Tuple[str, str]]
    makespan: int
    cost: int


class PartialOrderPlan:
    """Robot-tagged steps under a strict partial order; immutable once built."""

    def __init__(self, steps: Iterable[PlanStep], edges: Iterable[Tuple[PlanStep, PlanStep]]):
        self.steps: Tuple[PlanStep, ...] = tuple(sorted(steps))
        self.edges: FrozenSet[Tuple[PlanStep, PlanStep]] = frozenset(edges)
        graph = nx.DiGraph()
        graph.add_nodes_from(self.steps)
        graph.add_edges_from(self.edges)
        if not nx.is_directed_acyclic_graph(graph):
            cycle = nx.find_cycle(graph)
            raise CycleError(str(u.id) for u, _ in cycle)
        self._graph = graph
        for robot in {s.robot for s in self.steps}:
            chain = [s for s in self.steps if s.robot == robot]
            for a, b in zip(chain, chain[1:]):
                if not nx.has_path(graph, a, b):
                    raise CycleError([a.id, b.id])

    @property
    def graph(self) -> nx.DiGraph:
        return self._graph.copy()

    def __len__(self) -> int:
        return len(self.steps)

    def precedes(self, a: PlanStep, b: PlanStep) -> bool:
        return a != b and nx.has_path(self._graph, a, b)

    def canonical_linearization(self) -> List[PlanStep]:
        """Topological order breaking ties by robot id, then per-robot index."""
        return list(nx.lexicographical_topological_sort(self._graph, key=lambda s: (s.robot, s.index)))

    def linear_extensions(self, limit: Optional[int] = None) -> Iterator[List[PlanStep]]:
        orders = nx.all_topological_sorts(self._graph)
        return itertools.islice(orders, limit) if limit is not None else orders

    def to_record(self) -> PartialOrderPlanRecord:
        return PartialOrderPlanRecord(
            actions=[PlanStepRecord(id=s.id, robot=s.robot, index=s.index, action=str(s.action), source=s.source)
                     for s in self.steps],
            edges=sorted((a.id, b.id) for a, b in self.edges),
            makespan=makespan(self),
            cost=len(self.steps),
        )


def conflicts(a: GroundAction, b: GroundAction) -> bool:
    """True when one action's effects touch an atom the other reads or writes."""
    return bool(a.writes() & (b.reads() | b.writes())) or bool(b.writes() & (a.reads() | a.writes()))


def _rank_keys(subplans: Sequence[SubPlan], dependencies: Iterable[Tuple[str, str]]) -> Dict[str, int]:
    robot_of = {sp.key: sp.robot for sp in subplans}
    graph = nx.DiGraph()
    graph.add_nodes_from(robot_of)
    for before, after in dependencies:
        if before in robot_of and after in robot_of:
            graph.add_edge(before, after)
    if not nx.is_directed_acyclic_graph(graph):
        raise CycleError(u for u, _ in nx.find_cycle(graph))
    order = nx.lexicographical_topological_sort(graph, key=lambda k: (robot_of[k], k))
    return {key: rank for rank, key in enumerate(order)}


def merge_subplans(
    subplans: Union[Mapping[str, Sequence[GroundAction]], Sequence[SubPlan]],
    dependencies: Iterable[Tuple[str, str]] = (),
) -> PartialOrderPlan:
    """
    Builds a partial-order plan from per-robot sequential plans.

    Sub-plan keys are ranked by a topological order of the declared
    dependencies (ties: robot id, then key). Each robot's actions form a chain
    in that rank order; every conflicting cross-robot pair is ordered from the
    lower-ranked sub-plan to the higher-ranked one.
    """
    if isinstance(subplans, Mapping):
        subplans = [SubPlan(robot, robot, tuple(plan)) for robot, plan in sorted(subplans.items())]
    dependencies = list(dependencies)
    declared = set(dependencies)
    rank = _rank_keys(subplans, dependencies)

    steps: List[PlanStep] = []
    position: Dict[PlanStep, Tuple[int, int]] = {}
    counters: Dict[str, int] = {}
    for sp in sorted(subplans, key=lambda s: rank[s.key]):
        for offset, action in enumerate(sp.actions):
            idx = counters.get(sp.robot, 0)
            counters[sp.robot] = idx + 1
            step = PlanStep(sp.robot, idx, action, sp.key)
            steps.append(step)
            position[step] = (rank[sp.key], offset)

    edges = set()
    by_robot: Dict[str, List[PlanStep]] = {}
    for step in steps:
        by_robot.setdefault(step.robot, []).append(step)
    for chain in by_robot.values():
        edges.update(zip(chain, chain[1:]))

    warned = set()
    for a, b in itertools.combinations(steps, 2):
        if a.robot == b.robot or not conflicts(a.action, b.action):
            continue
        first, second = (a, b) if position[a] < position[b] else (b, a)
        edges.add((first, second))
        pair = (first.source, second.source)
        if pair not in declared and pair not in warned:
            warned.add(pair)
            logger.warning(f"conflict between {first.source} and {second.source} ordered by rank, no declared dependency")

    return PartialOrderPlan(steps, edges)


def deorder(plan: Sequence[GroundAction]) -> PartialOrderPlan:
    """Partial order of a valid sequential plan: robot chains plus conflicting pairs in plan order."""
    steps: List[PlanStep] = []
    counters: Dict[str, int] = {}
    for action in plan:
        robot = action.robot or UNOWNED
        idx = counters.get(robot, 0)
        counters[robot] = idx + 1
        steps.append(PlanStep(robot, idx, action, robot))
    edges = set()
    for i, a in enumerate(steps):
        for b in steps[i + 1:]:
            if a.robot == b.robot:
                if b.index == a.index + 1:
                    edges.add((a, b))
            elif conflicts(a.action, b.action):
                edges.add((a, b))
    return PartialOrderPlan(steps, edges)


def makespan(plan: PartialOrderPlan) -> int:
    """Number of unit-duration parallel steps: nodes on the longest chain."""
    if not plan.steps:
        return 0
    return nx.dag_longest_path_length(plan._graph) + 1
