# app/planner/search.py
import heapq
import itertools
import logging
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Dict, FrozenSet, Optional, Sequence, Tuple, Union

from app.config import settings
from app.exceptions import NodeCapExceededError
from app.pddl.schemas import Domain, GroundAction, Problem
from app.planner.heuristics import AdditiveHeuristic, Heuristic
from app.planner.task import Operator, STRIPSTask, compile_task

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchBudget:
    max_expansions: int = 100_000
    max_seconds: float = 10.0

    @classmethod
    def from_settings(cls) -> "SearchBudget":
        return cls(settings.PLANNER_MAX_EXPANSIONS, settings.PLANNER_MAX_SECONDS)


@dataclass(frozen=True)
class Plan:
    actions: Tuple[GroundAction, ...]
    expanded: int = 0

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class OptimalPlan(Plan):
    pass


@dataclass(frozen=True)
class Unsolvable:
    expanded: int


@dataclass(frozen=True)
class BudgetExhausted:
    expanded: int
    elapsed: float


@dataclass(frozen=True)
class NoneWithinDepth:
    depth_cap: Optional[int]
    explored: int


SearchResult = Union[Plan, Unsolvable, BudgetExhausted]

Parents = Dict[FrozenSet[int], Tuple[Optional[FrozenSet[int]], Optional[Operator]]]


def _extract(parents: Parents, state: FrozenSet[int]) -> Tuple[GroundAction, ...]:
    steps = []
    while True:
        prev, op = parents[state]
        if op is None:
            break
        steps.append(op.action)
        state = prev
    return tuple(reversed(steps))


def greedy_best_first(task: STRIPSTask, budget: SearchBudget, heuristic: Heuristic) -> SearchResult:
    """
    Greedy best-first search. Open-list key is (h, generating operator id,
    insertion counter), so ties go to the lower ground-action id, then FIFO.
    The wall-clock budget only stops the search; it never reorders it.
    """
    start = time.monotonic()
    init = task.init
    if task.goal_reached(init):
        return Plan((), 0)

    counter = itertools.count()
    parents: Parents = {init: (None, None)}
    h0 = heuristic.evaluate(task, init)
    if h0 == math.inf:
        return Unsolvable(0)
    open_list = [(h0, -1, next(counter), init)]
    expanded = 0

    while open_list:
        _, _, _, state = heapq.heappop(open_list)
        expanded += 1
        if expanded > budget.max_expansions or time.monotonic() - start > budget.max_seconds:
            elapsed = time.monotonic() - start
            logger.debug(f"search budget exhausted after {expanded - 1} expansions, {elapsed:.2f}s")
            return BudgetExhausted(expanded - 1, elapsed)
        for op in task.operators:
            if not op.applicable(state):
                continue
            succ = op.successor(state)
            if succ in parents:
                continue
            parents[succ] = (state, op)
            if task.goal_reached(succ):
                return Plan(_extract(parents, succ), expanded)
            h = heuristic.evaluate(task, succ)
            if h == math.inf:
                continue
            heapq.heappush(open_list, (h, op.index, next(counter), succ))

    return Unsolvable(expanded)


def solve(
    domain: Domain,
    problem: Problem,
    budget: Optional[SearchBudget] = None,
    heuristic: Optional[Heuristic] = None,
    actions: Optional[Sequence[GroundAction]] = None,
) -> SearchResult:
    budget = budget or SearchBudget.from_settings()
    task = compile_task(domain, problem, actions=actions)
    result = greedy_best_first(task, budget, heuristic or AdditiveHeuristic())
    logger.debug(f"solve {problem.name}: {type(result).__name__} after {result.expanded} expansions")
    return result


def bfs_oracle(
    domain: Domain,
    problem: Problem,
    depth_cap: Optional[int] = None,
    node_cap: Optional[int] = None,
    actions: Optional[Sequence[GroundAction]] = None,
) -> Union[OptimalPlan, NoneWithinDepth]:
    """
    Breadth-first search over the reachable state space; the first plan found
    is shortest under unit action cost.
    """
    node_cap = settings.ORACLE_NODE_CAP if node_cap is None else node_cap
    task = compile_task(domain, problem, actions=actions)
    init = task.init
    if task.goal_reached(init):
        return OptimalPlan((), 0)

    parents: Parents = {init: (None, None)}
    frontier = deque([(init, 0)])
    expanded = 0
    while frontier:
        state, depth = frontier.popleft()
        if depth_cap is not None and depth >= depth_cap:
            continue
        expanded += 1
        for op in task.operators:
            if not op.applicable(state):
                continue
            succ = op.successor(state)
            if succ in parents:
                continue
            parents[succ] = (state, op)
            if len(parents) > node_cap:
                raise NodeCapExceededError(node_cap)
            if task.goal_reached(succ):
                return OptimalPlan(_extract(parents, succ), expanded)
            frontier.append((succ, depth + 1))
    return NoneWithinDepth(depth_cap, len(parents))
