# app/planner/heuristics.py
import math
from abc import ABC, abstractmethod
from typing import Dict, FrozenSet

from app.planner.task import STRIPSTask


# ============================
# Strategy Interface
# ============================
class Heuristic(ABC):
    """
    Estimates the distance from a state to the goal of a compiled task.
    Implementations must be deterministic; math.inf marks a relaxed dead end.
    """

    @abstractmethod
    def evaluate(self, task: STRIPSTask, state: FrozenSet[int]) -> float:
        pass


# ============================
# Concrete Strategies
# ============================
class AdditiveHeuristic(Heuristic):
    """
    Delete-relaxation h_add: each atom costs the cheapest achiever's
    1 + sum of its positive precondition costs, computed to a fixpoint.
    Negative preconditions are ignored by the relaxation; each violated
    negative goal literal adds 1.
    """

    def evaluate(self, task: STRIPSTask, state: FrozenSet[int]) -> float:
        cost: Dict[int, float] = {atom: 0.0 for atom in state}
        changed = True
        while changed:
            changed = False
            for op in task.operators:
                total = 0.0
                for p in op.pre_pos:
                    c = cost.get(p)
                    if c is None:
                        total = math.inf
                        break
                    total += c
                if total == math.inf:
                    continue
                total += 1.0
                for q in op.add:
                    if total < cost.get(q, math.inf):
                        cost[q] = total
                        changed = True

        h = 0.0
        for g in task.goal_pos:
            c = cost.get(g)
            if c is None:
                return math.inf
            h += c
        h += len(task.goal_neg & state)
        return h


class BlindHeuristic(Heuristic):
    def evaluate(self, task: STRIPSTask, state: FrozenSet[int]) -> float:
        return 0.0 if task.goal_reached(state) else 1.0
