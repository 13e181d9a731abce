# app/planner/strategy.py
from abc import ABC, abstractmethod
from typing import Optional, Union

from app.pddl.schemas import Domain, Problem
from app.planner.external import ExternalSolverConfig, SolverFailure, external_solve
from app.planner.heuristics import Heuristic
from app.planner.search import BudgetExhausted, Plan, SearchBudget, Unsolvable, solve

PlannerOutcome = Union[Plan, Unsolvable, BudgetExhausted, SolverFailure]


# ============================
# Strategy Interface
# ============================
class PlanningStrategy(ABC):
    """Solves one generated sub-problem. The hierarchy only sees this interface."""

    @abstractmethod
    def plan(self, domain: Domain, problem: Problem) -> PlannerOutcome:
        pass


# ============================
# Concrete Strategies
# ============================
class InternalPlanner(PlanningStrategy):
    def __init__(self, budget: Optional[SearchBudget] = None, heuristic: Optional[Heuristic] = None):
        self.budget = budget or SearchBudget.from_settings()
        self.heuristic = heuristic

    def plan(self, domain: Domain, problem: Problem) -> PlannerOutcome:
        return solve(domain, problem, self.budget, self.heuristic)


class ExternalPlanner(PlanningStrategy):
    def __init__(self, cfg: ExternalSolverConfig):
        self.cfg = cfg

    def plan(self, domain: Domain, problem: Problem) -> PlannerOutcome:
        return external_solve(domain, problem, self.cfg)


def default_planner() -> PlanningStrategy:
    cfg = ExternalSolverConfig.from_settings()
    return ExternalPlanner(cfg) if cfg is not None else InternalPlanner()
