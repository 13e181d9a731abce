# app/evaluation/schemas.py
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Set, Tuple

from pydantic import BaseModel, Field, model_validator

from app.exceptions import PlanningError
from app.multirobot.models import MultiRobotProblem
from app.pddl.parser import parse_literal
from app.pddl.schemas import Atom, GroundAction, Literal, State, ValidationReport


class TaskCategory(str, Enum):
    compound = "compound"
    complex = "complex"
    vague = "vague"


# ===============================
# Fault injection
# ===============================

class Fault(BaseModel):
    """Deletes `atom` just before a step, picked by canonical index or by action."""
    atom: str
    step: Optional[int] = None
    action: Optional[str] = None
    iterations: Optional[List[int]] = None

    @model_validator(mode="after")
    def _has_trigger(self) -> "Fault":
        if (self.step is None) == (self.action is None):
            raise ValueError("a fault needs exactly one of step or action")
        try:
            lit = parse_literal(self.atom)
        except PlanningError as e:
            raise ValueError(f"fault atom {self.atom}: {e}") from e
        if not lit.positive:
            raise ValueError(f"fault atom {self.atom} must be positive")
        return self

    def triggers(self, index: int, action: GroundAction, iteration: Optional[int]) -> bool:
        if self.iterations is not None and iteration not in self.iterations:
            return False
        if self.step is not None:
            return self.step == index
        wanted = self.action.strip().lower()
        return wanted in (action.name, str(action))

    @property
    def deleted(self) -> Atom:
        return parse_literal(self.atom).atom


class FaultSpec(BaseModel):
    faults: List[Fault] = []
    fault_rate: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = 0

    def with_seed(self, seed: int) -> "FaultSpec":
        return self.model_copy(update={"seed": seed})

    def rng(self, iteration: Optional[int]) -> random.Random:
        return random.Random(f"{self.seed}:{iteration}")

    def deletions(
        self,
        index: int,
        action: GroundAction,
        state: State,
        iteration: Optional[int],
        rng: random.Random,
    ) -> Set[Atom]:
        deleted = {f.deleted for f in self.faults if f.triggers(index, action, iteration)}
        if self.fault_rate > 0 and rng.random() < self.fault_rate:
            candidates = sorted(a for a in action.pre_pos if a in state)
            if candidates:
                deleted.add(rng.choice(candidates))
        return deleted


NO_FAULTS = FaultSpec()


# ===============================
# Execution and episodes
# ===============================

class ExecutionTrace(BaseModel):
    success: bool
    steps: List[str] = []
    sources: List[str] = []
    states: List[List[str]] = []
    injected: List[Tuple[int, str]] = []
    report: ValidationReport
    failed_step: Optional[int] = None
    failed_source: Optional[str] = None
    failed_robot: Optional[str] = None
    achieved: List[str] = []


@dataclass(frozen=True)
class TaskCase:
    id: str
    category: TaskCategory
    instruction: str
    env: MultiRobotProblem
    faults: FaultSpec = field(default_factory=FaultSpec)
    gt_action_count: int = 0
    gt_makespan: int = 0
    source: Optional[str] = field(default=None, compare=False)

    @property
    def goal(self) -> Tuple[Literal, ...]:
        return self.env.goal

    @property
    def goal_atoms(self) -> List[str]:
        return [str(lit) for lit in self.env.goal]


class EpisodeResult(BaseModel):
    task_id: str
    category: TaskCategory
    seed: int
    success: bool
    achieved: List[str] = []
    action_count: int = 0
    makespan: int = 0
    iterations: int = 0
    error: Optional[str] = None
    wall_time: Optional[float] = None


class CategoryMetrics(BaseModel):
    episodes: int = 0
    successes: int = 0
    sr: float = 0.0
    gcr: float = 0.0
    ru: float = 0.0
    eff: float = 0.0


class MetricsReport(BaseModel):
    overall: CategoryMetrics
    categories: Dict[str, CategoryMetrics] = {}
