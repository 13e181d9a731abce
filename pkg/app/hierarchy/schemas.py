# app/hierarchy/schemas.py
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Set, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from app.config import settings
from app.optim.history import PromptHistory
from app.optim.schemas import PromptVersion, meta_owner
from app.pddl.schemas import Domain, Problem
from app.hierarchy.prompts import default_prompt, initial_meta, replanning_prompt

ROOT_ID = "E0.0"


# ===============================
# Structured agent output
# ===============================

class Subtask(BaseModel):
    id: str = Field(min_length=1)
    target: str = Field(min_length=1)
    description: str = Field(min_length=1)
    depends_on: List[str] = []


class DecompositionResponse(BaseModel):
    subtasks: List[Subtask] = Field(min_length=1)

    @model_validator(mode="after")
    def _sibling_dependencies(self) -> "DecompositionResponse":
        ids = [s.id for s in self.subtasks]
        if len(set(ids)) != len(ids):
            raise ValueError("subtask ids must be unique")
        for s in self.subtasks:
            for dep in s.depends_on:
                if dep == s.id or dep not in ids:
                    raise ValueError(f"subtask {s.id} depends on unknown sibling {dep}")
        return self


class DecisionToken(str, Enum):
    self_ = "self"
    parent = "parent"


class Decision(BaseModel):
    decision: str

    @field_validator("decision")
    @classmethod
    def _normalize(cls, value: str) -> str:
        return value.strip().lower()


class PDDLSpecResponse(BaseModel):
    domain: str = Field(min_length=1)
    problem: str = Field(min_length=1)


# ===============================
# Agents and run state
# ===============================

@dataclass(frozen=True)
class SubPlanSpec:
    source: str
    robot: str
    domain_text: str
    problem_text: str
    domain: Domain = field(compare=False, repr=False)
    problem: Problem = field(compare=False, repr=False)


@dataclass
class Agent:
    id: str
    layer: int
    index: int
    task: str
    prompt: PromptVersion
    replanning_prompt: str
    parent: Optional[str] = None
    target: Optional[str] = None  # robot type, or robot id at the leaf layer
    subtask_id: Optional[str] = None
    depends_on: Tuple[str, ...] = ()  # sibling agent ids
    children: List[str] = field(default_factory=list)
    cache_key: Optional[Tuple[Any, ...]] = None
    output: Any = None

    @property
    def sort_key(self) -> Tuple[int, int]:
        return (self.layer, self.index)


@dataclass(frozen=True)
class HierarchyConfig:
    layers: int = 3
    kmax: int = 5
    optimize_prompts: bool = True
    share_meta_prompts: bool = True
    parallel: int = 1

    def __post_init__(self):
        if self.layers < 2:
            raise ValueError(f"at least 2 layers are required, got {self.layers}")
        if self.kmax < 1:
            raise ValueError(f"kmax must be positive, got {self.kmax}")

    @classmethod
    def from_settings(cls, **overrides: Any) -> "HierarchyConfig":
        values = dict(layers=settings.LAYERS, kmax=settings.KMAX, parallel=settings.PARALLEL)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class HierarchyState:
    """
    Live agents by layer, the plan list (live agents in top-down order),
    per-layer meta-prompts, and the iteration counter. Agent ids are never
    reused within a run.
    """

    def __init__(self, instruction: str, config: HierarchyConfig, history: Optional[PromptHistory] = None):
        self.instruction = instruction
        self.config = config
        self.history = history if history is not None else PromptHistory()
        self.agents: Dict[str, Agent] = {}
        self.metas: Dict[int, PromptVersion] = {}
        self.scheduled: Set[str] = set()
        self.k = 0
        self._next_index: Dict[int, int] = {}
        for layer in range(config.layers):
            self.set_meta(layer, PromptVersion(owner=meta_owner(layer), text=initial_meta(layer, config.layers)))
        self.spawn(0, None, instruction)

    @property
    def layers(self) -> int:
        return self.config.layers

    @property
    def leaf_layer(self) -> int:
        return self.config.layers - 1

    @property
    def root(self) -> Agent:
        return self.agents[ROOT_ID]

    @property
    def plan_list(self) -> List[str]:
        return [a.id for a in sorted(self.agents.values(), key=lambda a: a.sort_key)]

    def is_leaf(self, agent: Agent) -> bool:
        return agent.layer == self.leaf_layer

    def layer_agents(self, layer: int) -> List[Agent]:
        return sorted((a for a in self.agents.values() if a.layer == layer), key=lambda a: a.index)

    def leaves(self) -> List[Agent]:
        return self.layer_agents(self.leaf_layer)

    def spawn(
        self,
        layer: int,
        parent: Optional[str],
        task: str,
        target: Optional[str] = None,
        subtask_id: Optional[str] = None,
    ) -> Agent:
        index = self._next_index.get(layer, 0)
        self._next_index[layer] = index + 1
        agent_id = f"E{layer}.{index}"
        prompt = PromptVersion(owner=agent_id, text=default_prompt(layer, self.layers), iteration=self.k)
        agent = Agent(
            id=agent_id,
            layer=layer,
            index=index,
            task=task,
            prompt=prompt,
            replanning_prompt=replanning_prompt(layer, self.layers),
            parent=parent,
            target=target,
            subtask_id=subtask_id,
        )
        self.agents[agent_id] = agent
        self.history.record(prompt)
        if parent is not None:
            self.agents[parent].children.append(agent_id)
        return agent

    def ancestors(self, agent_id: str) -> List[str]:
        """Parent chain from the agent's parent up to the root."""
        chain = []
        parent = self.agents[agent_id].parent
        while parent is not None:
            chain.append(parent)
            parent = self.agents[parent].parent
        return chain

    def descendants(self, agent_id: str) -> List[str]:
        found: List[str] = []
        stack = list(self.agents[agent_id].children)
        while stack:
            child = stack.pop()
            found.append(child)
            stack.extend(self.agents[child].children)
        return sorted(found, key=lambda a: self.agents[a].sort_key)

    def remove(self, agent_id: str) -> List[str]:
        """Drops an agent and its subtree; returns the removed ids."""
        removed = self.descendants(agent_id) + [agent_id]
        parent = self.agents[agent_id].parent
        if parent is not None and parent in self.agents:
            self.agents[parent].children.remove(agent_id)
        for gone in removed:
            self.agents.pop(gone, None)
            self.scheduled.discard(gone)
        return removed

    def prune(self, agent_id: str) -> List[str]:
        """Removes every descendant of a replanning agent and forces it to rerun."""
        removed = []
        for child in list(self.agents[agent_id].children):
            removed.extend(self.remove(child))
        agent = self.agents[agent_id]
        agent.cache_key = None
        agent.output = None
        self.scheduled.add(agent_id)
        return removed

    def set_prompt(self, agent_id: str, version: PromptVersion) -> None:
        self.history.record(version)
        self.agents[agent_id].prompt = version

    def set_meta(self, layer: int, version: PromptVersion) -> None:
        self.history.record(version)
        self.metas[layer] = version
