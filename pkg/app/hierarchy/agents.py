# app/hierarchy/agents.py
import json
import logging
from typing import Collection, List, Optional

from pydantic import ValidationError

from app.exceptions import SchemaError
from app.hierarchy.schemas import (
    Agent,
    Decision,
    DecisionToken,
    DecompositionResponse,
    HierarchyState,
    PDDLSpecResponse,
    SubPlanSpec,
    Subtask,
)
from app.llm.backend import BackendRequest, LLMBackend, Role, strip_code_fence
from app.multirobot.models import MultiRobotProblem
from app.optim.schemas import PromptVersion
from app.pddl.parser import check_problem, parse_domain, parse_problem
from app.utils.records import RunTrace

logger = logging.getLogger(__name__)


def _json(content: str, schema_id: str) -> dict:
    try:
        data = json.loads(strip_code_fence(content))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{schema_id} response is not JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"{schema_id} response must be a JSON object")
    return data


def agent_task(agent: Agent, env: MultiRobotProblem, leaf: bool) -> str:
    """Task text sent with every request of an agent: its subtask, assignee and the environment."""
    parts = [agent.task]
    if agent.target is not None:
        parts.append(f"robot: {agent.target}" if leaf else f"robot type: {agent.target}")
    parts.append(env.describe())
    return "\n\n".join(parts)


def allowed_targets(agent: Agent, env: MultiRobotProblem, children_are_leaves: bool) -> List[str]:
    """Robot ids for the layer above the leaves, robot types elsewhere; narrowed by the agent's own type."""
    team = env.team
    if children_are_leaves:
        if agent.target in team.types:
            return team.robots_of(agent.target)
        return team.robots
    if agent.target in team.types:
        return [agent.target]
    return team.types


# ===============================
# Decomposition
# ===============================

def decompose_request(agent: Agent, meta: PromptVersion, env: MultiRobotProblem) -> BackendRequest:
    return BackendRequest(
        role=Role.decompose,
        prompt=agent.prompt.text,
        meta_prompt=meta.text,
        task=agent_task(agent, env, leaf=False),
        schema_id="decomposition.v1",
    )


def decompose(
    agent: Agent,
    meta: PromptVersion,
    backend: LLMBackend,
    env: MultiRobotProblem,
    targets: Collection[str],
) -> List[Subtask]:
    """Splits the agent's task into subtasks for its children; raises SchemaError on malformed output."""
    data = _json(backend.invoke(decompose_request(agent, meta, env)), "decomposition.v1")
    try:
        response = DecompositionResponse.model_validate(data)
    except ValidationError as e:
        raise SchemaError(f"decomposition.v1 response rejected: {e}") from e
    for subtask in response.subtasks:
        if subtask.target not in targets:
            raise SchemaError(
                f"subtask {subtask.id} targets '{subtask.target}', expected one of {', '.join(sorted(targets))}"
            )
    logger.debug(f"{agent.id} decomposed into {len(response.subtasks)} subtasks")
    return response.subtasks


# ===============================
# PDDL generation
# ===============================

def generate_pddl_request(agent: Agent, meta: PromptVersion, env: MultiRobotProblem) -> BackendRequest:
    return BackendRequest(
        role=Role.generate_pddl,
        prompt=agent.prompt.text,
        meta_prompt=meta.text,
        task=agent_task(agent, env, leaf=True),
        schema_id="pddl-spec.v1",
    )


def generate_pddl(agent: Agent, meta: PromptVersion, backend: LLMBackend, env: MultiRobotProblem) -> SubPlanSpec:
    """
    Asks the leaf for a domain/problem pair and parses it. PDDL errors
    propagate with their line and column.
    """
    data = _json(backend.invoke(generate_pddl_request(agent, meta, env)), "pddl-spec.v1")
    try:
        response = PDDLSpecResponse.model_validate(data)
    except ValidationError as e:
        raise SchemaError(f"pddl-spec.v1 response rejected: {e}") from e
    domain = parse_domain(response.domain)
    problem = parse_problem(response.problem, domain)
    check_problem(domain, problem)
    return SubPlanSpec(
        source=agent.id,
        robot=agent.target,
        domain_text=response.domain,
        problem_text=response.problem,
        domain=domain,
        problem=problem,
    )


# ===============================
# Escalation
# ===============================

def decision_request(agent: Agent, failure: str) -> BackendRequest:
    return BackendRequest(
        role=Role.decide,
        prompt=agent.replanning_prompt,
        task=f"Agent {agent.id}\nTask:\n{agent.task}\n\nFailure:\n{failure}",
        schema_id="decision.v1",
    )


def decide(agent: Agent, failure: str, backend: LLMBackend) -> str:
    """Returns "self" or "parent"; anything unrecognized climbs."""
    content = backend.invoke(decision_request(agent, failure))
    try:
        token = Decision.model_validate(_json(content, "decision.v1")).decision
    except (SchemaError, ValidationError):
        token = None
    if token not in {t.value for t in DecisionToken}:
        logger.warning(f"{agent.id} answered an unrecognized decision {content[:40]!r}, escalating to parent")
        return DecisionToken.parent.value
    return token


def escalate(
    state: HierarchyState,
    source: str,
    failure: str,
    backend: LLMBackend,
    trace: Optional[RunTrace] = None,
) -> Agent:
    """
    Climbs from the failing agent one layer at a time until an agent answers
    "self". The root is never asked and always accepts.
    """
    current = state.agents[source]
    while current.parent is not None:
        answer = decide(current, failure, backend)
        if trace is not None:
            trace.emit("decision", state.k, current.id, decision=answer)
        if answer == DecisionToken.self_.value:
            break
        current = state.agents[current.parent]
    logger.info(f"iteration {state.k}: failure at {source} replanned by {current.id}")
    return current
