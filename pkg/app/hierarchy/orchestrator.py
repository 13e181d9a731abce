# app/hierarchy/orchestrator.py
import hashlib
import itertools
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx

from app.evaluation.executor import execute_symbolic
from app.evaluation.schemas import ExecutionTrace, FaultSpec
from app.exceptions import (
    BackendError,
    CycleError,
    PDDLSyntaxError,
    PlanningError,
    SchemaError,
)
from app.hierarchy.agents import allowed_targets, decompose, escalate, generate_pddl
from app.hierarchy.schemas import Agent, HierarchyConfig, HierarchyState, SubPlanSpec, Subtask
from app.llm.backend import BackendRequest, LLMBackend
from app.multirobot.merge import PartialOrderPlan, SubPlan, merge_subplans
from app.multirobot.models import MultiRobotProblem
from app.optim.loss import loss_fn
from app.optim.optimizer import OptimizerConfig, PromptOptimizer
from app.optim.schemas import Diagnostic, FailureClass, Feedback
from app.pddl.schemas import FailureReason, GroundAction, Problem
from app.pddl.semantics import bind_plan, validate_plan
from app.planner.external import SolverFailure
from app.planner.search import BudgetExhausted, Plan, Unsolvable
from app.planner.strategy import PlanningStrategy, default_planner
from app.utils.records import RunTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Success:
    iterations: int
    specs: Tuple[SubPlanSpec, ...]
    plan: PartialOrderPlan
    execution: Optional[ExecutionTrace] = None

    @property
    def achieved(self) -> List[str]:
        return self.execution.achieved if self.execution is not None else []


@dataclass(frozen=True)
class Failure:
    iterations: int
    feedback: Optional[Feedback] = None
    execution: Optional[ExecutionTrace] = None
    achieved: Tuple[str, ...] = ()


Outcome = Union[Success, Failure]


class _TracedBackend(LLMBackend):
    """Forwards calls and buffers (role, request digest, response digest) for the run trace."""

    def __init__(self, inner: LLMBackend):
        super().__init__()
        self.inner = inner
        self._buffer: List[Tuple[str, str, str]] = []
        self._buffer_lock = threading.Lock()

    def _invoke(self, request: BackendRequest) -> str:
        response = self.inner.invoke(request)
        digest = hashlib.sha256(response.encode("utf-8")).hexdigest()
        with self._buffer_lock:
            self._buffer.append((request.role.value, request.digest(), digest))
        logger.debug(f"{request.role.value} request {request.digest()[:12]}")
        return response

    def flush(self, trace: RunTrace, iteration: int, ordered: bool = False) -> None:
        with self._buffer_lock:
            calls, self._buffer = self._buffer, []
        for role, request, response in sorted(calls) if ordered else calls:
            trace.emit("backend-call", iteration, None, role=role, request=request, response=response)


def _feedback_for_error(agent: Agent, error: PlanningError, leaf: bool) -> Feedback:
    robot = agent.target if leaf else None
    if isinstance(error, PDDLSyntaxError):
        diagnostic = Diagnostic(message=error.message, line=error.line, column=error.column)
        failure_class = FailureClass.parse
    elif isinstance(error, (SchemaError, BackendError)):
        diagnostic = Diagnostic(message=str(error))
        failure_class = FailureClass.malformed_response
    else:
        diagnostic = Diagnostic(message=str(error))
        failure_class = FailureClass.parse
    return Feedback(
        agent=agent.id,
        origin=agent.id,
        robot=robot,
        failure_class=failure_class,
        diagnostic=diagnostic,
    )


class Orchestrator:
    """
    The outer planning loop: top-down pass, sub-plan validation, merge and
    joint check, then escalation and prompt update on failure, bounded by
    kmax iterations.
    """

    def __init__(
        self,
        env: MultiRobotProblem,
        backend: LLMBackend,
        planner: Optional[PlanningStrategy] = None,
        optimizer: Optional[PromptOptimizer] = None,
        config: Optional[HierarchyConfig] = None,
        faults: Optional[FaultSpec] = None,
        trace: Optional[RunTrace] = None,
    ):
        self.env = env
        self.config = config or HierarchyConfig.from_settings()
        self.backend = _TracedBackend(backend)
        self.planner = planner or default_planner()
        self.optimizer = optimizer or PromptOptimizer(
            self.backend, OptimizerConfig.from_settings(self.config.share_meta_prompts)
        )
        if self.optimizer.backend is backend:
            self.optimizer.backend = self.backend
        self.faults = faults
        self.trace = trace if trace is not None else RunTrace()

    # ===============================
    # Top-down pass
    # ===============================

    def _cache_key(self, state: HierarchyState, agent: Agent) -> Tuple[Any, ...]:
        return (agent.prompt.version, state.metas[agent.layer].version, agent.task, agent.target)

    def _run_agent(self, state: HierarchyState, agent: Agent) -> Union[List[Subtask], SubPlanSpec, PlanningError]:
        meta = state.metas[agent.layer]
        try:
            if state.is_leaf(agent):
                return generate_pddl(agent, meta, self.backend, self.env)
            targets = allowed_targets(agent, self.env, agent.layer + 1 == state.leaf_layer)
            return decompose(agent, meta, self.backend, self.env, targets)
        except PlanningError as e:
            return e

    def _reconcile(self, state: HierarchyState, agent: Agent, subtasks: Sequence[Subtask]) -> None:
        """Reuses children whose (target, description) still appear; drops the rest."""
        available = {}
        for child_id in agent.children:
            child = state.agents[child_id]
            available.setdefault((child.target, child.task), child_id)

        by_subtask: Dict[str, str] = {}
        kept: List[str] = []
        for subtask in subtasks:
            reused = available.pop((subtask.target, subtask.description), None)
            if reused is None:
                child = state.spawn(agent.layer + 1, agent.id, subtask.description, subtask.target, subtask.id)
                self.trace.emit("spawn", state.k, child.id, parent=agent.id, target=subtask.target,
                                task=subtask.description)
                self.trace.emit("prompt-version", state.k, child.id, prompt=child.prompt)
            else:
                child = state.agents[reused]
                child.subtask_id = subtask.id
            by_subtask[subtask.id] = child.id
            kept.append(child.id)

        for child_id in available.values():
            for removed in state.remove(child_id):
                self.trace.emit("drop", state.k, removed)
        for subtask in subtasks:
            child = state.agents[by_subtask[subtask.id]]
            child.depends_on = tuple(by_subtask[d] for d in subtask.depends_on)
        agent.children = kept

    def top_down(self, state: HierarchyState) -> Optional[Feedback]:
        """
        Runs every agent whose prompt, meta-prompt or task changed since its
        last answer, layer by layer. Agents of one layer may run concurrently;
        results are applied in agent id order.
        """
        for layer in range(state.layers):
            agents = state.layer_agents(layer)
            dirty = [a for a in agents if a.id in state.scheduled or a.cache_key != self._cache_key(state, a)]
            if len(dirty) > 1 and self.config.parallel > 1:
                with ThreadPoolExecutor(max_workers=min(self.config.parallel, len(dirty))) as pool:
                    results = list(pool.map(lambda a: self._run_agent(state, a), dirty))
                self.backend.flush(self.trace, state.k, ordered=True)
            else:
                results = [self._run_agent(state, a) for a in dirty]
                self.backend.flush(self.trace, state.k)

            failure: Optional[Feedback] = None
            for agent, result in zip(dirty, results):
                leaf = state.is_leaf(agent)
                if isinstance(result, PlanningError):
                    agent.cache_key = None
                    agent.output = None
                    fb = _feedback_for_error(agent, result, leaf)
                    self.trace.emit("agent-error", state.k, agent.id, failure_class=fb.failure_class.value,
                                    message=str(result))
                    logger.info(f"iteration {state.k}: {agent.id} failed: {result}")
                    failure = failure or fb
                    continue
                agent.cache_key = self._cache_key(state, agent)
                agent.output = result
                state.scheduled.discard(agent.id)
                if leaf:
                    self.trace.emit("pddl-spec", state.k, agent.id, robot=result.robot,
                                    domain=result.domain_text, problem=result.problem_text)
                else:
                    self.trace.emit("decomposition", state.k, agent.id, subtasks=list(result))
                    self._reconcile(state, agent, result)
            if failure is not None:
                return failure
        return None

    # ===============================
    # Validation and joint check
    # ===============================

    def _world_problem(self, spec: SubPlanSpec) -> Problem:
        return Problem(
            name=spec.problem.name,
            domain_name=self.env.domain.name,
            objects=self.env.objects,
            init=spec.problem.init,
            goal=spec.problem.goal,
        )

    def validate_specs(self, state: HierarchyState) -> Tuple[Optional[Feedback], Dict[str, Tuple[GroundAction, ...]]]:
        """Solves every leaf spec in id order; the first failure stops the round."""
        plans: Dict[str, Tuple[GroundAction, ...]] = {}
        for leaf in state.leaves():
            spec: SubPlanSpec = leaf.output
            outcome = self.planner.plan(spec.domain, spec.problem)

            def diag(failure_class: FailureClass, message: str) -> Feedback:
                return Feedback(agent=leaf.id, origin=leaf.id, robot=spec.robot, failure_class=failure_class,
                                diagnostic=Diagnostic(message=message))

            if isinstance(outcome, Unsolvable):
                fb = diag(FailureClass.unsolvable, f"no plan reaches the goal of {spec.problem.name} "
                                                   f"({outcome.expanded} states expanded)")
            elif isinstance(outcome, BudgetExhausted):
                fb = diag(FailureClass.budget, f"search stopped after {outcome.expanded} expansions "
                                               f"and {outcome.elapsed:.1f}s")
            elif isinstance(outcome, SolverFailure):
                fb = diag(FailureClass.unsolvable, f"external planner {outcome.kind}: {outcome.message}")
            else:
                fb = self._check_plan(leaf, spec, outcome)
                if fb is None:
                    plans[leaf.id] = tuple(bind_plan(self.env.domain, self.env.joint_problem(), outcome.actions))
                    self.trace.emit("sub-plan", state.k, leaf.id, robot=spec.robot,
                                    actions=[str(a) for a in outcome.actions])
                    continue
            self.trace.emit("validation-failure", state.k, leaf.id, failure_class=fb.failure_class.value,
                            report=fb.report, diagnostic=fb.diagnostic)
            return fb, plans
        return None, plans

    def _check_plan(self, leaf: Agent, spec: SubPlanSpec, plan: Plan) -> Optional[Feedback]:
        robot = spec.robot
        world = self.env.type_domain(self.env.team.type_of(robot))
        report = validate_plan(world, self._world_problem(spec), plan.actions, robot=robot,
                               skills=self.env.robot_skills(robot))
        if report.valid:
            return None
        failure_class = (FailureClass.precondition if report.reason == FailureReason.precondition
                         else FailureClass.validation)
        return Feedback(agent=leaf.id, origin=leaf.id, robot=robot, failure_class=failure_class, report=report)

    def leaf_dependencies(self, state: HierarchyState) -> List[Tuple[str, str]]:
        """
        Leaf A precedes leaf B when the ancestors of A and B that are siblings
        are connected by declared dependencies.
        """
        graph = nx.DiGraph()
        graph.add_nodes_from(state.agents)
        for agent in state.agents.values():
            graph.add_edges_from((dep, agent.id) for dep in agent.depends_on)
        lineage = {leaf.id: [leaf.id] + state.ancestors(leaf.id) for leaf in state.leaves()}
        edges = []
        for a, b in itertools.permutations(sorted(lineage, key=lambda x: state.agents[x].sort_key), 2):
            for x in lineage[a]:
                sibling = next((y for y in lineage[b] if y != x and state.agents[y].parent == state.agents[x].parent),
                               None)
                if sibling is not None:
                    if nx.has_path(graph, x, sibling):
                        edges.append((a, b))
                    break
        return edges

    def joint_check(
        self,
        state: HierarchyState,
        plans: Dict[str, Tuple[GroundAction, ...]],
    ) -> Tuple[Optional[Feedback], Optional[PartialOrderPlan], Optional[ExecutionTrace]]:
        root = state.root.id
        leaves = state.leaves()
        subplans = [SubPlan(leaf.id, leaf.target, plans[leaf.id]) for leaf in leaves]
        try:
            merged = merge_subplans(subplans, self.leaf_dependencies(state))
        except CycleError as e:
            fb = Feedback(agent=root, origin=root, failure_class=FailureClass.malformed_response,
                          diagnostic=Diagnostic(message=str(e)))
            return fb, None, None

        execution = execute_symbolic(merged, self.env.init, self.faults, self.env.goal, iteration=state.k)
        self.trace.emit("execution", state.k, None, success=execution.success, steps=execution.steps,
                        report=execution.report, injected=execution.injected)
        if execution.success:
            return None, merged, execution
        if execution.failed_source is not None:
            fb = Feedback(agent=execution.failed_source, origin=execution.failed_source,
                          robot=execution.failed_robot, failure_class=FailureClass.precondition,
                          report=execution.report)
        else:
            fb = Feedback(agent=root, origin=root, failure_class=FailureClass.validation, report=execution.report)
        return fb, merged, execution

    # ===============================
    # Replanning
    # ===============================

    def replan(self, state: HierarchyState, feedback: Feedback) -> None:
        source = state.agents[feedback.agent]
        failure = loss_fn(source.prompt, feedback).prose
        try:
            target = escalate(state, source.id, failure, self.backend, self.trace)
        except PlanningError as e:
            logger.warning(f"escalation from {source.id} failed ({e}), replanning at the source")
            target = source
        self.backend.flush(self.trace, state.k)
        self.trace.emit("escalation", state.k, target.id, origin=source.id)

        retargeted = feedback.retarget(target.id)
        if not self.config.optimize_prompts:
            for removed in state.prune(target.id):
                self.trace.emit("prune", state.k, removed)
            return
        try:
            self.optimizer.prompt_update(state, [retargeted], self.trace)
        except PlanningError as e:
            logger.warning(f"prompt update aborted at iteration {state.k}: {e}")
            self.trace.emit("update-aborted", state.k, target.id, message=str(e))
        self.backend.flush(self.trace, state.k)

    # ===============================
    # Outer loop
    # ===============================

    def run(self, instruction: str, state: Optional[HierarchyState] = None) -> Outcome:
        state = state if state is not None else HierarchyState(instruction, self.config)
        env = self.env
        self.trace.emit("start", 0, state.root.id, instruction=instruction, environment=env.id,
                        goal=[str(g) for g in env.goal])
        for layer in sorted(state.metas):
            self.trace.emit("prompt-version", state.k, state.metas[layer].owner, prompt=state.metas[layer])
        for agent_id in state.plan_list:
            self.trace.emit("prompt-version", state.k, agent_id, prompt=state.agents[agent_id].prompt)

        if env.goal_satisfied(env.init):
            logger.info("goal already holds in the initial state")
            empty = merge_subplans([])
            execution = execute_symbolic(empty, env.init, None, env.goal)
            self.trace.emit("success", 0, None, iterations=0)
            return Success(iterations=0, specs=(), plan=empty, execution=execution)

        last: Optional[Feedback] = None
        last_execution: Optional[ExecutionTrace] = None
        while state.k < self.config.kmax:
            k = state.k
            logger.info(f"iteration {k} of {self.config.kmax}")
            self.trace.emit("iteration", k, None)
            feedback = self.top_down(state)
            if feedback is None:
                feedback, plans = self.validate_specs(state)
                if feedback is None:
                    feedback, merged, execution = self.joint_check(state, plans)
                    last_execution = execution or last_execution
                    if feedback is None:
                        specs = tuple(leaf.output for leaf in state.leaves())
                        self.trace.emit("success", k, None, iterations=k + 1, plan=merged.to_record())
                        logger.info(f"plan found after {k + 1} iteration(s)")
                        return Success(iterations=k + 1, specs=specs, plan=merged, execution=execution)
            last = feedback
            self.replan(state, feedback)
            state.k += 1

        achieved = tuple(last_execution.achieved) if last_execution is not None else tuple(
            str(g) for g in env.goal if g.holds(env.init)
        )
        self.trace.emit("failure", state.k, None, iterations=state.k, achieved=list(achieved))
        logger.info(f"no valid plan within {self.config.kmax} iterations")
        return Failure(iterations=state.k, feedback=last, execution=last_execution, achieved=achieved)


def orchestrate(
    instruction: str,
    env: MultiRobotProblem,
    backend: LLMBackend,
    planner: Optional[PlanningStrategy] = None,
    optimizer: Optional[PromptOptimizer] = None,
    config: Optional[HierarchyConfig] = None,
    faults: Optional[FaultSpec] = None,
    trace: Optional[RunTrace] = None,
    state: Optional[HierarchyState] = None,
) -> Outcome:
    return Orchestrator(env, backend, planner, optimizer, config, faults, trace).run(instruction, state)
