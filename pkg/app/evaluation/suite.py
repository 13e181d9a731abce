# app/evaluation/suite.py
import glob
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import yaml

from app.config import settings
from app.evaluation.metrics import metrics
from app.evaluation.schemas import EpisodeResult, FaultSpec, MetricsReport, TaskCase, TaskCategory
from app.exceptions import ConfigurationError, NodeCapExceededError, PlanningError, SuiteLoadError
from app.hierarchy.orchestrator import Success, orchestrate
from app.hierarchy.schemas import HierarchyConfig
from app.llm.backend import LLMBackend
from app.llm.factory import create_backend
from app.multirobot.merge import deorder, makespan
from app.multirobot.models import MultiRobotProblem, load_environment, parse_goal
from app.planner.search import OptimalPlan, bfs_oracle
from app.planner.strategy import PlanningStrategy

logger = logging.getLogger(__name__)

SCRIPT_FILE = "script.yaml"


@dataclass(frozen=True)
class Suite:
    id: str
    root: str
    tasks: Tuple[TaskCase, ...]
    script: Optional[str] = None

    @property
    def truths(self) -> Dict[str, TaskCase]:
        return {t.id: t for t in self.tasks}

    def task(self, task_id: str) -> TaskCase:
        try:
            return self.truths[task_id]
        except KeyError:
            raise SuiteLoadError(self.root, f"unknown task {task_id}") from None


# ===============================
# Loading
# ===============================

def ground_truth(env: MultiRobotProblem, node_cap: Optional[int] = None) -> Tuple[int, int]:
    """Action count and makespan of a shortest joint plan, each robot limited to its capabilities."""
    result = bfs_oracle(env.domain, env.joint_problem(), node_cap=node_cap, actions=env.joint_actions())
    if not isinstance(result, OptimalPlan):
        raise PlanningError(f"no plan reaches the goal of {env.id}")
    return len(result), makespan(deorder(result.actions))


def load_environments(directory: str) -> Dict[str, MultiRobotProblem]:
    envs = {}
    for path in sorted(glob.glob(os.path.join(directory, "*.yaml"))):
        env = load_environment(path)
        if env.id in envs:
            raise SuiteLoadError(path, f"duplicate environment id {env.id}")
        envs[env.id] = env
    return envs


def load_task(path: str, envs: Dict[str, MultiRobotProblem], with_truth: bool = True) -> TaskCase:
    """
    Task file fields: id, category, instruction, environment, goal,
    optional faults [{atom, step | action, iterations}] and fault_rate.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise SuiteLoadError(path, f"invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise SuiteLoadError(path, "task file must contain a mapping")

    try:
        task_id = str(data.get("id") or os.path.splitext(os.path.basename(path))[0])
        category = TaskCategory(data["category"])
        env = envs[str(data["environment"])]
        goal = parse_goal(data.get("goal") or []) or env.goal
        if not goal:
            raise SuiteLoadError(path, "task has an empty goal")
        env = env.with_goal(goal)
        faults = FaultSpec(faults=data.get("faults") or [], fault_rate=data.get("fault_rate", 0.0))
        gt_actions, gt_makespan = ground_truth(env) if with_truth else (0, 0)
    except KeyError as e:
        raise SuiteLoadError(path, f"missing or unknown {e}") from e
    except ValueError as e:
        raise SuiteLoadError(path, str(e)) from e
    except NodeCapExceededError as e:
        raise SuiteLoadError(path, f"ground truth search gave up: {e}") from e
    except SuiteLoadError:
        raise
    except PlanningError as e:
        raise SuiteLoadError(path, str(e)) from e

    return TaskCase(
        id=task_id,
        category=category,
        instruction=str(data["instruction"]),
        env=env,
        faults=faults,
        gt_action_count=gt_actions,
        gt_makespan=gt_makespan,
        source=os.path.abspath(path),
    )


def load_suite(root: str, with_truth: bool = True) -> Suite:
    """Loads envs/*.yaml and tasks/*.yaml under `root`; script.yaml is picked up when present."""
    if not os.path.isdir(root):
        raise SuiteLoadError(root, "suite directory not found")
    envs = load_environments(os.path.join(root, "envs"))
    tasks = []
    for path in sorted(glob.glob(os.path.join(root, "tasks", "*.yaml"))):
        tasks.append(load_task(path, envs, with_truth))
        logger.debug(f"loaded task {tasks[-1].id}")
    if not tasks:
        raise SuiteLoadError(root, "suite has no tasks")
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise SuiteLoadError(root, "duplicate task ids")
    script = os.path.join(root, SCRIPT_FILE)
    return Suite(
        id=os.path.basename(os.path.normpath(root)),
        root=os.path.abspath(root),
        tasks=tuple(sorted(tasks, key=lambda t: t.id)),
        script=script if os.path.exists(script) else None,
    )


# ===============================
# Running
# ===============================

@dataclass(frozen=True)
class SuiteRunConfig:
    seeds: int = 5
    parallel: int = 1
    executor: str = "local"
    backend: str = "scripted"
    cassette: Optional[str] = None
    script: Optional[str] = None
    strict: bool = True
    hierarchy: HierarchyConfig = field(default_factory=HierarchyConfig)

    def backend_factory(self, suite: Suite) -> Callable[[], LLMBackend]:
        script = self.script or suite.script
        return lambda: create_backend(self.backend, cassette=self.cassette, script=script, strict=self.strict)

    def to_options(self) -> dict:
        options = asdict(self)
        options["hierarchy"] = asdict(self.hierarchy)
        return options

    @classmethod
    def from_options(cls, options: dict) -> "SuiteRunConfig":
        values = dict(options)
        values["hierarchy"] = HierarchyConfig(**values.get("hierarchy", {}))
        return cls(**values)


@dataclass(frozen=True)
class SuiteRun:
    results: Tuple[EpisodeResult, ...]
    report: MetricsReport


def run_episode(
    case: TaskCase,
    seed: int,
    backend: LLMBackend,
    config: Optional[HierarchyConfig] = None,
    planner: Optional[PlanningStrategy] = None,
) -> EpisodeResult:
    """One planning run; errors are recorded on the result, never raised."""
    start = time.perf_counter()

    def errored(message: str) -> EpisodeResult:
        return EpisodeResult(
            task_id=case.id,
            category=case.category,
            seed=seed,
            success=False,
            achieved=[str(lit) for lit in case.goal if lit.holds(case.env.init)],
            error=message,
            wall_time=time.perf_counter() - start if settings.RECORD_WALL_TIME else None,
        )

    try:
        outcome = orchestrate(case.instruction, case.env, backend, planner, None, config, case.faults.with_seed(seed))
    except PlanningError as e:
        logger.warning(f"episode {case.id}/{seed} errored: {e}")
        return errored(str(e))
    except Exception as e:
        logger.exception(f"episode {case.id}/{seed} crashed")
        return errored(f"{type(e).__name__}: {e}")

    if isinstance(outcome, Success):
        plan = outcome.plan
        result = EpisodeResult(
            task_id=case.id,
            category=case.category,
            seed=seed,
            success=True,
            achieved=sorted(outcome.achieved),
            action_count=len(plan),
            makespan=makespan(plan),
            iterations=outcome.iterations,
        )
    else:
        result = EpisodeResult(
            task_id=case.id,
            category=case.category,
            seed=seed,
            success=False,
            achieved=sorted(outcome.achieved),
            iterations=outcome.iterations,
        )
    if settings.RECORD_WALL_TIME:
        result.wall_time = time.perf_counter() - start
    logger.info(f"episode {case.id}/{seed}: {'success' if result.success else 'failure'} "
                f"after {result.iterations} iteration(s)")
    return result


def _run_local(
    suite: Suite,
    config: SuiteRunConfig,
    jobs: List[Tuple[TaskCase, int]],
    backend_factory: Optional[Callable[[], LLMBackend]] = None,
) -> List[EpisodeResult]:
    factory = backend_factory or config.backend_factory(suite)

    def job(item: Tuple[TaskCase, int]) -> EpisodeResult:
        case, seed = item
        try:
            backend = factory()
        except PlanningError as e:
            return EpisodeResult(task_id=case.id, category=case.category, seed=seed, success=False, error=str(e))
        return run_episode(case, seed, backend, config.hierarchy)

    if config.parallel <= 1:
        return [job(item) for item in jobs]
    with ThreadPoolExecutor(max_workers=config.parallel) as pool:
        return list(pool.map(job, jobs))


def _run_celery(
    suite: Suite,
    config: SuiteRunConfig,
    jobs: List[Tuple[TaskCase, int]],
    backend_factory: Optional[Callable[[], LLMBackend]] = None,
) -> List[EpisodeResult]:
    if backend_factory is not None:
        raise ConfigurationError("a shared backend needs the local executor; Celery workers build their own")
    from celery_worker import run_episode_task

    options = config.to_options()
    pending = [run_episode_task.delay(suite.root, case.id, seed, options) for case, seed in jobs]
    return [EpisodeResult.model_validate(p.get()) for p in pending]


EXECUTORS = {"local": _run_local, "celery": _run_celery}


def run_suite(
    suite: Suite,
    config: Optional[SuiteRunConfig] = None,
    backend_factory: Optional[Callable[[], LLMBackend]] = None,
) -> SuiteRun:
    """
    Runs every task for `config.seeds` seeds. Results are ordered by
    (task, seed) whatever the completion order.
    """
    config = config or SuiteRunConfig()
    if config.executor not in EXECUTORS:
        raise ConfigurationError(f"unknown executor {config.executor}, expected one of {', '.join(EXECUTORS)}")
    jobs = [(case, seed) for case in suite.tasks for seed in range(config.seeds)]
    logger.info(f"running {len(jobs)} episodes of suite {suite.id} with the {config.executor} executor")
    results = EXECUTORS[config.executor](suite, config, jobs, backend_factory)
    results = tuple(sorted(results, key=lambda r: (r.task_id, r.seed)))
    return SuiteRun(results=results, report=metrics(results, suite.truths))
