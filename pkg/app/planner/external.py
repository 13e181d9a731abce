# app/planner/external.py
import logging
import os
import subprocess
import tempfile
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

from app.config import settings
from app.exceptions import PDDLSemanticError, PDDLSyntaxError
from app.pddl.grounding import bind
from app.pddl.parser import read_sexpr
from app.pddl.schemas import Domain, GroundAction, Problem, ValidationReport
from app.pddl.semantics import validate_plan
from app.pddl.serializer import serialize_domain, serialize_problem
from app.planner.search import Plan

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExternalSolverConfig:
    """
    Command line of an external classical planner. `{domain}`, `{problem}` and
    `{plan}` in `args` are replaced by the temp file paths. Exit code 0 means a
    plan was written to `{plan}`; anything else is a failure.
    """
    executable: str
    args: Tuple[str, ...] = ("{domain}", "{problem}", "{plan}")
    timeout: float = 60.0

    @classmethod
    def from_settings(cls) -> Optional["ExternalSolverConfig"]:
        if not settings.EXTERNAL_PLANNER:
            return None
        return cls(executable=settings.EXTERNAL_PLANNER, timeout=settings.PLANNER_MAX_SECONDS)


@dataclass(frozen=True)
class SolverFailure:
    kind: str  # launch | nonzero-exit | timeout | unparseable | validation
    message: str
    report: Optional[ValidationReport] = None


def parse_plan_text(text: str, domain: Domain, problem: Problem) -> Tuple[GroundAction, ...]:
    """Parses one parenthesized ground action per line; ';' comments are ignored."""
    actions: List[GroundAction] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        node = read_sexpr(line)
        if not node or any(isinstance(n, list) for n in node):
            raise PDDLSyntaxError("expected (action arg ...)", lineno, 1)
        name, *args = [n.text for n in node]
        actions.append(bind(domain, problem, name, args))
    return tuple(actions)


def external_solve(domain: Domain, problem: Problem, cfg: ExternalSolverConfig) -> Union[Plan, SolverFailure]:
    with tempfile.TemporaryDirectory(prefix="planner-") as tmp:
        paths = {
            "domain": os.path.join(tmp, "domain.pddl"),
            "problem": os.path.join(tmp, "problem.pddl"),
            "plan": os.path.join(tmp, "plan.txt"),
        }
        with open(paths["domain"], "w", encoding="utf-8") as f:
            f.write(serialize_domain(domain))
        with open(paths["problem"], "w", encoding="utf-8") as f:
            f.write(serialize_problem(problem))

        command = [cfg.executable] + [arg.format(**paths) for arg in cfg.args]
        try:
            completed = subprocess.run(command, capture_output=True, text=True, errors="replace", timeout=cfg.timeout)
        except FileNotFoundError as e:
            return SolverFailure("launch", f"cannot launch {cfg.executable}: {e}")
        except subprocess.TimeoutExpired:
            return SolverFailure("timeout", f"{cfg.executable} exceeded {cfg.timeout}s")
        except OSError as e:
            return SolverFailure("launch", f"cannot launch {cfg.executable}: {e}")

        if completed.returncode != 0:
            logger.warning(f"external planner exited with {completed.returncode}: {completed.stderr.strip()[:200]}")
            return SolverFailure("nonzero-exit", f"exit code {completed.returncode}")
        try:
            with open(paths["plan"], "r", encoding="utf-8") as f:
                text = f.read()
        except FileNotFoundError:
            return SolverFailure("unparseable", "solver exited 0 but wrote no plan file")
        except UnicodeDecodeError as e:
            return SolverFailure("unparseable", f"plan file is not UTF-8: {e}")

    try:
        actions = parse_plan_text(text, domain, problem)
    except (PDDLSyntaxError, PDDLSemanticError) as e:
        return SolverFailure("unparseable", str(e))

    report = validate_plan(domain, problem, actions)
    if not report.valid:
        return SolverFailure("validation", f"external plan rejected: {report.reason.value} {report.violated}", report)
    return Plan(actions)
