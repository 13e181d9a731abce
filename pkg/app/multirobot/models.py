# app/multirobot/models.py
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import yaml

from app.exceptions import PDDLSemanticError, PlanningError, SuiteLoadError
from app.pddl.grounding import ROBOT_TYPE, ground
from app.pddl.parser import check_problem, parse_domain, parse_literal
from app.pddl.schemas import Atom, Domain, GroundAction, Literal, Problem, State, TypedName

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RobotTeam:
    """R, the robot types, type: R -> types and cap: type -> skills."""
    robot_types: Mapping[str, str]
    capabilities: Mapping[str, FrozenSet[str]]

    def __post_init__(self):
        for robot, robot_type in self.robot_types.items():
            if not self.capabilities.get(robot_type):
                raise PDDLSemanticError(f"robot {robot} has type {robot_type} with no capabilities")

    @property
    def robots(self) -> List[str]:
        return sorted(self.robot_types)

    @property
    def types(self) -> List[str]:
        return sorted(set(self.robot_types.values()))

    @property
    def skills(self) -> FrozenSet[str]:
        return frozenset().union(*self.capabilities.values()) if self.capabilities else frozenset()

    @property
    def N(self) -> int:
        return len(self.robot_types)

    @property
    def M(self) -> int:
        return len(self.types)

    def type_of(self, robot: str) -> str:
        return self.robot_types[robot]

    def cap(self, robot_type: str) -> FrozenSet[str]:
        return frozenset(self.capabilities.get(robot_type, ()))

    def robots_of(self, robot_type: str) -> List[str]:
        return [r for r in self.robots if self.robot_types[r] == robot_type]


@dataclass(frozen=True)
class MultiRobotProblem:
    id: str
    domain: Domain
    team: RobotTeam
    objects: Tuple[TypedName, ...]
    init: State
    goal: Tuple[Literal, ...] = ()
    source: Optional[str] = field(default=None, compare=False)

    def with_goal(self, goal: Sequence[Literal]) -> "MultiRobotProblem":
        return MultiRobotProblem(self.id, self.domain, self.team, self.objects, self.init, tuple(goal), self.source)

    def joint_problem(self) -> Problem:
        return Problem(f"{self.id}-joint", self.domain.name, self.objects, self.init, self.goal)

    def type_domain(self, robot_type: str) -> Domain:
        """D_tau: the world domain restricted to cap(tau)."""
        return self.domain.restrict(self.team.cap(robot_type))

    def robot_skills(self, robot: str) -> FrozenSet[str]:
        return self.team.cap(self.team.type_of(robot))

    def actions_for(self, robot: str) -> Tuple[GroundAction, ...]:
        """A^r: ground actions of D_type(r) owned by r."""
        domain = self.type_domain(self.team.type_of(robot))
        return tuple(a for a in ground(domain, self.joint_problem()) if a.robot == robot)

    def joint_actions(self) -> Tuple[GroundAction, ...]:
        """Ground actions of the whole team, each robot limited to its own capabilities."""
        return tuple(
            a for a in ground(self.domain, self.joint_problem())
            if a.robot is None or (a.robot in self.team.robot_types and a.name in self.robot_skills(a.robot))
        )

    def goal_satisfied(self, state: State) -> bool:
        return all(lit.holds(state) for lit in self.goal)

    def describe(self) -> str:
        """Environment description handed to agents as part of their task."""
        lines = [f"environment: {self.id}"]
        lines.append("robots: " + ", ".join(f"{r} ({self.team.type_of(r)})" for r in self.team.robots))
        lines.append("skills:")
        for robot_type in self.team.types:
            lines.append(f"  {robot_type}: {', '.join(sorted(self.team.cap(robot_type)))}")
        lines.append("objects:")
        by_type: Dict[str, List[str]] = {}
        for obj in self.objects:
            by_type.setdefault(obj.type, []).append(obj.name)
        for type_name in sorted(by_type):
            lines.append(f"  {type_name}: {', '.join(sorted(by_type[type_name]))}")
        lines.append("state:")
        lines.extend(f"  {atom}" for atom in sorted(self.init))
        return "\n".join(lines)


# ============================
# Environment files
# ============================

def _atom(text: str) -> Atom:
    lit = parse_literal(text)
    if not lit.positive:
        raise PDDLSemanticError(f"initial atom {text} must be positive")
    return lit.atom


def parse_goal(items: Sequence[str]) -> Tuple[Literal, ...]:
    return tuple(parse_literal(str(item)) for item in items)


def load_environment(path: str) -> MultiRobotProblem:
    """
    Loads an environment YAML file:

      id, domain (path relative to the file), robots {id: type},
      capabilities {type: [schema, ...]}, objects {type: [name, ...]},
      init [atom, ...], optional goal [literal, ...]
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise SuiteLoadError(path, f"invalid YAML: {e}") from e
    if not isinstance(data, dict):
        raise SuiteLoadError(path, "environment file must contain a mapping")

    try:
        domain_path = os.path.join(os.path.dirname(os.path.abspath(path)), data["domain"])
        with open(domain_path, "r", encoding="utf-8") as f:
            domain = parse_domain(f.read())

        robots = {str(r): str(t) for r, t in (data.get("robots") or {}).items()}
        capabilities = {str(t): frozenset(str(s).lower() for s in skills)
                        for t, skills in (data.get("capabilities") or {}).items()}
        unknown = sorted(s for skills in capabilities.values() for s in skills if domain.action(s) is None)
        if unknown:
            raise PDDLSemanticError(f"capabilities name unknown actions: {', '.join(unknown)}")
        team = RobotTeam(robots, capabilities)

        objects = [TypedName(r, ROBOT_TYPE) for r in team.robots]
        for type_name, names in (data.get("objects") or {}).items():
            objects.extend(TypedName(str(n), str(type_name)) for n in names)
        init = frozenset(_atom(str(a)) for a in data.get("init") or [])
        goal = parse_goal(data.get("goal") or [])

        env = MultiRobotProblem(
            id=str(data.get("id") or os.path.splitext(os.path.basename(path))[0]),
            domain=domain,
            team=team,
            objects=tuple(objects),
            init=init,
            goal=goal,
            source=os.path.abspath(path),
        )
        check_problem(domain, env.joint_problem())
    except KeyError as e:
        raise SuiteLoadError(path, f"missing key {e}") from e
    except FileNotFoundError as e:
        raise SuiteLoadError(path, f"file not found: {e.filename}") from e
    except PlanningError as e:
        raise SuiteLoadError(path, str(e)) from e
    logger.debug(f"loaded environment {env.id} with {env.team.N} robots")
    return env
