# app/exceptions.py
from typing import Iterable, Optional


class PlanningError(Exception):
    """Base class for every error raised by the planning stack."""


# ===============================
# PDDL core
# ===============================

class PDDLSyntaxError(PlanningError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.message = message
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{where}")


class UnsupportedRequirementError(PlanningError):
    def __init__(self, requirement: str):
        self.requirement = requirement
        super().__init__(f"unsupported requirement {requirement}")


class PDDLSemanticError(PlanningError):
    """Structurally parsed input that violates a domain/problem invariant."""


class GroundingExplosionError(PlanningError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"grounding would produce {count} actions, cap is {cap}")


class InapplicableActionError(PlanningError):
    def __init__(self, action: str, literal: str, step: Optional[int] = None):
        self.action = action
        self.literal = literal
        self.step = step
        super().__init__(f"{action} is not applicable: precondition {literal} does not hold")


# ===============================
# Search and plan structure
# ===============================

class NodeCapExceededError(PlanningError):
    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(f"state space exceeds node cap {cap}")


class CycleError(PlanningError):
    def __init__(self, nodes: Iterable[str] = ()):
        self.nodes = tuple(nodes)
        super().__init__(f"ordering constraints contain a cycle: {' -> '.join(self.nodes)}")


# ===============================
# LLM backends
# ===============================

class BackendError(PlanningError):
    pass


class BackendTimeoutError(BackendError):
    pass


class RateLimitError(BackendError):
    def __init__(self, message: str, retry_after: Optional[float] = None):
        self.retry_after = retry_after
        super().__init__(message)


class CassetteMissError(BackendError):
    def __init__(self, digest: str, nearest: Optional[str] = None):
        self.digest = digest
        self.nearest = nearest
        hint = f"; nearest recorded request {nearest}" if nearest else "; cassette is empty"
        super().__init__(f"no cassette entry for request {digest}{hint}")


class ScriptMissError(BackendError):
    def __init__(self, role: str, digest: str):
        self.role = role
        self.digest = digest
        super().__init__(f"no script rule matches {role} request {digest}")


class SchemaError(PlanningError):
    """A structured LLM response does not conform to its schema."""


# ===============================
# Loading and configuration
# ===============================

class ConfigurationError(PlanningError):
    pass


class SuiteLoadError(PlanningError):
    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")
