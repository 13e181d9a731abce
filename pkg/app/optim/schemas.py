# app/optim/schemas.py
import hashlib
import json
from enum import Enum
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.pddl.schemas import ValidationReport


class FailureClass(str, Enum):
    parse = "parse"
    precondition = "precondition"
    unsolvable = "unsolvable"
    budget = "budget"
    validation = "validation"
    malformed_response = "malformed-response"


REPORT_CLASSES = (FailureClass.precondition, FailureClass.validation)


class Diagnostic(BaseModel):
    """Non-report evidence: parser, schema or search diagnostics."""
    model_config = ConfigDict(frozen=True)

    message: str
    line: Optional[int] = None
    column: Optional[int] = None


class Feedback(BaseModel):
    """Structured failure evidence attributed to one agent."""
    model_config = ConfigDict(frozen=True)

    agent: str
    origin: str
    robot: Optional[str] = None
    failure_class: FailureClass
    report: Optional[ValidationReport] = None
    diagnostic: Optional[Diagnostic] = None

    @model_validator(mode="after")
    def _evidence_matches_class(self) -> "Feedback":
        if self.failure_class in REPORT_CLASSES:
            if self.report is None:
                raise ValueError(f"{self.failure_class.value} feedback needs a validation report")
        elif self.diagnostic is None:
            raise ValueError(f"{self.failure_class.value} feedback needs a diagnostic")
        return self

    def retarget(self, agent: str) -> "Feedback":
        return self.model_copy(update={"agent": agent})


class TextualLoss(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: str
    failure_class: FailureClass
    feedback: Feedback
    prompt_version: int
    prose: str


class EditKind(str, Enum):
    append_hint = "append-hint"
    insert_constraint = "insert-constraint"
    reorder_checks = "reorder-checks"
    remove_clause = "remove-clause"


class EditOperation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: EditKind
    payload: str = Field(min_length=1)
    rank: int

    @field_validator("payload")
    @classmethod
    def _strip(cls, value: str) -> str:
        value = value.strip()
        if not value:
            raise ValueError("edit payload is empty")
        return value


class TextualGradient(BaseModel):
    model_config = ConfigDict(frozen=True)

    edits: Tuple[EditOperation, ...] = ()

    @field_validator("edits")
    @classmethod
    def _ranked(cls, edits: Tuple[EditOperation, ...]) -> Tuple[EditOperation, ...]:
        ordered = tuple(sorted(edits, key=lambda e: e.rank))
        ranks = [e.rank for e in ordered]
        if len(set(ranks)) != len(ranks):
            raise ValueError("edit ranks must be distinct")
        return ordered

    @property
    def digest(self) -> str:
        payload = json.dumps([e.model_dump(mode="json") for e in self.edits], sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def __len__(self) -> int:
        return len(self.edits)


class PromptVersion(BaseModel):
    model_config = ConfigDict(frozen=True)

    owner: str
    version: int = 0
    text: str
    provenance: str = "initial"
    iteration: Optional[int] = None


class LayerLoss(BaseModel):
    model_config = ConfigDict(frozen=True)

    layer: int
    objective: str = ""
    edits: Tuple[EditOperation, ...] = ()
    sources: Tuple[str, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.objective.strip()


def meta_owner(layer: int) -> str:
    return f"meta:{layer}"
