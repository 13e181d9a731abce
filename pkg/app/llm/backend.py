# app/llm/backend.py
import hashlib
import json
import threading
from abc import ABC, abstractmethod
from collections import Counter
from enum import Enum
from typing import Dict, List

from pydantic import BaseModel, ConfigDict, field_validator


class Role(str, Enum):
    decompose = "decompose"
    generate_pddl = "generate-pddl"
    decide = "decide"
    grad = "grad"
    aggregate = "aggregate"


# Output contract per schema id; also appended to the system message for live calls.
SCHEMAS: Dict[str, str] = {
    "decomposition.v1": (
        'Respond with JSON only: {"subtasks": [{"id": str, "target": str, '
        '"description": str, "depends_on": [sibling id, ...]}]}'
    ),
    "pddl-spec.v1": 'Respond with JSON only: {"domain": PDDL domain text, "problem": PDDL problem text}',
    "decision.v1": 'Respond with JSON only: {"decision": "self" | "parent"}',
    "edits.v1": (
        'Respond with JSON only: {"edits": [{"kind": "append-hint" | "insert-constraint" | '
        '"reorder-checks" | "remove-clause", "payload": str, "rank": int}]}'
    ),
    "layer-loss.v1": (
        'Respond with JSON only: {"objective": str, "edits": [{"kind": str, "payload": str, "rank": int}]}'
    ),
}


def canonicalize_text(text: str) -> str:
    """Normalizes line endings and strips trailing whitespace per line and at the end."""
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    return "\n".join(line.rstrip() for line in lines).rstrip()


class BackendRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    role: Role
    prompt: str = ""
    meta_prompt: str = ""
    task: str = ""
    schema_id: str

    @field_validator("schema_id")
    @classmethod
    def _registered(cls, value: str) -> str:
        if value not in SCHEMAS:
            raise ValueError(f"unregistered schema id {value}")
        return value

    def canonical(self) -> Dict[str, str]:
        return {
            "role": self.role.value,
            "prompt": canonicalize_text(self.prompt),
            "meta_prompt": canonicalize_text(self.meta_prompt),
            "task": canonicalize_text(self.task),
            "schema_id": self.schema_id,
        }

    def digest(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def messages(self) -> List[Dict[str, str]]:
        system = "\n\n".join(part for part in (self.prompt, self.meta_prompt, SCHEMAS[self.schema_id]) if part)
        return [
            {"role": "system", "content": system},
            {"role": "user", "content": self.task},
        ]


# ============================
# Strategy Interface
# ============================
class LLMBackend(ABC):
    """
    Pluggable LLM invocation. `invoke` is safe for concurrent callers and
    keeps simple per-role call counters.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.calls: Counter = Counter()

    def invoke(self, request: BackendRequest) -> str:
        with self._lock:
            self.calls[request.role.value] += 1
        return self._invoke(request)

    @property
    def total_calls(self) -> int:
        return sum(self.calls.values())

    @abstractmethod
    def _invoke(self, request: BackendRequest) -> str:
        pass


def strip_code_fence(content: str) -> str:
    content = content.strip()
    if content.startswith("```"):
        content = content.strip("`").strip()
        if content.lower().startswith("json"):
            content = content[4:].lstrip()
    return content
