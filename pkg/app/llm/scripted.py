# app/llm/scripted.py
import json
import logging
import os
from typing import Any, List, Optional

import yaml
from pydantic import BaseModel, ValidationError, model_validator

from app.exceptions import ScriptMissError, SuiteLoadError
from app.llm.backend import BackendRequest, LLMBackend, Role

logger = logging.getLogger(__name__)


class ScriptRule(BaseModel):
    """
    One scripted answer. A rule matches when the role agrees, every `task`
    substring occurs in the task text, every `context` substring occurs in
    prompt + meta-prompt, at least one `context_any` substring occurs (when
    given) and no `context_none` substring occurs. Matching ignores case.
    """
    name: str = ""
    role: Role
    task: List[str] = []
    context: List[str] = []
    context_any: List[str] = []
    context_none: List[str] = []
    response: Optional[str] = None
    data: Optional[Any] = None
    domain_file: Optional[str] = None
    problem: Optional[str] = None

    @model_validator(mode="after")
    def _one_answer(self) -> "ScriptRule":
        given = sum(x is not None for x in (self.response, self.data, self.domain_file))
        if given != 1:
            raise ValueError(f"rule {self.name or self.role.value}: give exactly one of response, data, domain_file")
        if self.domain_file is not None and self.problem is None:
            raise ValueError(f"rule {self.name}: domain_file needs a problem")
        return self

    def matches(self, request: BackendRequest) -> bool:
        if request.role != self.role:
            return False
        task = request.task.lower()
        context = f"{request.prompt}\n{request.meta_prompt}".lower()
        if not all(s.lower() in task for s in self.task):
            return False
        if not all(s.lower() in context for s in self.context):
            return False
        if self.context_any and not any(s.lower() in context for s in self.context_any):
            return False
        return not any(s.lower() in context for s in self.context_none)


class Script(BaseModel):
    rules: List[ScriptRule] = []
    stub: str = "{}"

    @classmethod
    def load(cls, path: str) -> "Script":
        """Loads a YAML script; `domain_file` paths resolve against the script's directory."""
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = yaml.safe_load(f) or {}
            script = cls.model_validate(data)
        except yaml.YAMLError as e:
            raise SuiteLoadError(path, f"invalid YAML: {e}") from e
        except ValidationError as e:
            raise SuiteLoadError(path, f"invalid script: {e}") from e

        base = os.path.dirname(os.path.abspath(path))
        for rule in script.rules:
            if rule.domain_file is None:
                continue
            domain_path = os.path.join(base, rule.domain_file)
            try:
                with open(domain_path, "r", encoding="utf-8") as f:
                    rule.data = {"domain": f.read(), "problem": rule.problem}
            except FileNotFoundError as e:
                raise SuiteLoadError(path, f"rule {rule.name}: domain file {rule.domain_file} not found") from e
            rule.domain_file = None
        return script


class ScriptedBackend(LLMBackend):
    """
    Deterministic offline backend driven by ordered rules; the first matching
    rule answers. Strict mode raises on an unmatched request, otherwise the
    script's stub is returned.
    """

    def __init__(self, script: Script, strict: bool = True):
        super().__init__()
        self.script = script
        self.strict = strict

    @classmethod
    def from_file(cls, path: str, strict: bool = True) -> "ScriptedBackend":
        return cls(Script.load(path), strict)

    def _invoke(self, request: BackendRequest) -> str:
        for rule in self.script.rules:
            if rule.matches(request):
                logger.debug(f"script rule '{rule.name}' answers {request.role.value}")
                if rule.data is not None:
                    return json.dumps(rule.data, sort_keys=True, ensure_ascii=False)
                return rule.response
        if self.strict:
            raise ScriptMissError(request.role.value, request.digest())
        logger.warning(f"no script rule for {request.role.value} request, returning stub")
        return self.script.stub
