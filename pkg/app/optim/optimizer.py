# app/optim/optimizer.py
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence

from pydantic import ValidationError

from app.config import settings
from app.exceptions import SchemaError
from app.llm.backend import BackendRequest, LLMBackend, Role, strip_code_fence
from app.optim.loss import loss_fn
from app.optim.schemas import (
    EditKind,
    EditOperation,
    Feedback,
    LayerLoss,
    PromptVersion,
    TextualGradient,
    TextualLoss,
)
from app.utils.records import RunTrace

if TYPE_CHECKING:
    from app.hierarchy.schemas import HierarchyState

logger = logging.getLogger(__name__)

GRAD_INSTRUCTION = (
    "You revise the instructions of a planning agent. Read the failure and the agent's current "
    "prompt, then propose a short ranked list of prompt edits that would prevent the failure."
)
META_GRAD_INSTRUCTION = (
    "You revise the shared guidance of one layer of planning agents. Propose a short ranked list "
    "of edits to the meta-prompt that serve the layer objective."
)
AGGREGATE_INSTRUCTION = (
    "You consolidate the failures of agents in one layer. Merge overlapping feedback into a single "
    "objective and a ranked set of candidate edits."
)

CONSTRAINT_PREFIX = "Constraint: "


@dataclass(frozen=True)
class OptimizerConfig:
    edit_cap: int = 5
    prompt_cap_bytes: int = 8192
    share_meta_prompts: bool = True

    @classmethod
    def from_settings(cls, share_meta_prompts: bool = True) -> "OptimizerConfig":
        return cls(settings.EDIT_CAP, settings.PROMPT_CAP_BYTES, share_meta_prompts)


def _load_json(content: str, schema_id: str) -> dict:
    try:
        data = json.loads(strip_code_fence(content))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{schema_id} response is not JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"{schema_id} response must be a JSON object")
    return data


def _gradient(content: str, edit_cap: int) -> TextualGradient:
    data = _load_json(content, "edits.v1")
    try:
        gradient = TextualGradient.model_validate({"edits": data.get("edits", [])})
    except ValidationError as e:
        raise SchemaError(f"edits.v1 response rejected: {e}") from e
    if len(gradient) > edit_cap:
        raise SchemaError(f"gradient has {len(gradient)} edits, cap is {edit_cap}")
    return gradient


# ===============================
# Gradients
# ===============================

def grad(loss: TextualLoss, backend: LLMBackend, prompt_text: str = "", edit_cap: int = 5) -> TextualGradient:
    """Asks the backend for ranked prompt edits answering one textual loss."""
    request = BackendRequest(
        role=Role.grad,
        prompt=GRAD_INSTRUCTION,
        task=f"{loss.prose}\nCurrent prompt:\n{prompt_text}",
        schema_id="edits.v1",
    )
    return _gradient(backend.invoke(request), edit_cap)


def meta_grad(layer_loss: LayerLoss, meta: PromptVersion, backend: LLMBackend, edit_cap: int = 5) -> TextualGradient:
    """Gradient of a layer meta-prompt; only the consolidated objective is sent."""
    request = BackendRequest(
        role=Role.grad,
        prompt=META_GRAD_INSTRUCTION,
        task=f"Layer objective:\n{layer_loss.objective}\n\nCurrent meta-prompt:\n{meta.text}",
        schema_id="edits.v1",
    )
    return _gradient(backend.invoke(request), edit_cap)


def aggregate(losses: Sequence[TextualLoss], layer: int, backend: LLMBackend) -> LayerLoss:
    """
    Consolidates the losses of one layer. Identical prose collapses to one
    contribution; an empty set yields an empty LayerLoss without a call.
    """
    proses = sorted({loss.prose for loss in losses})
    if not proses:
        return LayerLoss(layer=layer)
    sources = tuple(sorted({loss.source for loss in losses}))
    request = BackendRequest(
        role=Role.aggregate,
        prompt=AGGREGATE_INSTRUCTION,
        task=f"Layer {layer} losses:\n\n" + "\n\n".join(proses),
        schema_id="layer-loss.v1",
    )
    data = _load_json(backend.invoke(request), "layer-loss.v1")
    try:
        return LayerLoss(
            layer=layer,
            objective=str(data.get("objective", "")),
            edits=tuple(EditOperation.model_validate(e) for e in data.get("edits", [])),
            sources=sources,
        )
    except (ValidationError, TypeError) as e:
        raise SchemaError(f"layer-loss.v1 response rejected: {e}") from e


# ===============================
# TGD step
# ===============================

def _is_constraint(line: str) -> bool:
    return line.startswith(CONSTRAINT_PREFIX)


def _apply_edit(lines: List[str], edit: EditOperation, fresh: List[str]) -> List[str]:
    text = "\n".join(lines)
    if edit.kind == EditKind.append_hint:
        if edit.payload not in text:
            lines.append(edit.payload)
            fresh.append(edit.payload)
    elif edit.kind == EditKind.insert_constraint:
        constraint = CONSTRAINT_PREFIX + edit.payload
        if constraint not in text:
            # after the existing constraints, oldest first
            at = 1
            while at < len(lines) and _is_constraint(lines[at]):
                at += 1
            lines.insert(at, constraint)
            fresh.append(constraint)
    elif edit.kind == EditKind.reorder_checks:
        for i in range(1, len(lines)):
            if edit.payload in lines[i]:
                lines.insert(1, lines.pop(i))
                break
    elif edit.kind == EditKind.remove_clause:
        lines = lines[:1] + [line for line in lines[1:] if edit.payload not in line]
    return lines


def _eviction_index(lines: List[str], fresh: List[str]) -> int:
    """Oldest hint first, then the oldest constraint, then this step's own edits, lowest rank first."""
    older = [i for i in range(1, len(lines)) if lines[i] not in fresh]
    hints = [i for i in older if not _is_constraint(lines[i])]
    if hints:
        return hints[0]
    if older:
        return older[0]
    return next(lines.index(line) for line in reversed(fresh) if line in lines)


def tgd_step(
    prompt: PromptVersion,
    gradient: TextualGradient,
    cap_bytes: int = 8192,
    iteration: Optional[int] = None,
) -> PromptVersion:
    """
    Applies edits in rank order and returns the next version. Line 1 is the
    base instruction and is never removed. Over the byte cap, lines older
    than this step go first, hints before constraints.
    """
    lines = prompt.text.split("\n")
    fresh: List[str] = []
    for edit in gradient.edits:
        lines = _apply_edit(lines, edit, fresh)
    while len("\n".join(lines).encode("utf-8")) > cap_bytes and len(lines) > 1:
        evicted = lines.pop(_eviction_index(lines, fresh))
        logger.warning(f"prompt {prompt.owner} over {cap_bytes} bytes, evicted: {evicted[:60]}")
    return PromptVersion(
        owner=prompt.owner,
        version=prompt.version + 1,
        text="\n".join(lines),
        provenance=gradient.digest,
        iteration=iteration,
    )


# ===============================
# Prompt update
# ===============================

class PromptOptimizer:
    """
    Agent- and layer-level prompt update. All new versions are computed on
    copies and committed together, so a backend failure leaves every prompt
    at its previous version.
    """

    def __init__(self, backend: LLMBackend, config: Optional[OptimizerConfig] = None):
        self.backend = backend
        self.config = config or OptimizerConfig()

    def prompt_update(
        self,
        state: "HierarchyState",
        feedback: Sequence[Feedback],
        trace: Optional[RunTrace] = None,
    ) -> List[PromptVersion]:
        trace = trace if trace is not None else RunTrace()
        k = state.k
        cfg = self.config

        # (A) per-agent pre-loss, gradient and TGD step
        prompts: Dict[str, PromptVersion] = {}
        for fb in sorted(feedback, key=lambda f: state.agents[f.agent].sort_key):
            current = prompts.get(fb.agent, state.agents[fb.agent].prompt)
            pre = loss_fn(current, fb)
            trace.emit("loss", k, fb.agent, phase="pre", failure_class=fb.failure_class.value, prose=pre.prose)
            gradient = grad(pre, self.backend, current.text, cfg.edit_cap)
            updated = tgd_step(current, gradient, cfg.prompt_cap_bytes, iteration=k)
            trace.emit("tgd-step", k, fb.agent, edits=list(gradient.edits), digest=gradient.digest,
                       version=updated.version)
            prompts[fb.agent] = updated

        # post-losses only after every agent step of this iteration
        post_losses: Dict[int, List[TextualLoss]] = defaultdict(list)
        for fb in feedback:
            post = loss_fn(prompts[fb.agent], fb)
            trace.emit("loss", k, fb.agent, phase="post", failure_class=fb.failure_class.value, prose=post.prose)
            post_losses[state.agents[fb.agent].layer].append(post)

        # (B) layer aggregation and meta-prompt step, layers >= 1 only
        metas: Dict[int, PromptVersion] = {}
        if cfg.share_meta_prompts:
            for layer in sorted(post_losses):
                if layer < 1:
                    continue
                layer_loss = aggregate(post_losses[layer], layer, self.backend)
                trace.emit("layer-loss", k, None, layer=layer, objective=layer_loss.objective,
                           sources=list(layer_loss.sources))
                if layer_loss.is_empty:
                    continue
                meta = state.metas[layer]
                gradient = meta_grad(layer_loss, meta, self.backend, cfg.edit_cap)
                metas[layer] = tgd_step(meta, gradient, cfg.prompt_cap_bytes, iteration=k)

        for agent_id in sorted(prompts, key=lambda a: state.agents[a].sort_key):
            version = prompts[agent_id]
            state.set_prompt(agent_id, version)
            trace.emit("prompt-version", k, agent_id, prompt=version)
            logger.info(f"prompt {agent_id} -> v{version.version}")
        for layer in sorted(metas):
            version = metas[layer]
            state.set_meta(layer, version)
            trace.emit("prompt-version", k, version.owner, prompt=version)
            logger.info(f"meta-prompt layer {layer} -> v{version.version}")

        # (C) prune children of every replanning agent, only once the new prompts are in
        for agent_id in sorted({fb.agent for fb in feedback}, key=lambda a: state.agents[a].sort_key):
            if agent_id not in state.agents:
                continue
            for removed in state.prune(agent_id):
                trace.emit("prune", k, removed)
        return list(prompts.values()) + list(metas.values())


def prompt_update(
    state: "HierarchyState",
    feedback: Sequence[Feedback],
    backend: LLMBackend,
    config: Optional[OptimizerConfig] = None,
    trace: Optional[RunTrace] = None,
) -> List[PromptVersion]:
    return PromptOptimizer(backend, config).prompt_update(state, feedback, trace)
