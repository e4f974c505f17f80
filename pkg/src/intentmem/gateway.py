"""Single choke point for every model-backed task.

Two providers share one contract: a remote chat-completion backend, and the
deterministic rulebook provider for offline runs. Both return raw text; the
gateway parses it against the task's declared output shape, retries with a
repair instruction on malformed output, and never lets a nonconforming
payload escape.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import httpx

from .rulebook import Rulebook

logger = logging.getLogger(__name__)

TASK_KINDS = (
    "scope_induction",
    "scope_summary",
    "event_seed",
    "entity_seed",
    "event_select",
    "entity_extract",
    "coref_rewrite",
    "snippet_summary",
    "filter_derive",
    "consolidate",
    "answer",
    "surface_render",
    "entailment_check",
)

# Output shape per task kind.
SHAPES = {
    "scope_induction": "single_label",
    "scope_summary": "summary_text",
    "event_seed": "label_list",
    "entity_seed": "label_list",
    "event_select": "single_label",
    "entity_extract": "label_list",
    "coref_rewrite": "rewritten_text",
    "snippet_summary": "summary_text",
    "filter_derive": "filter_triple",
    "consolidate": "label_list",
    "answer": "summary_text",
    "surface_render": "rewritten_text",
    "entailment_check": "single_label",
}

REQUIRED_INPUTS = {
    "scope_induction": ("step_text", "role", "prior_scope", "scope_summary", "recent_history", "known_scopes"),
    "scope_summary": ("scope", "prior_summary", "step_text"),
    "event_seed": ("turns", "dataset_kind"),
    "entity_seed": ("turns", "dataset_kind"),
    "event_select": ("step_text", "candidates"),
    "entity_extract": ("step_text", "vocab_labels"),
    "coref_rewrite": ("step_text", "aligned_context"),
    "snippet_summary": ("rewritten_text", "role", "scope", "event_type", "entity_types"),
    "filter_derive": ("query", "scopes", "event_types", "entity_types"),
    "consolidate": ("labels",),
    "answer": ("question", "task_setting", "retrieved_turns"),
    "surface_render": ("role", "latent_goal", "payload", "template_text"),
    "entailment_check": ("action_text", "required_terms"),
}


class GatewayError(Exception):
    """Typed gateway failure; ``code`` distinguishes the failure class."""

    code = "gateway_error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class TaskRejectedError(GatewayError):
    code = "task_rejected"


class ProviderUnreachableError(GatewayError):
    code = "provider_unreachable"


class ShapeViolationError(GatewayError):
    code = "shape_violation"


class ShapeViolationExhaustedError(GatewayError):
    code = "shape_violation_exhausted"


@dataclass(frozen=True)
class ModelTask:
    """One model-backed request: kind, named inputs, expected output shape."""

    task_kind: str
    inputs: dict[str, Any]
    constraints: str = ""

    def __post_init__(self) -> None:
        if self.task_kind not in TASK_KINDS:
            raise TaskRejectedError(f"unknown task kind {self.task_kind!r}")
        missing = [f for f in REQUIRED_INPUTS[self.task_kind] if f not in self.inputs]
        if missing:
            raise TaskRejectedError(f"{self.task_kind} task missing inputs: {missing}")
        object.__setattr__(self, "constraints", SHAPES[self.task_kind])


@dataclass(frozen=True)
class ModelResult:
    task_kind: str
    payload: Any
    provider: str
    raw: str


@dataclass
class GatewayConfig:
    provider: str = "deterministic"
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = 1.0
    timeout_ms: int = 30_000
    max_retries: int = 2
    rulebook_path: str | None = None
    requests_per_minute: int = 600

    @classmethod
    def from_file(cls, path) -> GatewayConfig:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


def load_prompt_template(task_kind: str) -> str:
    """Instruction template shipped with the package, one file per task kind."""
    return resources.files("intentmem.prompts").joinpath(f"{task_kind}.txt").read_text("utf-8")


def render_prompt(task: ModelTask) -> str:
    template = load_prompt_template(task.task_kind)
    rendered_inputs = {
        key: json.dumps(value, ensure_ascii=False) if not isinstance(value, str) else value
        for key, value in task.inputs.items()
    }
    return template.format(**rendered_inputs)


class _TokenBucket:
    """Requests-per-minute limiter for the remote provider."""

    def __init__(self, per_minute: int):
        self.capacity = max(1, per_minute)
        self.tokens = float(self.capacity)
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.capacity / 60.0)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) * 60.0 / self.capacity
            time.sleep(wait)


class DeterministicProvider:
    """Wraps the rulebook; emits the payload serialized as JSON text."""

    name = "deterministic"

    def __init__(self, rulebook: Rulebook | None = None):
        self.rulebook = rulebook or Rulebook()

    def complete(self, task: ModelTask, repair: str | None = None) -> str:
        payload = self.rulebook.apply(task.task_kind, task.inputs)
        return json.dumps(payload, ensure_ascii=False)


class RemoteProvider:
    """Chat-completion client speaking {model, messages, temperature} over HTTPS."""

    name = "remote"

    def __init__(self, config: GatewayConfig):
        if not config.endpoint_url:
            raise TaskRejectedError("remote provider requires endpoint_url")
        self.config = config
        self._bucket = _TokenBucket(config.requests_per_minute)

    def complete(self, task: ModelTask, repair: str | None = None) -> str:
        self._bucket.acquire()
        prompt = render_prompt(task)
        messages = [{"role": "system", "content": prompt}]
        if repair:
            messages.append({"role": "user", "content": repair})
        body = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        try:
            response = httpx.post(
                self.config.endpoint_url, json=body, timeout=self.config.timeout_ms / 1000.0
            )
            response.raise_for_status()
            data = response.json()
            return data["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderUnreachableError(f"remote provider failed: {exc}") from exc


def _parse_payload(task: ModelTask, raw: str) -> Any:
    """Parse raw provider text into the task's declared shape, or raise."""
    shape = task.constraints
    text = raw.strip()
    if not text:
        raise ShapeViolationError(f"{task.task_kind}: empty provider output")
    if shape == "single_label":
        try:
            value = json.loads(text)
        except ValueError:
            value = text
        if not isinstance(value, str) or not value.strip() or "\n" in value.strip():
            raise ShapeViolationError(f"{task.task_kind}: expected a single label line")
        label = value.strip()
        if task.task_kind == "event_select":
            candidates = list(task.inputs["candidates"])
            if label not in candidates and not label.startswith("NEW:"):
                raise ShapeViolationError("event_select output not a candidate or NEW: label")
            if label.startswith("NEW:") and not label[4:].strip():
                raise ShapeViolationError("event_select NEW: label is empty")
        return label
    if shape == "label_list":
        try:
            value = json.loads(text)
        except ValueError as exc:
            raise ShapeViolationError(f"{task.task_kind}: expected a JSON list") from exc
        if not isinstance(value, list) or not all(isinstance(v, str) and v.strip() for v in value):
            raise ShapeViolationError(f"{task.task_kind}: expected a list of non-empty strings")
        return [v.strip() for v in value]
    if shape in ("rewritten_text", "summary_text"):
        try:
            value = json.loads(text)
        except ValueError:
            value = text
        if not isinstance(value, str) or not value.strip():
            raise ShapeViolationError(f"{task.task_kind}: expected non-empty text")
        return value.strip()
    if shape == "filter_triple":
        try:
            value = json.loads(text)
        except ValueError as exc:
            raise ShapeViolationError("filter_derive: expected a JSON object") from exc
        if not isinstance(value, dict):
            raise ShapeViolationError("filter_derive: expected a JSON object")
        out = {}
        for key in ("scopes", "event_types", "entity_types"):
            part = value.get(key, [])
            if not isinstance(part, list) or not all(isinstance(v, str) for v in part):
                raise ShapeViolationError(f"filter_derive: field {key} must be a string list")
            out[key] = [v.strip() for v in part if v.strip()]
        return out
    raise ShapeViolationError(f"unknown shape {shape!r}")


_REPAIR_HINT = (
    "Your previous output did not match the required shape ({shape}). "
    "Respond again with only the {shape} content and no commentary."
)


class Gateway:
    """Runs tasks against the configured provider with shape-checked retries."""

    def __init__(self, provider, max_retries: int = 2):
        self.provider = provider
        self.max_retries = max_retries
        self.call_counts: Counter[str] = Counter()
        self._lock = threading.Lock()

    @property
    def total_calls(self) -> int:
        return sum(self.call_counts.values())

    def run_task(self, task: ModelTask) -> ModelResult:
        repair = None
        last_error: ShapeViolationError | None = None
        for attempt in range(self.max_retries + 1):
            with self._lock:
                self.call_counts[task.task_kind] += 1
            raw = self.provider.complete(task, repair=repair)
            try:
                payload = _parse_payload(task, raw)
            except ShapeViolationError as exc:
                last_error = exc
                repair = _REPAIR_HINT.format(shape=task.constraints)
                logger.warning("shape violation on %s (attempt %d): %s", task.task_kind, attempt + 1, exc)
                continue
            return ModelResult(task.task_kind, payload, self.provider.name, raw)
        raise ShapeViolationExhaustedError(
            f"{task.task_kind}: provider output failed shape checks "
            f"{self.max_retries + 1} times ({last_error})"
        )


def build_gateway(config: GatewayConfig | None = None) -> Gateway:
    config = config or GatewayConfig()
    if config.provider == "deterministic":
        rulebook = Rulebook.load(config.rulebook_path) if config.rulebook_path else Rulebook()
        provider = DeterministicProvider(rulebook)
    elif config.provider == "remote":
        provider = RemoteProvider(config)
    else:
        raise TaskRejectedError(f"unknown provider {config.provider!r}")
    return Gateway(provider, max_retries=config.max_retries)
