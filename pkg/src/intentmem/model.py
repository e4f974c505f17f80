"""Domain types shared by every pipeline stage, plus their record (de)serialization.

All types are value objects validated at construction. The canonical on-disk
form is UTF-8 line-delimited JSON records with a self-describing ``kind``
field; field names match the dataclass fields exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any

# Event label for steps annotated before the seed vocabulary exists; replaced
# retroactively once seeding runs.
UNSEEDED_EVENT_LABEL = "UNSEEDED"
# Fallback event label when labeling fails after seeding (gateway outage).
UNLABELED_EVENT_LABEL = "UNLABELED"

DEFAULT_SUMMARY_MAX_CHARS = 512

_WS_RE = re.compile(r"\s+")


def normalize_label(label: str) -> str:
    """Canonical comparison form: lowercased, trimmed, inner whitespace collapsed."""
    return _WS_RE.sub(" ", label.strip()).lower()


def _require_nonempty(value: str, name: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise ValueError(f"{name} must be a non-empty string")


def _check_timestamp(ts: str | int) -> None:
    if isinstance(ts, bool) or not isinstance(ts, (str, int)):
        raise ValueError("timestamp must be an ISO-8601 string or an integer tick")
    if isinstance(ts, str):
        try:
            datetime.fromisoformat(ts)
        except ValueError as exc:
            raise ValueError(f"timestamp {ts!r} is not ISO-8601") from exc


def timestamp_sort_key(ts: str | int) -> tuple[int, Any]:
    """Orderable key; integer ticks and ISO strings never compare to each other."""
    if isinstance(ts, int):
        return (0, ts)
    return (1, datetime.fromisoformat(ts))


@dataclass(frozen=True)
class TrajectoryStep:
    """One (role, action text, timestamp) unit of the history stream."""

    step_index: int
    role: str
    action_text: str
    timestamp: str | int

    def __post_init__(self) -> None:
        if not isinstance(self.step_index, int) or isinstance(self.step_index, bool) or self.step_index < 0:
            raise ValueError("step_index must be a non-negative integer")
        _require_nonempty(self.role, "role")
        _require_nonempty(self.action_text, "action_text")
        _check_timestamp(self.timestamp)


@dataclass(frozen=True)
class ContextualIntent:
    """The (scope, event type, entity-type set) retrieval cue attached to a step."""

    scope: str
    event_type: str
    entity_types: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        _require_nonempty(self.scope, "scope")
        _require_nonempty(self.event_type, "event_type")
        object.__setattr__(self, "entity_types", frozenset(self.entity_types))
        for label in self.entity_types:
            _require_nonempty(label, "entity type label")


@dataclass(frozen=True)
class MemorySnippet:
    """Stored unit: original step, disambiguated text, intent, canonical summary."""

    step: TrajectoryStep
    rewritten_text: str
    intent: ContextualIntent
    summary: str
    summary_embedding_id: str
    degraded: bool = False

    def __post_init__(self) -> None:
        _require_nonempty(self.rewritten_text, "rewritten_text")
        _require_nonempty(self.summary, "summary")
        _require_nonempty(self.summary_embedding_id, "summary_embedding_id")


@dataclass(frozen=True)
class LabelEntry:
    label: str
    created_at_step: int


@dataclass(frozen=True)
class MergeEvent:
    absorbed_label: str
    surviving_label: str
    at_step: int


@dataclass
class LabelVocabulary:
    """Evolving inventory of event or entity-type labels with merge history.

    Labels are unique under :func:`normalize_label`; the stored form keeps the
    first-seen casing. Mutated only by the ingestion session (single writer).
    """

    kind: str  # "event" | "entity_type"
    entries: list[LabelEntry] = field(default_factory=list)
    merge_log: list[MergeEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in ("event", "entity_type"):
            raise ValueError(f"unknown vocabulary kind {self.kind!r}")
        seen: set[str] = set()
        for entry in self.entries:
            norm = normalize_label(entry.label)
            if norm in seen:
                raise ValueError(f"duplicate label {entry.label!r} under normalization")
            seen.add(norm)

    @property
    def labels(self) -> list[str]:
        return [e.label for e in self.entries]

    def canonical(self, label: str) -> str | None:
        """Stored casing for ``label``, or None if absent."""
        norm = normalize_label(label)
        for entry in self.entries:
            if normalize_label(entry.label) == norm:
                return entry.label
        return None

    def add(self, label: str, step_index: int) -> tuple[str, bool]:
        """Insert a label if new; returns (canonical form, created flag)."""
        _require_nonempty(label, "label")
        existing = self.canonical(label)
        if existing is not None:
            return existing, False
        cleaned = _WS_RE.sub(" ", label.strip())
        self.entries.append(LabelEntry(cleaned, step_index))
        return cleaned, True

    def remove(self, label: str) -> None:
        norm = normalize_label(label)
        self.entries = [e for e in self.entries if normalize_label(e.label) != norm]


@dataclass(frozen=True)
class HistoryEntry:
    step_index: int
    role: str
    scope: str


@dataclass
class ScopeState:
    """Per-trajectory scope tracking: current label, inventory, summaries, window."""

    current_scope: str = ""
    scope_inventory: list[str] = field(default_factory=list)
    summaries: dict[str, str] = field(default_factory=dict)
    history_buffer: list[HistoryEntry] = field(default_factory=list)
    window: int = 20

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.current_scope and self.current_scope not in self.scope_inventory:
            raise ValueError("current_scope must be a member of scope_inventory")
        if len(self.history_buffer) > self.window:
            raise ValueError("history_buffer exceeds the configured window")

    def canonical_scope(self, label: str) -> str | None:
        norm = normalize_label(label)
        for scope in self.scope_inventory:
            if normalize_label(scope) == norm:
                return scope
        return None

    def enter_scope(self, label: str) -> str:
        """Register (or reuse) a scope label and make it current."""
        canonical = self.canonical_scope(label)
        if canonical is None:
            canonical = _WS_RE.sub(" ", label.strip())
            self.scope_inventory.append(canonical)
        self.current_scope = canonical
        return canonical

    def record_step(self, step_index: int, role: str, scope: str) -> None:
        self.history_buffer.append(HistoryEntry(step_index, role, scope))
        if len(self.history_buffer) > self.window:
            del self.history_buffer[: len(self.history_buffer) - self.window]


@dataclass(frozen=True)
class FilterConfig:
    """Query-side target sets over the scope/event/entity-type label spaces."""

    scopes: frozenset[str] = frozenset()
    event_types: frozenset[str] = frozenset()
    entity_types: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "scopes", frozenset(self.scopes))
        object.__setattr__(self, "event_types", frozenset(self.event_types))
        object.__setattr__(self, "entity_types", frozenset(self.entity_types))

    @property
    def size(self) -> int:
        return len(self.scopes) + len(self.event_types) + len(self.entity_types)

    @classmethod
    def empty(cls) -> FilterConfig:
        return cls()


@dataclass(frozen=True)
class SymbolicOperation:
    """Benchmark-side planned action: role, action kind, latent goal, payload."""

    op_index: int
    role: str
    action_kind: str
    latent_goal: str
    payload: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.op_index < 0:
            raise ValueError("op_index must be non-negative")
        _require_nonempty(self.role, "role")
        _require_nonempty(self.action_kind, "action_kind")
        _require_nonempty(self.latent_goal, "latent_goal")


QUESTION_TYPES = ("state_tracking", "contextual_recall", "multi_hop", "synthesis")


@dataclass(frozen=True)
class EvaluationQuestion:
    """Benchmark question with gold answer set and supporting operation indices."""

    question_id: str
    qtype: str
    text: str
    gold_answers: frozenset[str]
    supporting_ops: frozenset[int]

    def __post_init__(self) -> None:
        _require_nonempty(self.question_id, "question_id")
        if self.qtype not in QUESTION_TYPES:
            raise ValueError(f"qtype must be one of {QUESTION_TYPES}")
        _require_nonempty(self.text, "text")
        object.__setattr__(self, "gold_answers", frozenset(self.gold_answers))
        object.__setattr__(self, "supporting_ops", frozenset(self.supporting_ops))
        if not self.gold_answers:
            raise ValueError("gold_answers must be non-empty")
        if not self.supporting_ops:
            raise ValueError("supporting_ops must be non-empty")


@dataclass(frozen=True)
class TrajectoryReport:
    """Result of validate_trajectory: ok, or the first violated rule."""

    ok: bool
    rule: str | None = None
    step_index: int | None = None


def validate_trajectory(steps: list[TrajectoryStep]) -> TrajectoryReport:
    """Check index contiguity and timestamp monotonicity; report the first violation."""
    prev_key = None
    for position, step in enumerate(steps):
        if step.step_index != position:
            return TrajectoryReport(False, "non-contiguous", step.step_index)
        try:
            key = timestamp_sort_key(step.timestamp)
        except ValueError:
            return TrajectoryReport(False, "bad-timestamp", step.step_index)
        if prev_key is not None:
            if key[0] != prev_key[0]:
                return TrajectoryReport(False, "mixed-timestamp-types", step.step_index)
            if key < prev_key:
                return TrajectoryReport(False, "non-monotonic-timestamp", step.step_index)
        prev_key = key
    return TrajectoryReport(True)


# ---------------------------------------------------------------------------
# Record serialization
# ---------------------------------------------------------------------------


def to_record(obj: Any) -> dict[str, Any]:
    """Serialize a domain object to a plain dict with a ``kind`` discriminator."""
    if isinstance(obj, TrajectoryStep):
        return {
            "kind": "trajectory_step",
            "step_index": obj.step_index,
            "role": obj.role,
            "action_text": obj.action_text,
            "timestamp": obj.timestamp,
        }
    if isinstance(obj, ContextualIntent):
        return {
            "kind": "contextual_intent",
            "scope": obj.scope,
            "event_type": obj.event_type,
            "entity_types": sorted(obj.entity_types),
        }
    if isinstance(obj, MemorySnippet):
        return {
            "kind": "memory_snippet",
            "step": to_record(obj.step),
            "rewritten_text": obj.rewritten_text,
            "intent": to_record(obj.intent),
            "summary": obj.summary,
            "summary_embedding_id": obj.summary_embedding_id,
            "degraded": obj.degraded,
        }
    if isinstance(obj, LabelVocabulary):
        return {
            "kind": "label_vocabulary",
            "vocab_kind": obj.kind,
            "entries": [[e.label, e.created_at_step] for e in obj.entries],
            "merge_log": [[m.absorbed_label, m.surviving_label, m.at_step] for m in obj.merge_log],
        }
    if isinstance(obj, ScopeState):
        return {
            "kind": "scope_state",
            "current_scope": obj.current_scope,
            "scope_inventory": list(obj.scope_inventory),
            "summaries": dict(sorted(obj.summaries.items())),
            "history_buffer": [[h.step_index, h.role, h.scope] for h in obj.history_buffer],
            "window": obj.window,
        }
    if isinstance(obj, FilterConfig):
        return {
            "kind": "filter_config",
            "scopes": sorted(obj.scopes),
            "event_types": sorted(obj.event_types),
            "entity_types": sorted(obj.entity_types),
        }
    if isinstance(obj, SymbolicOperation):
        return {
            "kind": "symbolic_operation",
            "op_index": obj.op_index,
            "role": obj.role,
            "action_kind": obj.action_kind,
            "latent_goal": obj.latent_goal,
            "payload": obj.payload,
        }
    if isinstance(obj, EvaluationQuestion):
        return {
            "kind": "evaluation_question",
            "question_id": obj.question_id,
            "qtype": obj.qtype,
            "text": obj.text,
            "gold_answers": sorted(obj.gold_answers),
            "supporting_ops": sorted(obj.supporting_ops),
        }
    raise TypeError(f"no record form for {type(obj).__name__}")


def from_record(record: dict[str, Any]) -> Any:
    """Reconstruct a domain object from its record dict."""
    kind = record.get("kind")
    if kind == "trajectory_step":
        return TrajectoryStep(
            step_index=record["step_index"],
            role=record["role"],
            action_text=record["action_text"],
            timestamp=record["timestamp"],
        )
    if kind == "contextual_intent":
        return ContextualIntent(
            scope=record["scope"],
            event_type=record["event_type"],
            entity_types=frozenset(record["entity_types"]),
        )
    if kind == "memory_snippet":
        return MemorySnippet(
            step=from_record(record["step"]),
            rewritten_text=record["rewritten_text"],
            intent=from_record(record["intent"]),
            summary=record["summary"],
            summary_embedding_id=record["summary_embedding_id"],
            degraded=record.get("degraded", False),
        )
    if kind == "label_vocabulary":
        return LabelVocabulary(
            kind=record["vocab_kind"],
            entries=[LabelEntry(label, step) for label, step in record["entries"]],
            merge_log=[MergeEvent(a, s, t) for a, s, t in record["merge_log"]],
        )
    if kind == "scope_state":
        return ScopeState(
            current_scope=record["current_scope"],
            scope_inventory=list(record["scope_inventory"]),
            summaries=dict(record["summaries"]),
            history_buffer=[HistoryEntry(i, r, s) for i, r, s in record["history_buffer"]],
            window=record["window"],
        )
    if kind == "filter_config":
        return FilterConfig(
            scopes=frozenset(record["scopes"]),
            event_types=frozenset(record["event_types"]),
            entity_types=frozenset(record["entity_types"]),
        )
    if kind == "symbolic_operation":
        return SymbolicOperation(
            op_index=record["op_index"],
            role=record["role"],
            action_kind=record["action_kind"],
            latent_goal=record["latent_goal"],
            payload=dict(record["payload"]),
        )
    if kind == "evaluation_question":
        return EvaluationQuestion(
            question_id=record["question_id"],
            qtype=record["qtype"],
            text=record["text"],
            gold_answers=frozenset(record["gold_answers"]),
            supporting_ops=frozenset(record["supporting_ops"]),
        )
    raise ValueError(f"unknown record kind {kind!r}")


def dumps_record(record: dict[str, Any]) -> str:
    """One record per line, stable key order, no trailing newline."""
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def write_records(path: Any, objs: Any) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for obj in objs:
            record = obj if isinstance(obj, dict) else to_record(obj)
            handle.write(dumps_record(record) + "\n")


def read_records(path: Any, parse: bool = True) -> list[Any]:
    out: list[Any] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            out.append(from_record(record) if parse else record)
    return out
