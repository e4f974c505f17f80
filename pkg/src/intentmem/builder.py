"""Online annotation pipeline: scope induction, event labeling with a dynamic
vocabulary, entity-type extraction, coreference rewriting, and snippet
construction, in that order, one pass over the step stream.

Event and entity-type vocabularies seed once the configured number of steps
has arrived (or at finalize for shorter trajectories); steps annotated before
seeding carry the UNSEEDED sentinel and are relabeled immediately after.
Vocabularies consolidate every ``k_update`` steps and at end of trajectory.
Gateway failures during ingestion fail open (inherit scope, skip rewrite,
fallback summary); seeding alone fails closed.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

from .embedding import HashEmbedder, cosine
from .gateway import Gateway, GatewayError, ModelTask, build_gateway
from .model import (
    UNLABELED_EVENT_LABEL,
    UNSEEDED_EVENT_LABEL,
    ContextualIntent,
    LabelVocabulary,
    MemorySnippet,
    MergeEvent,
    ScopeState,
    TrajectoryStep,
    normalize_label,
)
from .rulebook import Rulebook
from .store import OutOfOrderError, StoreWriter
from .textutil import first_sentence, sentence_spans

logger = logging.getLogger(__name__)


class SeedingError(Exception):
    """Vocabulary seeding failed; ingestion cannot continue."""


@dataclass
class IngestionConfig:
    n_start: int = 50
    k_update: int = 50
    k_event: int = 5
    history_window: int = 20
    consolidation_similarity_threshold: float = 0.90
    scope_summary_max_chars: int = 1000
    summary_max_chars: int = 512
    dataset_kind: str = "goal-oriented dialogue"
    rewrite_mode: str = "detector"  # detector | always | off
    consolidation_mode: str = "embedding"  # embedding | gateway

    def __post_init__(self) -> None:
        for name in ("n_start", "k_update", "k_event", "history_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not 0.0 < self.consolidation_similarity_threshold <= 1.0:
            raise ValueError("consolidation_similarity_threshold must be in (0, 1]")
        if self.rewrite_mode not in ("detector", "always", "off"):
            raise ValueError("rewrite_mode must be detector, always, or off")
        if self.consolidation_mode not in ("embedding", "gateway"):
            raise ValueError("consolidation_mode must be embedding or gateway")


def _tail_truncate(text: str, cap: int) -> str:
    """Keep the most recent content, cutting from the front at sentence joints."""
    if len(text) <= cap:
        return text
    spans = sentence_spans(text)
    kept = ""
    for a, b in reversed(spans):
        candidate = text[a:b] + kept
        if len(candidate.strip()) > cap:
            break
        kept = candidate
    kept = kept.strip()
    if not kept:
        kept = text[-cap:].strip()
    return kept


def _turn_digest(steps: list[TrajectoryStep]) -> str:
    lines = []
    for step in steps:
        sentences = [s.strip() for s in _split(step.action_text)]
        if len(sentences) > 1:
            lines.append(f"{step.role}: {sentences[0]} ... {sentences[-1]}")
        else:
            lines.append(f"{step.role}: {sentences[0] if sentences else step.action_text}")
    return "\n".join(lines)


def _split(text: str) -> list[str]:
    return [text[a:b] for a, b in sentence_spans(text)]


class IngestSession:
    """Single-writer ingestion session for one trajectory."""

    def __init__(
        self,
        store_dir,
        trajectory_id: str | None = None,
        gateway: Gateway | None = None,
        embedder=None,
        config: IngestionConfig | None = None,
        detector: Rulebook | None = None,
    ):
        self.config = config or IngestionConfig()
        self.gateway = gateway or build_gateway()
        self.embedder = embedder or HashEmbedder()
        self.detector = detector or Rulebook()
        self.writer = StoreWriter(
            store_dir, trajectory_id, summary_max_chars=self.config.summary_max_chars
        )
        self._load_state()

    # -- lifecycle --

    def _load_state(self) -> None:
        from .store import load_view

        view = load_view(self.writer.root)
        self.scope_state = view.scope_state
        self.scope_state.window = self.config.history_window
        self.event_vocab: LabelVocabulary | None = (
            view.vocabularies["event"] if view.vocabularies["event"].entries else None
        )
        self.entity_vocab: LabelVocabulary | None = (
            view.vocabularies["entity_type"] if view.vocabularies["entity_type"].entries else None
        )
        self._aliases: dict[str, dict[str, str]] = {"event": {}, "entity_type": {}}
        for kind, vocab in (("event", self.event_vocab), ("entity_type", self.entity_vocab)):
            if vocab is not None:
                for merge in vocab.merge_log:
                    self._aliases[kind][normalize_label(merge.absorbed_label)] = merge.surviving_label

    @property
    def steps_processed(self) -> int:
        return self.writer.snippet_count

    def close(self) -> None:
        self.writer.close()

    def __enter__(self) -> IngestSession:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- gateway helpers --

    def _run(self, task_kind: str, **inputs) -> object:
        result = self.gateway.run_task(ModelTask(task_kind, inputs))
        return result.payload

    # -- pipeline stages --

    def induce_scope(self, step: TrajectoryStep) -> str:
        prior = self.scope_state.current_scope
        history = "\n".join(
            f"step {h.step_index} [{h.role}] scope={h.scope}" for h in self.scope_state.history_buffer
        )
        try:
            proposal = self._run(
                "scope_induction",
                step_text=step.action_text,
                role=step.role,
                prior_scope=prior,
                scope_summary=self.scope_state.summaries.get(prior, ""),
                recent_history=history,
                known_scopes="\n".join(self.scope_state.scope_inventory),
            )
        except GatewayError as exc:
            logger.warning("scope induction failed at step %d (%s); inheriting", step.step_index, exc.code)
            proposal = prior or "general discussion"
        return self.scope_state.enter_scope(str(proposal))

    def update_scope_summary(self, step: TrajectoryStep) -> str:
        scope = self.scope_state.current_scope
        if not scope:
            raise ValueError("update_scope_summary requires a current scope")
        prior = self.scope_state.summaries.get(scope, "")
        try:
            updated = self._run(
                "scope_summary", scope=scope, prior_summary=prior, step_text=step.action_text
            )
        except GatewayError as exc:
            logger.warning("scope summary failed at step %d (%s); unchanged", step.step_index, exc.code)
            return prior
        capped = _tail_truncate(str(updated), self.config.scope_summary_max_chars)
        self.scope_state.summaries[scope] = capped
        return capped

    def seed_event_vocabulary(self, first_steps: list[TrajectoryStep]) -> LabelVocabulary:
        if not first_steps:
            raise ValueError("seeding requires at least one step")
        if len(first_steps) > self.config.n_start:
            raise ValueError("seeding window exceeds n_start")
        try:
            labels = self._run(
                "event_seed", turns=_turn_digest(first_steps), dataset_kind=self.config.dataset_kind
            )
        except GatewayError as exc:
            raise SeedingError(f"event vocabulary seeding failed: {exc}") from exc
        vocab = LabelVocabulary("event")
        seed_step = first_steps[-1].step_index
        for label in labels:
            vocab.add(label, seed_step)
        if not vocab.entries:
            raise SeedingError("event seeding produced an empty vocabulary")
        return vocab

    def seed_entity_vocabulary(self, first_steps: list[TrajectoryStep]) -> LabelVocabulary:
        if not first_steps:
            raise ValueError("seeding requires at least one step")
        try:
            labels = self._run(
                "entity_seed", turns=_turn_digest(first_steps), dataset_kind=self.config.dataset_kind
            )
        except GatewayError as exc:
            raise SeedingError(f"entity vocabulary seeding failed: {exc}") from exc
        vocab = LabelVocabulary("entity_type")
        seed_step = first_steps[-1].step_index
        for label in labels:
            vocab.add(label, seed_step)
        return vocab

    def label_event(self, step: TrajectoryStep, vocab: LabelVocabulary, k_event: int | None = None) -> tuple[str, bool]:
        if not vocab.entries:
            raise ValueError("event vocabulary is not seeded")
        k = k_event or self.config.k_event
        query = self.embedder.embed(step.action_text)
        scored = sorted(
            ((cosine(query, self.embedder.embed(label)), label) for label in vocab.labels),
            key=lambda item: (-item[0], item[1]),
        )
        candidates = [label for _, label in scored[: min(k, len(scored))]]
        try:
            selected = self._run("event_select", step_text=step.action_text, candidates=candidates)
        except GatewayError as exc:
            logger.warning("event labeling failed at step %d (%s)", step.step_index, exc.code)
            return UNLABELED_EVENT_LABEL, False
        selected = str(selected)
        if selected.startswith("NEW:"):
            proposed = selected[4:].strip()
            alias = self._aliases["event"].get(normalize_label(proposed))
            if alias is not None:
                return alias, False
            label, created = vocab.add(proposed, step.step_index)
            return label, created
        alias = self._aliases["event"].get(normalize_label(selected))
        if alias is not None:
            return alias, False
        label, created = vocab.add(selected, step.step_index)
        return label, created

    def extract_entity_types(self, step: TrajectoryStep, vocab: LabelVocabulary) -> frozenset[str]:
        try:
            labels = self._run(
                "entity_extract", step_text=step.action_text, vocab_labels=list(vocab.labels)
            )
        except GatewayError as exc:
            logger.warning("entity extraction failed at step %d (%s)", step.step_index, exc.code)
            return frozenset()
        out = set()
        for proposed in labels:
            alias = self._aliases["entity_type"].get(normalize_label(proposed))
            if alias is not None:
                out.add(alias)
                continue
            label, _ = vocab.add(proposed, step.step_index)
            out.add(label)
        return frozenset(out)

    def aligned_context(self, scope: str, event_type: str) -> list[MemorySnippet]:
        """Prior snippets sharing the scope or event type, most recent first."""
        out: list[MemorySnippet] = []
        for snippet in reversed(self.writer.snippets):
            if snippet.intent.scope == scope or snippet.intent.event_type == event_type:
                out.append(snippet)
                if len(out) >= self.config.history_window:
                    break
        return out

    def resolve_references(self, step: TrajectoryStep, scope: str, event_type: str) -> str:
        if self.config.rewrite_mode == "off":
            return step.action_text
        if self.config.rewrite_mode == "detector" and not self.detector.has_reference_trigger(
            step.action_text
        ):
            return step.action_text
        context = self.aligned_context(scope, event_type)
        lines = "\n".join(snippet.rewritten_text for snippet in context)
        try:
            rewritten = self._run("coref_rewrite", step_text=step.action_text, aligned_context=lines)
        except GatewayError as exc:
            logger.warning("coref rewrite failed at step %d (%s); keeping raw text", step.step_index, exc.code)
            return step.action_text
        return str(rewritten)

    def build_snippet(
        self, step: TrajectoryStep, rewritten_text: str, intent: ContextualIntent
    ) -> MemorySnippet:
        degraded = False
        try:
            summary = str(
                self._run(
                    "snippet_summary",
                    rewritten_text=rewritten_text,
                    role=step.role,
                    scope=intent.scope,
                    event_type=intent.event_type,
                    entity_types=sorted(intent.entity_types),
                )
            )
        except GatewayError as exc:
            logger.warning("summary failed at step %d (%s); degraded snippet", step.step_index, exc.code)
            summary = first_sentence(rewritten_text) or rewritten_text
            degraded = True
        summary = summary.strip()[: self.config.summary_max_chars]
        if not summary:
            summary = rewritten_text[: self.config.summary_max_chars]
        snippet = MemorySnippet(
            step=step,
            rewritten_text=rewritten_text,
            intent=intent,
            summary=summary,
            summary_embedding_id=f"snip-{step.step_index:06d}",
            degraded=degraded,
        )
        self.writer.append_snippet(snippet, self.embedder.embed(summary))
        return snippet

    # -- vocabulary maintenance --

    def consolidate_vocabulary(
        self, vocab: LabelVocabulary, at_step: int
    ) -> tuple[LabelVocabulary, dict[str, str]]:
        """Merge near-synonymous labels; the older label survives."""
        if self.config.consolidation_mode == "gateway":
            merged = self._gateway_merges(vocab)
        else:
            merged = self._embedding_merges(vocab)
        remap: dict[str, str] = {}
        new_vocab = LabelVocabulary(vocab.kind, merge_log=list(vocab.merge_log))
        for entry in vocab.entries:
            survivor = merged.get(entry.label)
            if survivor is None:
                new_vocab.entries.append(entry)
            else:
                remap[entry.label] = survivor
                new_vocab.merge_log.append(MergeEvent(entry.label, survivor, at_step))
                self._aliases[vocab.kind][normalize_label(entry.label)] = survivor
        return new_vocab, remap

    def _embedding_merges(self, vocab: LabelVocabulary) -> dict[str, str]:
        threshold = self.config.consolidation_similarity_threshold
        vectors = {label: self.embedder.embed(label) for label in vocab.labels}
        survivors: list[str] = []
        merged: dict[str, str] = {}
        for entry in vocab.entries:
            best_label = None
            best_score = threshold
            for older in survivors:
                score = cosine(vectors[entry.label], vectors[older])
                if score > best_score or (score == best_score and best_label is None):
                    best_score = score
                    best_label = older
            if best_label is None:
                survivors.append(entry.label)
            else:
                merged[entry.label] = best_label
        return merged

    def _gateway_merges(self, vocab: LabelVocabulary) -> dict[str, str]:
        try:
            directives = self._run("consolidate", labels=list(vocab.labels))
        except GatewayError as exc:
            logger.warning("gateway consolidation failed (%s); no merges", exc.code)
            return {}
        known = set(vocab.labels)
        merged: dict[str, str] = {}
        for directive in directives:
            if " => " not in directive:
                continue
            absorbed, survivor = (part.strip() for part in directive.split(" => ", 1))
            if absorbed in known and survivor in known and absorbed != survivor:
                merged[absorbed] = merged.get(survivor, survivor)
        return merged

    def _consolidate_all(self, at_step: int) -> None:
        for kind in ("event", "entity_type"):
            vocab = self.event_vocab if kind == "event" else self.entity_vocab
            if vocab is None:
                continue
            new_vocab, remap = self.consolidate_vocabulary(vocab, at_step)
            self.writer.apply_remap(kind, remap, new_vocab)
            if kind == "event":
                self.event_vocab = new_vocab
            else:
                self.entity_vocab = new_vocab

    def _seed_and_relabel(self) -> None:
        steps = [snippet.step for snippet in self.writer.snippets]
        self.event_vocab = self.seed_event_vocabulary(steps[: self.config.n_start])
        self.entity_vocab = self.seed_entity_vocabulary(steps[: self.config.n_start])
        updates: dict[int, ContextualIntent] = {}
        for snippet in self.writer.snippets:
            step = snippet.step
            label, _ = self.label_event(step, self.event_vocab)
            entities = self.extract_entity_types(step, self.entity_vocab)
            intent = ContextualIntent(snippet.intent.scope, label, entities)
            if intent != snippet.intent:
                updates[step.step_index] = intent
        self.writer.apply_relabel(updates)
        self.writer.save_vocabulary(self.event_vocab)
        self.writer.save_vocabulary(self.entity_vocab)

    # -- orchestration --

    def ingest_step(self, step: TrajectoryStep) -> MemorySnippet:
        """Annotate and persist one step; idempotent per step_index."""
        expected = self.steps_processed
        if step.step_index < expected:
            return self.writer.snippets[step.step_index]
        if step.step_index > expected:
            raise OutOfOrderError(f"expected step_index {expected}, got {step.step_index}")

        started = time.monotonic()
        calls_before = self.gateway.total_calls

        scope = self.induce_scope(step)
        self.scope_state.record_step(step.step_index, step.role, scope)
        self.update_scope_summary(step)

        if self.event_vocab is not None:
            event_label, created = self.label_event(step, self.event_vocab)
            if created:
                self.writer.save_vocabulary(self.event_vocab)
        else:
            event_label = UNSEEDED_EVENT_LABEL

        if self.entity_vocab is not None:
            before = len(self.entity_vocab.entries)
            entity_types = self.extract_entity_types(step, self.entity_vocab)
            if len(self.entity_vocab.entries) != before:
                self.writer.save_vocabulary(self.entity_vocab)
        else:
            entity_types = frozenset()

        rewritten = self.resolve_references(step, scope, event_label)
        intent = ContextualIntent(scope, event_label, entity_types)
        snippet = self.build_snippet(step, rewritten, intent)
        self.writer.save_scope_state(self.scope_state)

        processed = self.steps_processed
        if self.event_vocab is None and processed == self.config.n_start:
            self._seed_and_relabel()
            snippet = self.writer.snippets[step.step_index]
        if processed % self.config.k_update == 0:
            self._consolidate_all(step.step_index)
            snippet = self.writer.snippets[step.step_index]

        logger.info(
            "ingested step=%d scope=%r event=%r entities=%d gateway_calls=%d ms=%.1f",
            step.step_index,
            scope,
            self.writer.snippets[-1].intent.event_type,
            len(entity_types),
            self.gateway.total_calls - calls_before,
            (time.monotonic() - started) * 1000.0,
        )
        return snippet

    def finalize(self) -> None:
        """Seed short trajectories, run the closing consolidation, persist state."""
        if self.event_vocab is None and self.steps_processed > 0:
            self._seed_and_relabel()
        if self.steps_processed > 0:
            last_step = self.writer.snippets[-1].step.step_index
            if self.steps_processed % self.config.k_update != 0:
                self._consolidate_all(last_step)
        if self.event_vocab is not None:
            self.writer.save_vocabulary(self.event_vocab)
        if self.entity_vocab is not None:
            self.writer.save_vocabulary(self.entity_vocab)
        self.writer.save_scope_state(self.scope_state)


def max_gateway_calls(n_steps: int, config: IngestionConfig | None = None) -> int:
    """Upper bound used by the single-pass property: O(n) plus consolidation rounds."""
    config = config or IngestionConfig()
    rounds = math.ceil(n_steps / config.k_update) + 1
    return 8 * n_steps + 2 * rounds + 2


def ingest_trajectory(
    store_dir,
    steps: list[TrajectoryStep],
    trajectory_id: str | None = None,
    gateway: Gateway | None = None,
    embedder=None,
    config: IngestionConfig | None = None,
) -> list[MemorySnippet]:
    """Ingest a full trajectory and finalize; returns the stored snippets."""
    with IngestSession(store_dir, trajectory_id, gateway, embedder, config) as session:
        out = [session.ingest_step(step) for step in steps]
        session.finalize()
        return out
