"""Query-side pipeline: filter derivation, label-density ranking with a
semantic tie-break, and token-budgeted context assembly.

Snippets are ordered by (density desc, similarity desc, step_index asc);
the step tiebreak makes the ranking total. Context rendering tail-truncates
to the last complete sentence that fits the token budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

from .embedding import HashEmbedder, cosine
from .gateway import Gateway, GatewayError, ModelTask, build_gateway
from .model import ContextualIntent, FilterConfig, normalize_label
from .store import StoreView
from .textutil import TokenCounter, count_tokens, ends_with_terminator, sentence_spans

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_BUDGET = 4096
DEFAULT_K_RETRIEVE = 40


@dataclass(frozen=True)
class RankedSnippet:
    snippet_ref: int
    density: int
    similarity: float
    rank: int

    def __post_init__(self) -> None:
        if self.density < 0:
            raise ValueError("density must be non-negative")
        if not -1.0 - 1e-9 <= self.similarity <= 1.0 + 1e-9:
            raise ValueError("similarity must lie in [-1, 1]")
        if self.rank < 1:
            raise ValueError("rank is 1-based")


@dataclass
class RetrievalConfig:
    k_retrieve: int = DEFAULT_K_RETRIEVE
    token_budget: int = DEFAULT_TOKEN_BUDGET
    density_mode: str = "per_entity"  # per_entity | capped
    render: str = "rewritten"  # rewritten | summary
    task_setting: str = "goal-oriented dialogue"
    disable_scope_filter: bool = False
    disable_event_filter: bool = False
    disable_entity_filter: bool = False

    def __post_init__(self) -> None:
        if self.k_retrieve < 1:
            raise ValueError("k_retrieve must be >= 1")
        if self.token_budget < 1:
            raise ValueError("token_budget must be >= 1")
        if self.density_mode not in ("per_entity", "capped"):
            raise ValueError("density_mode must be per_entity or capped")
        if self.render not in ("rewritten", "summary"):
            raise ValueError("render must be rewritten or summary")


@dataclass
class QueryResponse:
    query: str
    filter_config: FilterConfig
    ranked: list[RankedSnippet]
    context: str
    answer: str | None = None
    dropped_labels: list[str] = field(default_factory=list)

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": "query_response",
            "query": self.query,
            "filter_config": {
                "scopes": sorted(self.filter_config.scopes),
                "event_types": sorted(self.filter_config.event_types),
                "entity_types": sorted(self.filter_config.entity_types),
            },
            "ranked": [
                {
                    "snippet_ref": r.snippet_ref,
                    "density": r.density,
                    "similarity": round(r.similarity, 12),
                    "rank": r.rank,
                }
                for r in self.ranked
            ],
            "context": self.context,
            "answer": self.answer,
            "dropped_labels": list(self.dropped_labels),
        }


def _validate_members(proposed: list[str], inventory: list[str]) -> tuple[set[str], list[str]]:
    """Keep proposals that exist in the inventory (case-insensitive), canonical form."""
    canonical = {normalize_label(label): label for label in inventory}
    kept: set[str] = set()
    dropped: list[str] = []
    for label in proposed:
        match = canonical.get(normalize_label(label))
        if match is None:
            dropped.append(label)
        else:
            kept.add(match)
    return kept, dropped


def derive_filter_config(
    query: str,
    view: StoreView,
    gateway: Gateway | None = None,
    config: RetrievalConfig | None = None,
) -> tuple[FilterConfig, list[str]]:
    """Map a query onto the stored label inventories; invalid proposals are dropped."""
    gateway = gateway or build_gateway()
    config = config or RetrievalConfig()
    scopes = list(view.scope_state.scope_inventory)
    events = view.vocabularies["event"].labels
    entities = view.vocabularies["entity_type"].labels
    if not (scopes or events or entities):
        return FilterConfig.empty(), []
    try:
        result = gateway.run_task(
            ModelTask(
                "filter_derive",
                {"query": query, "scopes": scopes, "event_types": events, "entity_types": entities},
            )
        )
        payload = result.payload
    except GatewayError as exc:
        logger.warning("filter derivation failed (%s); falling back to semantic ranking", exc.code)
        return FilterConfig.empty(), []
    kept_scopes, dropped_s = _validate_members(payload["scopes"], scopes)
    kept_events, dropped_e = _validate_members(payload["event_types"], events)
    kept_entities, dropped_k = _validate_members(payload["entity_types"], entities)
    dropped = dropped_s + dropped_e + dropped_k
    if dropped:
        logger.info("dropped out-of-inventory filter labels: %s", dropped)
    if config.disable_scope_filter:
        kept_scopes = set()
    if config.disable_event_filter:
        kept_events = set()
    if config.disable_entity_filter:
        kept_entities = set()
    return FilterConfig(frozenset(kept_scopes), frozenset(kept_events), frozenset(kept_entities)), dropped


def label_density(intent: ContextualIntent, f: FilterConfig, mode: str = "per_entity") -> int:
    """Satisfied-constraint count: scope and event contribute 0/1, entities per match."""
    density = 0
    if intent.scope in f.scopes:
        density += 1
    if intent.event_type in f.event_types:
        density += 1
    matched_entities = len(intent.entity_types & f.entity_types)
    if mode == "capped":
        density += min(matched_entities, 1)
    else:
        density += matched_entities
    return density


def rank_snippets(
    f: FilterConfig,
    query: str,
    view: StoreView,
    k_retrieve: int = DEFAULT_K_RETRIEVE,
    embedder=None,
    density_mode: str = "per_entity",
) -> list[RankedSnippet]:
    """Exhaustive (density desc, similarity desc, step asc) sort, truncated to k."""
    if not view.snippets:
        return []
    embedder = embedder or HashEmbedder()
    query_vec = embedder.embed(query)
    scored = []
    for snippet in view.snippets:
        density = label_density(snippet.intent, f, density_mode)
        vec = view.embeddings.vector(snippet.summary_embedding_id)
        similarity = cosine(query_vec, vec)
        scored.append((snippet.step.step_index, density, similarity))
    scored.sort(key=lambda item: (-item[1], -item[2], item[0]))
    top = scored[: min(k_retrieve, len(scored))]
    return [
        RankedSnippet(step_index, density, similarity, rank)
        for rank, (step_index, density, similarity) in enumerate(top, start=1)
    ]


def render_snippet(view: StoreView, ref: int, render: str = "rewritten") -> str:
    snippet = view.snippet(ref)
    body = snippet.rewritten_text if render == "rewritten" else snippet.summary
    header = (
        f"[{snippet.step.step_index} | {snippet.step.role} | "
        f"{snippet.intent.scope} | {snippet.intent.event_type}]"
    )
    return f"{header} {body}"


def assemble_context(
    ranked: list[RankedSnippet],
    view: StoreView,
    token_budget: int,
    token_counter: TokenCounter = count_tokens,
    render: str = "rewritten",
) -> str:
    """Concatenate ranked snippets; on overflow, cut at the last full sentence that fits."""
    if token_budget < 1:
        raise ValueError("token_budget must be >= 1")
    if not ranked:
        return ""
    pieces: list[str] = []
    for ranked_snippet in ranked:
        text = render_snippet(view, ranked_snippet.snippet_ref, render)
        spans = sentence_spans(text)
        for i, (a, b) in enumerate(spans):
            prefix = "\n" if i == 0 and pieces else ""
            pieces.append(prefix + text[a:b])
    full = "".join(pieces)
    if token_counter(full) <= token_budget:
        return full
    assembled = ""
    best = ""
    for piece in pieces:
        assembled += piece
        if token_counter(assembled) > token_budget:
            break
        if ends_with_terminator(assembled):
            best = assembled
    return best.rstrip() if best else ""


def answer_query(
    query: str,
    view: StoreView,
    budget: int = DEFAULT_TOKEN_BUDGET,
    gateway: Gateway | None = None,
    config: RetrievalConfig | None = None,
    embedder=None,
    context_only: bool = False,
    token_counter: TokenCounter = count_tokens,
) -> QueryResponse:
    """End-to-end query: filter -> rank -> context, plus optional answer generation."""
    gateway = gateway or build_gateway()
    config = config or RetrievalConfig()
    f, dropped = derive_filter_config(query, view, gateway, config)
    ranked = rank_snippets(f, query, view, config.k_retrieve, embedder, config.density_mode)
    context = assemble_context(ranked, view, budget, token_counter, config.render)
    answer: str | None = None
    if not context_only:
        if not view.snippets:
            answer = "Question not answerable"
        else:
            try:
                result = gateway.run_task(
                    ModelTask(
                        "answer",
                        {
                            "question": query,
                            "task_setting": config.task_setting,
                            "retrieved_turns": context,
                        },
                    )
                )
                answer = str(result.payload)
            except GatewayError as exc:
                logger.warning("answer generation failed (%s); returning context only", exc.code)
                answer = None
    return QueryResponse(query, f, ranked, context, answer, dropped)
