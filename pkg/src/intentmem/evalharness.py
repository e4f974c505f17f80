"""Measurement machinery: answer-set macro P/R/F1, entity-resolution recall,
label-overlap diagnostics, and the end-to-end evaluation runner.

All acceptance-grade runs use the exact normalized matcher; a model-judged
matcher can be plugged in as a callable.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .builder import IngestionConfig, ingest_trajectory
from .gateway import Gateway, build_gateway
from .model import EvaluationQuestion, FilterConfig, MemorySnippet
from .retrieval import RetrievalConfig, answer_query, label_density
from .store import load_view
from .textutil import count_tokens

logger = logging.getLogger(__name__)

Matcher = Callable[[set[str], set[str]], set[str]]


class EmptyGoldError(ValueError):
    code = "empty_gold"


class AlignmentGapError(ValueError):
    code = "alignment_gap"


def normalize_answer(text: str) -> str:
    """Lowercase, trim, collapse whitespace, strip terminal punctuation."""
    out = re.sub(r"\s+", " ", text.strip()).lower()
    return out.rstrip(".!?,;:")


@dataclass(frozen=True)
class ScoreRecord:
    question_id: str
    precision: float
    recall: float
    f1: float
    matched: frozenset[str]
    missed: frozenset[str]
    spurious: frozenset[str]


def score_answer_set(
    predicted: set[str],
    gold: set[str],
    matcher: str | Matcher = "exact",
    question_id: str = "",
) -> ScoreRecord:
    """Set-overlap P/R/F1 with partial credit; empty predictions score zero."""
    if not gold:
        raise EmptyGoldError("gold answer set must be non-empty")
    if callable(matcher):
        matched_gold = set(matcher(set(predicted), set(gold)))
        matched_pred = matched_gold
    elif matcher == "exact":
        gold_by_norm = {normalize_answer(g): g for g in gold}
        matched_gold = set()
        matched_pred = set()
        for p in predicted:
            hit = gold_by_norm.get(normalize_answer(p))
            if hit is not None:
                matched_gold.add(hit)
                matched_pred.add(p)
    else:
        raise ValueError("matcher must be 'exact' or a callable")
    precision = len(matched_gold) / len(predicted) if predicted else 0.0
    recall = len(matched_gold) / len(gold)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ScoreRecord(
        question_id=question_id,
        precision=precision,
        recall=recall,
        f1=f1,
        matched=frozenset(matched_gold),
        missed=frozenset(gold - matched_gold),
        spurious=frozenset(p for p in predicted if p not in matched_pred),
    )


def macro_average(records: list[ScoreRecord]) -> tuple[float, float, float]:
    if not records:
        raise ValueError("macro_average requires at least one record")
    n = len(records)
    return (
        sum(r.precision for r in records) / n,
        sum(r.recall for r in records) / n,
        sum(r.f1 for r in records) / n,
    )


# ---------------------------------------------------------------------------
# Entity Resolution Recall
# ---------------------------------------------------------------------------


def audit_err(
    alignment: list[tuple[int, int, str]],
    snippets: list[MemorySnippet],
    name_map: dict[str, str] | None = None,
) -> float:
    """Fraction of referential mentions whose canonical entity name surfaces in
    the aligned snippet's rewritten text or summary.

    ``alignment`` rows are (op_index, step_index, entity_key); keys are mapped
    through ``name_map`` first when given (debate evidence ids).
    """
    if not alignment:
        raise ValueError("alignment must be non-empty")
    resolved = 0
    for op_index, step_index, key in alignment:
        if not 0 <= step_index < len(snippets):
            raise AlignmentGapError(f"op {op_index} aligned to missing step {step_index}")
        name = name_map.get(key, key) if name_map else key
        needle = re.sub(r"\s+", " ", name.strip()).lower()
        snippet = snippets[step_index]
        haystacks = (snippet.rewritten_text, snippet.summary)
        if any(needle in re.sub(r"\s+", " ", h).lower() for h in haystacks):
            resolved += 1
    return resolved / len(alignment)


def explicit_mention_fraction(
    alignment: list[tuple[int, int, str]],
    step_texts: list[str],
    name_map: dict[str, str] | None = None,
) -> float:
    """Independent script-style count: mentions whose raw step text already
    names the entity explicitly."""
    if not alignment:
        raise ValueError("alignment must be non-empty")
    hits = 0
    for _, step_index, key in alignment:
        name = name_map.get(key, key) if name_map else key
        needle = re.sub(r"\s+", " ", name.strip()).lower()
        if needle in re.sub(r"\s+", " ", step_texts[step_index]).lower():
            hits += 1
    return hits / len(alignment)


# ---------------------------------------------------------------------------
# Label-overlap diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OverlapReport:
    q_gt_at_max: float
    q_gt_full: float
    q_zero: float
    gt_dom: float
    gt_cov: float
    gt_best_cov: float

    def __post_init__(self) -> None:
        for name in ("q_gt_at_max", "q_gt_full", "q_zero", "gt_dom", "gt_cov", "gt_best_cov"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0 + 1e-12:
                raise ValueError(f"{name} out of [0, 1]: {value}")
        if self.q_gt_full > self.q_gt_at_max + 1e-12:
            raise ValueError("q_gt_full must not exceed q_gt_at_max")
        if self.gt_cov > self.gt_best_cov + 1e-12:
            raise ValueError("gt_cov must not exceed gt_best_cov")

    def to_dict(self) -> dict[str, float]:
        return {
            "q_gt_at_max": self.q_gt_at_max,
            "q_gt_full": self.q_gt_full,
            "q_zero": self.q_zero,
            "gt_dom": self.gt_dom,
            "gt_cov": self.gt_cov,
            "gt_best_cov": self.gt_best_cov,
        }


def _covered_labels(f: FilterConfig, snippet: MemorySnippet) -> set[str]:
    covered = set()
    intent = snippet.intent
    if intent.scope in f.scopes:
        covered.add(f"scope:{intent.scope}")
    if intent.event_type in f.event_types:
        covered.add(f"event:{intent.event_type}")
    for label in intent.entity_types & f.entity_types:
        covered.add(f"entity:{label}")
    return covered


def overlap_diagnostics(
    per_question: list[tuple[FilterConfig, set[int]]],
    snippets: list[MemorySnippet],
    density_mode: str = "per_entity",
) -> OverlapReport:
    """Question-side label selection diagnostics over one instance.

    ``per_question`` pairs each question's derived filter configuration with
    its gold turn (step) ids. Candidate turns are all ingested snippets.
    """
    if not per_question:
        raise ValueError("at least one question is required")
    at_max = full = zero = 0.0
    dom_parts: list[float] = []
    cov_parts: list[float] = []
    best_cov_parts: list[float] = []
    for f, gold_ids in per_question:
        if not gold_ids:
            raise EmptyGoldError("every question needs at least one gold turn id")
        overlaps = [label_density(s.intent, f, density_mode) for s in snippets]
        max_overlap = max(overlaps, default=0)
        selected = f.size
        gold = sorted(i for i in gold_ids if 0 <= i < len(snippets))
        gold_overlaps = [overlaps[i] for i in gold]
        if max_overlap == 0:
            zero += 1.0
            dom_parts.append(0.0)
        else:
            if any(o == max_overlap for o in gold_overlaps):
                at_max += 1.0
            dom_parts.append(
                sum(1 for o in gold_overlaps if o == max_overlap) / len(gold) if gold else 0.0
            )
        if selected > 0 and any(o == selected for o in gold_overlaps):
            full += 1.0
        if selected == 0 or not gold:
            cov_parts.append(0.0)
            best_cov_parts.append(0.0)
        else:
            # Turn-level statistics: coverage is per gold turn, averaged (GT_COV)
            # or maximized (GT_BEST_COV) within the question.
            coverages = [len(_covered_labels(f, snippets[i])) / selected for i in gold]
            cov_parts.append(sum(coverages) / len(coverages))
            best_cov_parts.append(max(coverages))
    n = len(per_question)
    return OverlapReport(
        q_gt_at_max=at_max / n,
        q_gt_full=full / n,
        q_zero=zero / n,
        gt_dom=sum(dom_parts) / n,
        gt_cov=sum(cov_parts) / n,
        gt_best_cov=sum(best_cov_parts) / n,
    )


def macro_overlap(reports: list[OverlapReport]) -> OverlapReport:
    """Macro-average per-instance reports across instances."""
    if not reports:
        raise ValueError("no reports to average")
    n = len(reports)
    return OverlapReport(
        q_gt_at_max=sum(r.q_gt_at_max for r in reports) / n,
        q_gt_full=sum(r.q_gt_full for r in reports) / n,
        q_zero=sum(r.q_zero for r in reports) / n,
        gt_dom=sum(r.gt_dom for r in reports) / n,
        gt_cov=sum(r.gt_cov for r in reports) / n,
        gt_best_cov=sum(r.gt_best_cov for r in reports) / n,
    )


# ---------------------------------------------------------------------------
# End-to-end evaluation
# ---------------------------------------------------------------------------


@dataclass
class EvalConfig:
    rewrite: str = "pipeline"  # pipeline | oracle | disabled
    context_only: bool = False
    ablation: str = "none"  # none | no-scope | no-event | no-entity
    ingestion: IngestionConfig = field(default_factory=IngestionConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    budget: int = 4096
    force_reingest: bool = False

    def tagged_retrieval(self) -> RetrievalConfig:
        cfg = RetrievalConfig(**vars(self.retrieval))
        cfg.disable_scope_filter = self.ablation == "no-scope" or cfg.disable_scope_filter
        cfg.disable_event_filter = self.ablation == "no-event" or cfg.disable_event_filter
        cfg.disable_entity_filter = self.ablation == "no-entity" or cfg.disable_entity_filter
        return cfg


def build_err_alignment(instance) -> tuple[list[tuple[int, int, str]], dict[str, str] | None]:
    """Alignment rows for the ERR audit, plus the debate id -> name registry."""
    ops = {op.op_index: op for op in instance.storyboard.ops}
    if instance.config.domain == "debate":
        name_map = instance.world.evidence_name_map()
        reverse = {name: eid for eid, name in name_map.items()}
        rows = [
            (r.op_index, r.step_index, reverse.get(r.entity, r.entity)) for r in instance.resolution
        ]
        return rows, name_map
    rows = [(r.op_index, r.step_index, r.entity) for r in instance.resolution]
    del ops
    return rows, None


def _ingest_for_eval(instance, store_dir, gateway: Gateway, config: EvalConfig) -> None:
    steps = instance.steps
    ingestion = config.ingestion
    if config.rewrite == "oracle":
        steps = instance.oracle_resolved_steps()
        ingestion = _with_rewrite_mode(ingestion, "off")
    elif config.rewrite == "disabled":
        ingestion = _with_rewrite_mode(ingestion, "off")
    ingest_trajectory(store_dir, steps, gateway=gateway, config=ingestion)


def _with_rewrite_mode(config: IngestionConfig, mode: str) -> IngestionConfig:
    data = dict(vars(config))
    data["rewrite_mode"] = mode
    return IngestionConfig(**data)


def run_eval(
    instance,
    store_dir,
    gateway: Gateway | None = None,
    config: EvalConfig | None = None,
) -> dict[str, Any]:
    """Ingest (if needed), answer every question, score, audit, and report.

    The report is deterministic under the deterministic provider except for
    the isolated ``timings`` section.
    """
    config = config or EvalConfig()
    gateway = gateway or build_gateway()
    started = time.monotonic()
    calls_at_start = gateway.total_calls
    store_path = Path(store_dir)

    manifest = store_path / "manifest.json"
    if config.force_reingest or not manifest.exists():
        _ingest_for_eval(instance, store_path, gateway, config)
    view = load_view(store_path)

    retrieval_cfg = config.tagged_retrieval()
    per_question_records: list[dict[str, Any]] = []
    scores: list[ScoreRecord] = []
    diag_inputs: list[tuple[FilterConfig, set[int]]] = []
    hits = 0
    context_tokens = []

    for question in instance.questions:
        response = answer_query(
            question.text,
            view,
            budget=config.budget,
            gateway=gateway,
            config=retrieval_cfg,
            context_only=config.context_only,
        )
        gold_ids = instance.gold_step_ids(question)
        ranked_ids = [r.snippet_ref for r in response.ranked]
        hit = bool(gold_ids & set(ranked_ids))
        hits += hit
        predicted: set[str] = set()
        if response.answer and response.answer != "Question not answerable":
            predicted = {part.strip() for part in response.answer.split(";") if part.strip()}
        record = score_answer_set(predicted, set(question.gold_answers), "exact", question.question_id)
        scores.append(record)
        diag_inputs.append((response.filter_config, gold_ids))
        context_tokens.append(count_tokens(response.context))
        per_question_records.append(
            {
                "kind": "question_result",
                "question_id": question.question_id,
                "qtype": question.qtype,
                "predicted": sorted(predicted),
                "gold": sorted(question.gold_answers),
                "precision": record.precision,
                "recall": record.recall,
                "f1": record.f1,
                "gold_turn_hit": hit,
                "gold_turn_ids": sorted(gold_ids),
                "ranked_ids": ranked_ids,
                "filter_config": {
                    "scopes": sorted(response.filter_config.scopes),
                    "event_types": sorted(response.filter_config.event_types),
                    "entity_types": sorted(response.filter_config.entity_types),
                },
            }
        )

    report: dict[str, Any] = {
        "kind": "eval_report",
        "bench": instance.config.meta(),
        "config": {
            "rewrite": config.rewrite,
            "ablation": config.ablation,
            "context_only": config.context_only,
            "budget": config.budget,
            "k_retrieve": retrieval_cfg.k_retrieve,
            "density_mode": retrieval_cfg.density_mode,
        },
        "per_question": per_question_records,
    }
    if not instance.questions:
        logger.warning("question file is empty; aggregate section omitted")
        report["warning"] = "no questions; aggregate omitted"
    else:
        precision, recall, f1 = macro_average(scores)
        alignment, name_map = build_err_alignment(instance)
        err = audit_err(alignment, view.snippets, name_map)
        overlap = overlap_diagnostics(diag_inputs, view.snippets, retrieval_cfg.density_mode)
        report["aggregate"] = {
            "macro_precision": precision,
            "macro_recall": recall,
            "macro_f1": f1,
            "err": err,
            "gold_turn_hit_rate": hits / len(instance.questions),
            "overlap": overlap.to_dict(),
            "accounting": {
                "questions": len(instance.questions),
                "snippets": view.snippet_count,
                "gateway_calls": gateway.total_calls - calls_at_start,
                "mean_context_tokens": sum(context_tokens) / len(context_tokens),
            },
        }
    report["timings"] = {"wall_seconds": time.monotonic() - started}
    return report


def strip_timings(report: dict[str, Any]) -> dict[str, Any]:
    """Copy of the report without timing fields (for determinism comparison)."""
    out = dict(report)
    out.pop("timings", None)
    return out
