"""Deterministic question derivation from symbolic storyboards.

Gold answers come from pure traversal of the operations (and, for multi-hop
questions, the mention resolution records); no model is in the loop.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..model import EvaluationQuestion
from .storyboard import InsufficientMaterialError, Storyboard
from .surface import MentionRecord

_CATEGORY_WORDS = {"accommodation": "hotel", "restaurant": "restaurant", "attraction": "attraction"}


@dataclass
class QuestionConfig:
    """Per-type caps; None keeps everything derivable. An explicit cap that
    exceeds the derivable material raises insufficient_material."""

    state_tracking: int | None = None
    contextual_recall: int | None = None
    multi_hop: int | None = None
    synthesis: int | None = None

    def cap_for(self, qtype: str) -> int | None:
        return getattr(self, qtype)


def _slot_phrase(payload: dict) -> str:
    return f"Day {payload['day']}'s {payload['slot']}"


def _decisions_by_goal(storyboard: Storyboard) -> dict[str, list]:
    decisions: dict[str, list] = {}
    for op in storyboard.ops:
        if op.action_kind == "make_decision":
            decisions.setdefault(op.latent_goal, []).append(op)
    return decisions


def decision_history(storyboard: Storyboard, goal: str) -> tuple[set[str], str | None]:
    """(every entity decided at any point, final entity) for one slot goal."""
    all_decided: set[str] = set()
    final = None
    for op in storyboard.ops:
        if op.action_kind == "make_decision" and op.latent_goal == goal:
            all_decided.add(op.payload["entity"])
            final = op.payload["entity"]
    return all_decided, final


def _travel_questions(storyboard: Storyboard, resolution: list[MentionRecord]) -> dict[str, list[EvaluationQuestion]]:
    out: dict[str, list[EvaluationQuestion]] = {k: [] for k in ("state_tracking", "contextual_recall", "multi_hop", "synthesis")}
    counter = {"n": 0}

    def qid() -> str:
        counter["n"] += 1
        return f"tr-{storyboard.seed}-q{counter['n']:03d}"

    decisions = _decisions_by_goal(storyboard)
    for goal, ops in sorted(decisions.items(), key=lambda item: item[1][0].op_index):
        payload = ops[0].payload
        word = _CATEGORY_WORDS[payload["category"]]
        slot = _slot_phrase(payload)
        final = ops[-1].payload["entity"]
        supporting = frozenset(op.op_index for op in ops)
        out["state_tracking"].append(
            EvaluationQuestion(
                qid(),
                "state_tracking",
                f"What is the final {word} chosen for {slot}? Provide the name.",
                frozenset({final}),
                supporting,
            )
        )
        if len(ops) >= 2:
            everything = frozenset(op.payload["entity"] for op in ops)
            out["state_tracking"].append(
                EvaluationQuestion(
                    qid(),
                    "state_tracking",
                    f"List all {word}s that were decided at any point for {slot}, "
                    "including intermediate and final decisions.",
                    everything,
                    supporting,
                )
            )

    answered: set[tuple[str, str, str]] = set()
    for op in storyboard.ops:
        if op.action_kind != "inquire_details" or "value" not in op.payload:
            continue
        key = (op.latent_goal, op.payload["entity"], op.payload["attribute"])
        if key in answered:
            continue
        answered.add(key)
        ask_op = next(
            o
            for o in storyboard.ops
            if o.action_kind == "inquire_details"
            and o.role != op.role
            and o.payload["entity"] == op.payload["entity"]
            and o.payload["attribute"] == op.payload["attribute"]
            and o.latent_goal == op.latent_goal
        )
        slot = _slot_phrase(op.payload)
        out["contextual_recall"].append(
            EvaluationQuestion(
                qid(),
                "contextual_recall",
                f"What is the {op.payload['attribute']} of the {op.payload['entity']} "
                f"discussed for {slot}?",
                frozenset({op.payload["value"]}),
                frozenset({op.op_index, ask_op.op_index}),
            )
        )

    ops_by_index = {op.op_index: op for op in storyboard.ops}
    for record in resolution:
        if not record.remodeled:
            continue
        op = ops_by_index[record.op_index]
        if "day" not in op.payload:
            continue
        word = _CATEGORY_WORDS[op.payload["category"]]
        first_op = next(
            o
            for o in storyboard.ops
            if o.payload.get("entity") == record.entity or record.entity in o.payload.get("entities", [])
        )
        out["multi_hop"].append(
            EvaluationQuestion(
                qid(),
                "multi_hop",
                f"In the {_slot_phrase(op.payload)} discussion, which {word} was referred to "
                f"as \"{record.expression}\"? Provide the name.",
                frozenset({record.entity}),
                frozenset({record.op_index, first_op.op_index}),
            )
        )

    days = sorted({op.payload["day"] for op in storyboard.ops if "day" in op.payload})
    for day in days:
        goals = {g for g in decisions if g.startswith(f"day {day} ")}
        finals: dict[str, str] = {}
        supporting: set[int] = set()
        for goal in goals:
            ops = decisions[goal]
            finals[goal.split(" ", 2)[2]] = ops[-1].payload["entity"]
            supporting.add(ops[-1].op_index)
        if not finals:
            continue
        meals = {slot: finals.get(slot, "") for slot in ("breakfast", "lunch", "dinner")}
        out["synthesis"].append(
            EvaluationQuestion(
                qid(),
                "synthesis",
                f"What is the final travel plan for Day {day}? Answer in the following format: "
                f"Stay at [accommodation]; Breakfast at [restaurant]; Lunch at [restaurant]; "
                f"Dinner at [restaurant]; Visit [attraction(s)]",
                frozenset(finals.values()),
                frozenset(supporting),
            )
        )
        del meals
    return out


def _debate_questions(storyboard: Storyboard, resolution: list[MentionRecord]) -> dict[str, list[EvaluationQuestion]]:
    out: dict[str, list[EvaluationQuestion]] = {k: [] for k in ("state_tracking", "contextual_recall", "multi_hop", "synthesis")}
    counter = {"n": 0}

    def qid() -> str:
        counter["n"] += 1
        return f"db-{storyboard.seed}-q{counter['n']:03d}"

    concedes = [op for op in storyboard.ops if op.action_kind == "concede"]
    if concedes:
        out["state_tracking"].append(
            EvaluationQuestion(
                qid(),
                "state_tracking",
                "List the contentions that were conceded at any point during the debate. "
                "Provide the contention titles.",
                frozenset(op.payload["thread"] for op in concedes),
                frozenset(op.op_index for op in concedes),
            )
        )

    for side, side_phrase in (("pro_debater", "pro side"), ("con_debater", "con side")):
        cited = [
            op
            for op in storyboard.ops
            if op.payload.get("side") == side and "entity" in op.payload
        ]
        if not cited:
            continue
        out["contextual_recall"].append(
            EvaluationQuestion(
                qid(),
                "contextual_recall",
                f"List the evidence used by the {side_phrase} during the debate. "
                "Provide the evidence names separated by semicolons.",
                frozenset(op.payload["entity"] for op in cited),
                frozenset(op.op_index for op in cited),
            )
        )

    ops_by_index = {op.op_index: op for op in storyboard.ops}
    for record in resolution:
        if not record.remodeled:
            continue
        first_op = next(
            o for o in storyboard.ops if o.payload.get("entity") == record.entity
        )
        out["multi_hop"].append(
            EvaluationQuestion(
                qid(),
                "multi_hop",
                f"Which evidence source was referred to as \"{record.expression}\" during "
                "the debate? Provide the evidence name.",
                frozenset({record.entity}),
                frozenset({record.op_index, first_op.op_index}),
            )
        )

    threads = sorted(
        {op.payload["thread"] for op in storyboard.ops if "thread" in op.payload},
        key=lambda t: next(o.op_index for o in storyboard.ops if o.payload.get("thread") == t),
    )
    for thread in threads:
        cited = [
            op
            for op in storyboard.ops
            if op.payload.get("thread") == thread and "entity" in op.payload
        ]
        if not cited:
            continue
        out["synthesis"].append(
            EvaluationQuestion(
                qid(),
                "synthesis",
                f"List all evidence names cited within {thread} by either side.",
                frozenset(op.payload["entity"] for op in cited),
                frozenset(op.op_index for op in cited),
            )
        )
    return out


def derive_questions(
    storyboard: Storyboard,
    resolution: list[MentionRecord],
    question_config: QuestionConfig | None = None,
    seed: int = 0,
) -> list[EvaluationQuestion]:
    """Derive the four question types; caps are applied per type with seeded sampling."""
    config = question_config or QuestionConfig()
    if storyboard.domain == "travel":
        grouped = _travel_questions(storyboard, resolution)
    else:
        grouped = _debate_questions(storyboard, resolution)
    rng = random.Random(f"questions-{storyboard.seed}-{seed}")
    out: list[EvaluationQuestion] = []
    for qtype in ("state_tracking", "contextual_recall", "multi_hop", "synthesis"):
        questions = grouped[qtype]
        cap = config.cap_for(qtype)
        if cap is None:
            out.extend(questions)
            continue
        if cap > len(questions):
            raise InsufficientMaterialError(
                f"requested {cap} {qtype} questions, only {len(questions)} derivable"
            )
        out.extend(sorted(rng.sample(questions, cap), key=lambda q: q.question_id))
    return out
