"""Surface realization and pragmatic refinement.

Realization renders each symbolic operation as one utterance (template mode is
fully deterministic; model mode goes through the gateway with an entailment
check and falls back to the template). Refinement then remodels repeat entity
mentions into referring expressions and segments long utterances into smaller
steps, tracking every mention's final step so ground truth stays aligned.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

from ..gateway import Gateway, GatewayError, ModelTask
from ..model import SymbolicOperation, TrajectoryStep
from ..textutil import sentence_spans
from .storyboard import Storyboard
from .world import ClosedWorld

_CATEGORY_WORDS = {"accommodation": "hotel", "restaurant": "restaurant", "attraction": "attraction"}

_PROPOSE_FLAVORS = [
    "It could set a pleasant tone for the day.",
    "I have heard steady praise for the atmosphere there.",
    "The location sounds convenient for getting around.",
    "It seems like a comfortable fit for our pace.",
]

_ANSWER_PADDING = [
    "Guests generally describe the experience as dependable.",
    "Most visitors consider that figure in line with the area.",
    "Reviews suggest the value holds up through the season.",
    "Staff there are known for steady, unhurried service.",
]

_EVIDENCE_VERBS = ["shows", "indicates", "documents", "reports"]


@dataclass(frozen=True)
class Mention:
    """One entity occurrence inside a realized step, by character span."""

    entity: str
    start: int
    end: int
    article: bool  # span begins with "the " and may be swapped for a pronoun


@dataclass
class SurfaceStep:
    op_index: int
    role: str
    text: str
    mentions: list[Mention] = field(default_factory=list)
    fallback: bool = False


@dataclass(frozen=True)
class MentionRecord:
    """Resolution/alignment ground truth for one mention, post-refinement.

    ``char_start`` is pipeline-internal (the expression's offset within its
    step at the time the record was made) and is not serialized.
    """

    op_index: int
    step_index: int
    entity: str
    expression: str
    remodeled: bool
    char_start: int = -1

    def to_record(self) -> dict:
        return {
            "kind": "resolution_mention",
            "op_index": self.op_index,
            "step_index": self.step_index,
            "entity": self.entity,
            "expression": self.expression,
            "remodeled": self.remodeled,
        }

    @classmethod
    def from_record(cls, record: dict) -> MentionRecord:
        return cls(
            record["op_index"],
            record["step_index"],
            record["entity"],
            record["expression"],
            record["remodeled"],
        )


class _TextBuilder:
    """Accumulates text while recording entity mention spans."""

    def __init__(self) -> None:
        self.parts: list[str] = []
        self.length = 0
        self.mentions: list[Mention] = []

    def add(self, text: str) -> None:
        self.parts.append(text)
        self.length += len(text)

    def add_entity(self, name: str, article: bool = True) -> None:
        # Span covers "the <name>" when an article is used, so a referring
        # expression can replace the whole nominal.
        span_start = self.length
        if article:
            self.add("the ")
        self.add(name)
        self.mentions.append(Mention(name, span_start, self.length, article))

    def build(self, op_index: int, role: str) -> SurfaceStep:
        return SurfaceStep(op_index, role, "".join(self.parts), self.mentions)


def _variant(op: SymbolicOperation, bank: list[str]) -> str:
    return bank[op.op_index % len(bank)]


def _travel_template(op: SymbolicOperation) -> SurfaceStep:
    b = _TextBuilder()
    payload = op.payload
    kind = op.action_kind
    goal = f"day {payload.get('day')} {payload.get('slot')}" if "day" in payload else op.latent_goal
    if kind == "indicate_date":
        b.add(
            f"I'm planning the trip dates as {payload['date_start']} to {payload['date_end']}. "
            "Let's keep those trip dates in mind while we organize everything."
        )
    elif kind == "propose_option":
        b.add("One idea is ")
        b.add_entity(payload["entity"])
        b.add(f" for {goal}. ")
        b.add(_variant(op, _PROPOSE_FLAVORS))
    elif kind == "inquire_details" and op.role == "user":
        b.add(f"Could you tell me about the {payload['attribute']} of ")
        b.add_entity(payload["entity"])
        b.add(f" for {goal}? I want to make sure it fits before we settle anything.")
    elif kind == "inquire_details":
        b.add(f"The {payload['attribute']} for ")
        b.add_entity(payload["entity"])
        b.add(f" comes to {payload['value']} for {goal}. ")
        b.add(_variant(op, _ANSWER_PADDING))
        b.add(" ")
        b.add(_variant(op, _ANSWER_PADDING[::-1]))
    elif kind == "compare_options" and op.role == "user":
        first, second = payload["entities"]
        b.add("Can we compare ")
        b.add_entity(first)
        b.add(" and ")
        b.add_entity(second)
        b.add(f" on {payload['attribute']} for {goal}? I want to see which suits us better.")
    elif kind == "compare_options":
        first, second = payload["entities"]
        va, vb = payload["values"]
        b.add("Comparing the two for ")
        b.add(f"{goal}: ")
        b.add_entity(first)
        b.add(f" comes in at {va} on {payload['attribute']}, while ")
        b.add_entity(second)
        b.add(f" stands at {vb}. ")
        b.add(_variant(op, _ANSWER_PADDING))
    elif kind == "make_decision":
        if payload.get("decision_rank", 1) > 1:
            b.add(f"Actually, let's change {goal} to ")
            b.add_entity(payload["entity"])
            b.add(" instead. Please update the plan accordingly.")
        else:
            b.add("Let's go with ")
            b.add_entity(payload["entity"])
            b.add(f" for {goal}. Please lock that choice in.")
    else:
        raise ValueError(f"no travel template for {kind}/{op.role}")
    return b.build(op.op_index, op.role)


def _debate_template(op: SymbolicOperation) -> SurfaceStep:
    b = _TextBuilder()
    payload = op.payload
    kind = op.action_kind
    verb = _variant(op, _EVIDENCE_VERBS)
    if kind == "propose_argument":
        b.add(f"Our contention on {payload['thread']}: {payload['claim']}. As ")
        b.add_entity(payload["entity"], article=False)
        b.add(f" {verb}, the record supports this position.")
    elif kind == "attack":
        b.add(f"I disagree with {payload['thread']} as argued. ")
        b.add_entity(payload["entity"], article=False)
        b.add(f" {verb} the opposite pattern, and the claim overstates its case.")
    elif kind == "defend":
        b.add(f"On {payload['thread']}, the contention still stands. As ")
        b.add_entity(payload["entity"], article=False)
        b.add(f" {verb}, the core mechanism holds once you account for timing.")
    elif kind == "concede":
        b.add(f"Point taken on {payload['thread']}. We concede that contention for this debate.")
    elif kind == "supply_background":
        b.add("For background on the topic, ")
        b.add_entity(payload["entity"], article=False)
        b.add(" provides context drawn from neutral sources.")
    elif kind == "summarize":
        threads = "; ".join(payload["threads"])
        b.add(f"To summarize our case across the debate: we addressed {threads}. ")
        b.add("The weight of the record favors our side on the points that remain standing.")
    else:
        raise ValueError(f"no debate template for {kind}")
    return b.build(op.op_index, op.role)


def template_surface(op: SymbolicOperation, world: ClosedWorld) -> SurfaceStep:
    if world.domain == "travel":
        return _travel_template(op)
    return _debate_template(op)


def realize_surface(
    op: SymbolicOperation,
    world: ClosedWorld,
    mode: str = "template",
    gateway: Gateway | None = None,
) -> SurfaceStep:
    """Render one operation. Model mode must pass an entailment check against
    the payload's entity names or it falls back to the template."""
    step = template_surface(op, world)
    if mode == "template":
        return step
    if mode != "model":
        raise ValueError("mode must be 'template' or 'model'")
    if gateway is None:
        raise ValueError("model mode requires a gateway")
    required = [m.entity for m in step.mentions]
    try:
        rendered = gateway.run_task(
            ModelTask(
                "surface_render",
                {
                    "role": op.role,
                    "latent_goal": op.latent_goal,
                    "payload": op.payload,
                    "template_text": step.text,
                },
            )
        ).payload
        verdict = gateway.run_task(
            ModelTask(
                "entailment_check",
                {"action_text": str(rendered), "required_terms": required},
            )
        ).payload
    except GatewayError:
        return replace(step, fallback=True)
    if str(verdict).strip().lower() != "yes":
        return replace(step, fallback=True)
    text = str(rendered)
    mentions = []
    for name in required:
        pos = text.find(name)
        if pos < 0:
            return replace(step, fallback=True)
        mentions.append(Mention(name, pos, pos + len(name), article=False))
    return SurfaceStep(op.op_index, op.role, text, mentions, fallback=False)


def realize_trajectory(
    storyboard: Storyboard,
    world: ClosedWorld,
    mode: str = "template",
    gateway: Gateway | None = None,
) -> list[SurfaceStep]:
    """Realize every op, prefixing a scope opener whenever the scope goal shifts."""
    steps = []
    prev_scope = None
    opener = "Let's focus on {goal}. " if world.domain == "travel" else "Moving on to {goal}. "
    for op in storyboard.ops:
        step = realize_surface(op, world, mode, gateway)
        scope_goal = op.payload.get("scope_goal", op.latent_goal)
        if scope_goal != prev_scope:
            prefix = opener.format(goal=scope_goal)
            step = SurfaceStep(
                step.op_index,
                step.role,
                prefix + step.text,
                [Mention(m.entity, m.start + len(prefix), m.end + len(prefix), m.article) for m in step.mentions],
                step.fallback,
            )
            prev_scope = scope_goal
        steps.append(step)
    return steps


# ---------------------------------------------------------------------------
# Referential remodeling
# ---------------------------------------------------------------------------


def _ordinal(n: int) -> str:
    if 10 <= n % 100 <= 20:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def _category_word(domain: str, op: SymbolicOperation) -> str:
    if domain == "debate":
        return "source"
    return _CATEGORY_WORDS.get(op.payload.get("category", ""), "option")


def remodel_references(
    steps: list[SurfaceStep],
    storyboard: Storyboard,
    remodel_rate: float,
    seed: int,
) -> tuple[list[SurfaceStep], list[MentionRecord]]:
    """Replace a seeded fraction of repeat mentions with referring expressions.

    First mentions are never touched. Returns the rewritten steps plus one
    record per mention (remodeled or not); ``step_index`` is provisional (the
    pre-segmentation op position) and re-keyed by :func:`segment_turns`.
    """
    if not 0.0 <= remodel_rate <= 1.0:
        raise ValueError("remodel_rate must lie in [0, 1]")
    rng = random.Random(f"remodel-{storyboard.seed}-{seed}")
    ops = {op.op_index: op for op in storyboard.ops}
    seen: set[str] = set()
    scope_category_order: dict[tuple[str, str], list[str]] = {}
    last_entity: str | None = None
    out_steps: list[SurfaceStep] = []
    records: list[MentionRecord] = []

    for position, step in enumerate(steps):
        op = ops[step.op_index]
        domain = storyboard.domain
        scope_goal = op.payload.get("scope_goal", op.latent_goal)
        text = step.text
        offset = 0
        for mention in sorted(step.mentions, key=lambda m: m.start):
            category = _category_word(domain, op)
            order_key = (scope_goal, category)
            order = scope_category_order.setdefault(order_key, [])
            is_first = mention.entity not in seen
            expression = mention.entity
            remodeled = False
            start = mention.start + offset
            end = mention.end + offset
            if not is_first and rng.random() < remodel_rate:
                options = []
                if mention.entity in order:
                    rank = order.index(mention.entity) + 1
                    verb = "cited" if domain == "debate" else "raised"
                    options.append(f"the {_ordinal(rank)} {category} I {verb} before")
                if order and order[-1] == mention.entity:
                    options.append(f"the {category} we discussed earlier")
                if mention.article and last_entity == mention.entity:
                    options.append("it")
                if options:
                    expression = options[rng.randrange(len(options))]
                    text = text[:start] + expression + text[end:]
                    offset += len(expression) - (end - start)
                    remodeled = True
            elif mention.article:
                # Record the bare name's offset, not the article's.
                start = end - len(mention.entity)
            if is_first:
                seen.add(mention.entity)
            if mention.entity not in order:
                order.append(mention.entity)
            last_entity = mention.entity
            records.append(
                MentionRecord(op.op_index, position, mention.entity, expression, remodeled, start)
            )
        out_steps.append(SurfaceStep(step.op_index, step.role, text, [], step.fallback))
    return out_steps, records


# ---------------------------------------------------------------------------
# Turn segmentation
# ---------------------------------------------------------------------------


def segment_turns(
    steps: list[SurfaceStep],
    max_sentences_per_turn: int,
    seed: int = 0,
    mention_records: list[MentionRecord] | None = None,
) -> tuple[list[SurfaceStep], list[tuple[int, int]], list[MentionRecord]]:
    """Split each step into chunks of at most ``max_sentences_per_turn`` sentences.

    Returns (steps, provenance, records) where provenance maps each new step
    index to its source op index and the mention records are re-keyed to the
    new step indices. Chunk texts concatenate exactly to the original text.
    """
    if max_sentences_per_turn < 1:
        raise ValueError("max_sentences_per_turn must be >= 1")
    out_steps: list[SurfaceStep] = []
    provenance: list[tuple[int, int]] = []
    remapped: list[MentionRecord] = []
    records_by_step: dict[int, list[MentionRecord]] = {}
    for record in mention_records or []:
        records_by_step.setdefault(record.step_index, []).append(record)

    for position, step in enumerate(steps):
        spans = sentence_spans(step.text)
        chunks: list[tuple[int, int]] = []
        for i in range(0, len(spans), max_sentences_per_turn):
            group = spans[i : i + max_sentences_per_turn]
            chunks.append((group[0][0], group[-1][1]))
        if not chunks:
            chunks = [(0, len(step.text))]
        for a, b in chunks:
            new_index = len(out_steps)
            out_steps.append(SurfaceStep(step.op_index, step.role, step.text[a:b], [], step.fallback))
            provenance.append((new_index, step.op_index))
        for record in records_by_step.get(position, []):
            pos = record.char_start if record.char_start >= 0 else step.text.find(record.expression)
            target = None
            for chunk_offset, (a, b) in enumerate(chunks):
                if pos >= 0 and a <= pos < b:
                    target = len(out_steps) - len(chunks) + chunk_offset
                    break
            if target is None:
                target = len(out_steps) - len(chunks)
            remapped.append(
                MentionRecord(record.op_index, target, record.entity, record.expression, record.remodeled)
            )
    return out_steps, provenance, remapped


def to_trajectory_steps(
    steps: list[SurfaceStep], domain: str, base_time: str | None = None
) -> list[TrajectoryStep]:
    """Assign dense indices and one-minute ticks keyed to the source op."""
    if base_time is None:
        base_time = "2025-05-15T08:00" if domain == "travel" else "2025-01-01T09:00"
    base = datetime.fromisoformat(base_time)
    out = []
    for index, step in enumerate(steps):
        stamp = (base + timedelta(minutes=step.op_index)).isoformat(timespec="minutes")
        out.append(TrajectoryStep(index, step.role, step.text.strip() or step.text, stamp))
    return out
