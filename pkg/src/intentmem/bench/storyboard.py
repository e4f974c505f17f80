"""Symbolic storyboard planning plus the independent pragmatic validator.

The planner emits operations from the per-domain action space, satisfying the
ordering constraints by construction; ``validate_pragmatics`` re-checks those
constraints without trusting the planner. Both are deterministic in the seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..model import SymbolicOperation
from .world import ClosedWorld, WorldEntity

TRAVEL_ACTIONS = (
    "indicate_date",
    "propose_option",
    "inquire_details",
    "compare_options",
    "make_decision",
)
DEBATE_ACTIONS = (
    "propose_argument",
    "attack",
    "defend",
    "concede",
    "supply_background",
    "summarize",
)

_TRAVEL_MEALS = ("breakfast", "lunch", "dinner")

_THREAD_TOPICS = [
    "labor shortage", "innovation pipeline", "fiscal balance", "wage pressure",
    "public services", "integration capacity", "brain drain", "housing market",
    "demographic renewal", "talent retention", "community revitalization",
]

_CLAIMS = [
    "the current rules leave critical needs unmet and reform would close the gap",
    "the proposed change would impose costs that fall on those least able to bear them",
    "targeted adjustments outperform broad mandates on every measured outcome",
    "institutional capacity, not policy intent, determines the real-world result",
    "the aggregate gains are real but unevenly distributed across regions",
]


class PlanningError(Exception):
    code = "infeasible_config"


class InsufficientMaterialError(Exception):
    code = "insufficient_material"


@dataclass(frozen=True)
class Violation:
    rule: str
    op_index: int


@dataclass
class Storyboard:
    domain: str
    seed: int
    ops: list[SymbolicOperation] = field(default_factory=list)


@dataclass
class TravelPlanConfig:
    days: int = 2
    attractions_per_day: int = 1
    proposals_per_slot: tuple[int, int] = (2, 3)
    inquiries_per_slot: tuple[int, int] = (1, 2)
    compare_prob: float = 0.5
    revision_prob: float = 0.35

    def __post_init__(self) -> None:
        if self.days < 1:
            raise PlanningError("at least one day is required")
        if self.proposals_per_slot[0] < 1:
            raise PlanningError("every slot needs at least one proposal")


@dataclass
class DebatePlanConfig:
    threads: tuple[int, int] = (3, 4)
    attacks_per_thread: tuple[int, int] = (1, 2)
    defends_per_thread: tuple[int, int] = (1, 2)
    concede_prob: float = 0.5
    background_ops: int = 2

    def __post_init__(self) -> None:
        if self.threads[0] < 2:
            raise PlanningError("debate planning needs at least two threads")


def plan_storyboard(world: ClosedWorld, plan_config=None, seed: int = 0) -> Storyboard:
    if world.domain == "travel":
        return _plan_travel(world, plan_config or TravelPlanConfig(), seed)
    if world.domain == "debate":
        return _plan_debate(world, plan_config or DebatePlanConfig(), seed)
    raise PlanningError(f"unknown domain {world.domain!r}")


# ---------------------------------------------------------------------------
# Travel
# ---------------------------------------------------------------------------


def _attribute_for(category: str, rng: random.Random) -> str:
    if rng.random() < 0.4:
        return "rating"
    return {"accommodation": "price per night", "restaurant": "price", "attraction": "ticket price"}[category]


def format_attribute_value(entity: WorldEntity, attribute: str) -> str:
    if attribute == "rating":
        return f"{entity.attributes['rating']:.1f}"
    key = {"price per night": "price_per_night", "price": "price", "ticket price": "ticket_price"}[attribute]
    return f"${entity.attributes[key]:.2f}"


def _plan_travel(world: ClosedWorld, config: TravelPlanConfig, seed: int) -> Storyboard:
    rng = random.Random(f"plan-travel-{seed}")
    for category in ("accommodation", "restaurant", "attraction"):
        if len(world.by_category(category)) < config.proposals_per_slot[1]:
            raise PlanningError(f"world too small for {category} proposals")

    ops: list[SymbolicOperation] = []

    def add(role: str, kind: str, goal: str, payload: dict) -> None:
        ops.append(SymbolicOperation(len(ops), role, kind, goal, payload))

    day = rng.randint(10, 20)
    start = f"2025-05-{day:02d}"
    end = f"2025-05-{day + config.days:02d}"
    add(
        "user",
        "indicate_date",
        "trip dates",
        {"date_start": start, "date_end": end, "scope_goal": "the trip dates"},
    )

    proposed_restaurants: list[str] = []
    interference_done = False

    for d in range(1, config.days + 1):
        scope_goal = f"planning the itinerary for day {d}"
        slots = [("accommodation", "accommodation")]
        slots += [(meal, "restaurant") for meal in _TRAVEL_MEALS]
        slots += [("attraction", "attraction")] * config.attractions_per_day
        queues: list[list[SymbolicOperation]] = []
        for slot, category in slots:
            goal = f"day {d} {slot}"
            base = {"day": d, "slot": slot, "category": category, "scope_goal": scope_goal}
            n_prop = rng.randint(*config.proposals_per_slot)
            pool = world.by_category(category)
            entities = rng.sample(pool, n_prop)
            if (
                category == "restaurant"
                and not interference_done
                and proposed_restaurants
            ):
                reuse = rng.choice(proposed_restaurants)
                if reuse not in [e.name for e in entities]:
                    entities[0] = world.by_name(reuse)
                interference_done = True
            queue: list[SymbolicOperation] = []
            local = len(ops)  # placeholder indices fixed during merge

            def q(role: str, kind: str, payload: dict) -> None:
                queue.append(SymbolicOperation(0, role, kind, goal, dict(base, **payload)))

            for entity in entities:
                q("user", "propose_option", {"entity": entity.name})
                if category == "restaurant":
                    proposed_restaurants.append(entity.name)
            middle: list[SymbolicOperation] = []
            for _ in range(rng.randint(*config.inquiries_per_slot)):
                target = rng.choice(entities)
                attribute = _attribute_for(category, rng)
                value = format_attribute_value(target, attribute)
                middle.append(
                    SymbolicOperation(0, "user", "inquire_details", goal, dict(base, entity=target.name, attribute=attribute))
                )
                middle.append(
                    SymbolicOperation(0, "travel_agent", "inquire_details", goal, dict(base, entity=target.name, attribute=attribute, value=value))
                )
            if len(entities) >= 2 and rng.random() < config.compare_prob:
                pair = rng.sample(entities, 2)
                attribute = _attribute_for(category, rng)
                values = [format_attribute_value(e, attribute) for e in pair]
                middle.append(
                    SymbolicOperation(0, "user", "compare_options", goal, dict(base, entities=[e.name for e in pair], attribute=attribute))
                )
                middle.append(
                    SymbolicOperation(0, "travel_agent", "compare_options", goal, dict(base, entities=[e.name for e in pair], attribute=attribute, values=values))
                )
            queue.extend(middle)
            decided = [rng.choice(entities).name]
            if len(entities) >= 2 and rng.random() < config.revision_prob:
                alternative = rng.choice([e.name for e in entities if e.name != decided[0]])
                decided.append(alternative)
            for rank, name in enumerate(decided, start=1):
                queue.append(
                    SymbolicOperation(0, "user", "make_decision", goal, dict(base, entity=name, decision_rank=rank))
                )
            del local
            queues.append(queue)

        # Interleave slot queues inside the day; within-queue order is preserved,
        # so proposal-before-reference survives the merge.
        while any(queues):
            nonempty = [q for q in queues if q]
            queue = nonempty[rng.randrange(len(nonempty))]
            for _ in range(min(len(queue), rng.randint(1, 2))):
                op = queue.pop(0)
                add(op.role, op.action_kind, op.latent_goal, op.payload)

    board = Storyboard("travel", seed, ops)
    _assert_sound(board, world)
    return board


# ---------------------------------------------------------------------------
# Debate
# ---------------------------------------------------------------------------


def _pick_evidence(
    world: ClosedWorld,
    rng: random.Random,
    stance: str,
    used_by_side: dict[str, list[tuple[str, str]]],
    side: str,
    thread: str,
    interference: dict[str, bool],
) -> WorldEntity:
    pool = [e for e in world.entities if e.attributes["stance"] in (stance, "neutral")]
    if not pool:
        pool = list(world.entities)
    if not interference["done"]:
        reusable = [name for name, thr in used_by_side.get(side, []) if thr != thread]
        candidates = [e for e in pool if e.name in reusable]
        if candidates:
            interference["done"] = True
            return rng.choice(candidates)
    return rng.choice(pool)


def _plan_debate(world: ClosedWorld, config: DebatePlanConfig, seed: int) -> Storyboard:
    rng = random.Random(f"plan-debate-{seed}")
    n_threads = rng.randint(*config.threads)
    topics = rng.sample(_THREAD_TOPICS, min(n_threads, len(_THREAD_TOPICS)))
    used_by_side: dict[str, list[tuple[str, str]]] = {"pro_debater": [], "con_debater": []}
    interference = {"done": False}

    queues: list[list[SymbolicOperation]] = []
    for i, topic in enumerate(topics):
        thread = f"the {topic} contention"
        proposer = "pro_debater" if i % 2 == 0 else "con_debater"
        opponent = "con_debater" if proposer == "pro_debater" else "pro_debater"
        proposer_stance = "pro" if proposer == "pro_debater" else "con"
        opponent_stance = "con" if proposer_stance == "pro" else "pro"
        claim = _CLAIMS[(seed + i) % len(_CLAIMS)]
        queue: list[SymbolicOperation] = []

        def cite(side: str, stance: str) -> WorldEntity:
            evidence = _pick_evidence(world, rng, stance, used_by_side, side, thread, interference)
            used_by_side[side].append((evidence.name, thread))
            return evidence

        evidence = cite(proposer, proposer_stance)
        queue.append(
            SymbolicOperation(
                0,
                proposer,
                "propose_argument",
                thread,
                {
                    "thread": thread,
                    "claim": claim,
                    "entity": evidence.name,
                    "evidence_id": evidence.attributes["evidence_id"],
                    "side": proposer,
                    "scope_goal": thread,
                },
            )
        )
        moves: list[SymbolicOperation] = []
        for _ in range(rng.randint(*config.attacks_per_thread)):
            ev = cite(opponent, opponent_stance)
            moves.append(
                SymbolicOperation(
                    0, opponent, "attack", thread,
                    {"thread": thread, "entity": ev.name, "evidence_id": ev.attributes["evidence_id"], "side": opponent, "scope_goal": thread},
                )
            )
        for _ in range(rng.randint(*config.defends_per_thread)):
            ev = cite(proposer, proposer_stance)
            moves.append(
                SymbolicOperation(
                    0, proposer, "defend", thread,
                    {"thread": thread, "entity": ev.name, "evidence_id": ev.attributes["evidence_id"], "side": proposer, "scope_goal": thread},
                )
            )
        rng.shuffle(moves)
        # Keep at least one attack before the first defend so global ordering
        # constraints on concessions are easy to satisfy.
        moves.sort(key=lambda op: 0 if op.action_kind == "attack" else 1)
        queue.extend(moves)
        if rng.random() < config.concede_prob:
            queue.append(
                SymbolicOperation(
                    0, proposer, "concede", thread,
                    {"thread": thread, "side": proposer, "scope_goal": thread},
                )
            )
        queues.append(queue)

    ops: list[SymbolicOperation] = []

    def add(op: SymbolicOperation) -> None:
        ops.append(SymbolicOperation(len(ops), op.role, op.action_kind, op.latent_goal, op.payload))

    # First thread opens the debate; afterwards threads interleave.
    add(queues[0].pop(0))
    background_left = config.background_ops
    while any(queues):
        nonempty = [q for q in queues if q]
        queue = nonempty[rng.randrange(len(nonempty))]
        op = queue[0]
        if op.action_kind == "concede" and len(queue) == 1:
            attacks = sum(1 for o in ops if o.action_kind == "attack")
            defends = sum(1 for o in ops if o.action_kind == "defend")
            if attacks == 0 or defends == 0:
                others = [q for q in nonempty if q is not queue]
                if others:
                    queue = others[rng.randrange(len(others))]
                    op = queue[0]
        add(queue.pop(0))
        if background_left and rng.random() < 0.15:
            side = rng.choice(["pro_debater", "con_debater"])
            ev = rng.choice([e for e in world.entities if e.attributes["stance"] == "neutral"] or world.entities)
            add(
                SymbolicOperation(
                    0, side, "supply_background", "shared background",
                    {"entity": ev.name, "evidence_id": ev.attributes["evidence_id"], "side": side, "scope_goal": "shared background"},
                )
            )
            background_left -= 1

    closer = rng.choice(["pro_debater", "con_debater"])
    add(
        SymbolicOperation(
            0, closer, "summarize", "closing summary",
            {"threads": [f"the {t} contention" for t in topics], "side": closer, "scope_goal": "closing summary"},
        )
    )
    board = Storyboard("debate", seed, ops)
    _assert_sound(board, world)
    return board


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_pragmatics(storyboard: Storyboard) -> list[Violation]:
    """Re-derive the ordering constraints from scratch; empty list means ok."""
    violations: list[Violation] = []
    if storyboard.domain == "travel":
        actions = set(TRAVEL_ACTIONS)
        proposed: set[tuple[str, str]] = set()
        for op in storyboard.ops:
            if op.action_kind not in actions:
                violations.append(Violation("unknown-action", op.op_index))
                continue
            if op.action_kind == "propose_option":
                proposed.add((op.latent_goal, op.payload["entity"]))
            elif op.action_kind in ("inquire_details", "make_decision"):
                if (op.latent_goal, op.payload.get("entity")) not in proposed:
                    violations.append(Violation("proposal-precedes-reference", op.op_index))
            elif op.action_kind == "compare_options":
                targets = op.payload.get("entities", [])
                if len(targets) < 2 or any((op.latent_goal, t) not in proposed for t in targets):
                    violations.append(Violation("comparison-needs-proposals", op.op_index))
        return violations

    if storyboard.domain == "debate":
        actions = set(DEBATE_ACTIONS)
        threads_proposed: set[str] = set()
        attacks = 0
        defends = 0
        last = len(storyboard.ops) - 1
        for op in storyboard.ops:
            if op.action_kind not in actions:
                violations.append(Violation("unknown-action", op.op_index))
                continue
            if op.action_kind == "propose_argument":
                threads_proposed.add(op.payload["thread"])
            elif op.action_kind in ("attack", "defend", "concede"):
                if op.payload.get("thread") not in threads_proposed:
                    violations.append(Violation("argument-precedes-move", op.op_index))
                if op.action_kind == "concede" and (attacks == 0 or defends == 0):
                    violations.append(Violation("concede-after-attack-and-defend", op.op_index))
            if op.action_kind == "attack":
                attacks += 1
            elif op.action_kind == "defend":
                defends += 1
            if op.action_kind == "summarize" and op.op_index != last:
                violations.append(Violation("summarize-terminal", op.op_index))
        return violations

    return [Violation("unknown-domain", 0)]


def interference_entities(storyboard: Storyboard) -> set[str]:
    """Entities referenced under two or more distinct latent goals."""
    goals: dict[str, set[str]] = {}
    for op in storyboard.ops:
        names = []
        if "entity" in op.payload:
            names.append(op.payload["entity"])
        names.extend(op.payload.get("entities", []))
        for name in names:
            goals.setdefault(name, set()).add(op.latent_goal)
    return {name for name, gset in goals.items() if len(gset) >= 2}


def _assert_sound(board: Storyboard, world: ClosedWorld) -> None:
    violations = validate_pragmatics(board)
    if violations:
        raise PlanningError(f"planner produced violations: {violations[:3]}")
    known = {e.name for e in world.entities}
    for op in board.ops:
        for name in [op.payload.get("entity"), *op.payload.get("entities", [])]:
            if name is not None and name not in known:
                raise PlanningError(f"payload entity {name!r} not in the closed world")
    if not interference_entities(board):
        raise PlanningError("storyboard lacks an entity reused across latent goals")
