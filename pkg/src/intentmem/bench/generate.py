"""End-to-end benchmark instance assembly and on-disk layout.

An instance directory holds line-delimited record files:

    world.jsonl        closed-world entities
    storyboard.jsonl   symbolic operations
    trajectory.jsonl   realized, remodeled, segmented steps
    questions.jsonl    evaluation questions with gold answers
    resolution.jsonl   one record per entity mention (the resolution map)
    provenance.jsonl   step_index -> source op_index
    meta.jsonl         one record of generation parameters
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..gateway import Gateway
from ..model import (
    EvaluationQuestion,
    SymbolicOperation,
    TrajectoryStep,
    dumps_record,
    from_record,
    to_record,
)
from .questions import QuestionConfig, derive_questions
from .storyboard import Storyboard, plan_storyboard
from .surface import (
    MentionRecord,
    realize_trajectory,
    remodel_references,
    segment_turns,
    to_trajectory_steps,
)
from .world import ClosedWorld, WorldEntity, build_environment


@dataclass
class BenchConfig:
    domain: str = "travel"
    scale: int = 10
    seed: int = 0
    surface_mode: str = "template"
    remodel_rate: float = 0.5
    max_sentences_per_turn: int = 2
    plan_config: object | None = None
    question_config: QuestionConfig | None = None

    def meta(self) -> dict:
        return {
            "kind": "bench_meta",
            "domain": self.domain,
            "scale": self.scale,
            "seed": self.seed,
            "surface_mode": self.surface_mode,
            "remodel_rate": self.remodel_rate,
            "max_sentences_per_turn": self.max_sentences_per_turn,
        }


@dataclass
class BenchInstance:
    config: BenchConfig
    world: ClosedWorld
    storyboard: Storyboard
    steps: list[TrajectoryStep]
    questions: list[EvaluationQuestion]
    resolution: list[MentionRecord]
    provenance: list[tuple[int, int]] = field(default_factory=list)

    def steps_for_op(self, op_index: int) -> list[int]:
        return [step for step, op in self.provenance if op == op_index]

    def gold_step_ids(self, question: EvaluationQuestion) -> set[int]:
        out: set[int] = set()
        for op_index in question.supporting_ops:
            out.update(self.steps_for_op(op_index))
        return out

    def oracle_resolved_steps(self) -> list[TrajectoryStep]:
        """Trajectory with the resolution map applied: every remodeled
        expression replaced by its canonical entity name."""
        by_step: dict[int, list[MentionRecord]] = {}
        for record in self.resolution:
            if record.remodeled:
                by_step.setdefault(record.step_index, []).append(record)
        out = []
        for step in self.steps:
            text = step.action_text
            for record in by_step.get(step.step_index, []):
                text = text.replace(record.expression, f"{record.entity}", 1)
            out.append(TrajectoryStep(step.step_index, step.role, text, step.timestamp))
        return out


def generate_instance(config: BenchConfig, gateway: Gateway | None = None) -> BenchInstance:
    """world -> storyboard -> realization -> remodel -> segmentation -> questions."""
    world = build_environment(config.domain, config.scale, config.seed)
    storyboard = plan_storyboard(world, config.plan_config, config.seed)
    surface = realize_trajectory(storyboard, world, config.surface_mode, gateway)
    remodeled, records = remodel_references(surface, storyboard, config.remodel_rate, config.seed)
    segmented, provenance, records = segment_turns(
        remodeled, config.max_sentences_per_turn, config.seed, records
    )
    steps = to_trajectory_steps(segmented, config.domain)
    questions = derive_questions(storyboard, records, config.question_config, config.seed)
    return BenchInstance(config, world, storyboard, steps, questions, records, provenance)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_instance(instance: BenchInstance, out_dir: str | Path) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)

    def dump(name: str, records) -> None:
        with open(root / name, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(dumps_record(record) + "\n")

    dump("meta.jsonl", [instance.config.meta()])
    dump("world.jsonl", [e.to_record() for e in instance.world.entities])
    dump("storyboard.jsonl", [to_record(op) for op in instance.storyboard.ops])
    dump("trajectory.jsonl", [to_record(s) for s in instance.steps])
    dump("questions.jsonl", [to_record(q) for q in instance.questions])
    dump("resolution.jsonl", [r.to_record() for r in instance.resolution])
    dump(
        "provenance.jsonl",
        [{"kind": "step_provenance", "step_index": s, "op_index": o} for s, o in instance.provenance],
    )
    return root


def load_instance(path: str | Path) -> BenchInstance:
    root = Path(path)

    def rows(name: str) -> list[dict]:
        with open(root / name, encoding="utf-8") as handle:
            return [json.loads(line) for line in handle if line.strip()]

    meta = rows("meta.jsonl")[0]
    config = BenchConfig(
        domain=meta["domain"],
        scale=meta["scale"],
        seed=meta["seed"],
        surface_mode=meta["surface_mode"],
        remodel_rate=meta["remodel_rate"],
        max_sentences_per_turn=meta["max_sentences_per_turn"],
    )
    world = ClosedWorld(
        meta["domain"], [WorldEntity.from_record(r) for r in rows("world.jsonl")], meta["seed"]
    )
    ops: list[SymbolicOperation] = [from_record(r) for r in rows("storyboard.jsonl")]
    storyboard = Storyboard(meta["domain"], meta["seed"], ops)
    steps: list[TrajectoryStep] = [from_record(r) for r in rows("trajectory.jsonl")]
    questions: list[EvaluationQuestion] = [from_record(r) for r in rows("questions.jsonl")]
    resolution = [MentionRecord.from_record(r) for r in rows("resolution.jsonl")]
    provenance = [(r["step_index"], r["op_index"]) for r in rows("provenance.jsonl")]
    return BenchInstance(config, world, storyboard, steps, questions, resolution, provenance)
