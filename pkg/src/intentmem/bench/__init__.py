"""Synthetic benchmark generation: closed worlds, storyboards, trajectories, questions."""

from .generate import BenchConfig, BenchInstance, generate_instance, load_instance, save_instance
from .questions import QuestionConfig, derive_questions
from .storyboard import (
    DEBATE_ACTIONS,
    TRAVEL_ACTIONS,
    DebatePlanConfig,
    InsufficientMaterialError,
    PlanningError,
    Storyboard,
    TravelPlanConfig,
    Violation,
    interference_entities,
    plan_storyboard,
    validate_pragmatics,
)
from .surface import (
    MentionRecord,
    SurfaceStep,
    realize_surface,
    realize_trajectory,
    remodel_references,
    segment_turns,
    to_trajectory_steps,
)
from .world import ClosedWorld, WorldEntity, build_environment

__all__ = [
    "BenchConfig",
    "BenchInstance",
    "ClosedWorld",
    "DEBATE_ACTIONS",
    "DebatePlanConfig",
    "InsufficientMaterialError",
    "MentionRecord",
    "PlanningError",
    "QuestionConfig",
    "Storyboard",
    "SurfaceStep",
    "TRAVEL_ACTIONS",
    "TravelPlanConfig",
    "Violation",
    "WorldEntity",
    "build_environment",
    "derive_questions",
    "generate_instance",
    "interference_entities",
    "load_instance",
    "plan_storyboard",
    "realize_surface",
    "realize_trajectory",
    "remodel_references",
    "save_instance",
    "segment_turns",
    "to_trajectory_steps",
    "validate_pragmatics",
]
