from __future__ import annotations

import json

import pytest

from intentmem.gateway import DeterministicProvider, Gateway
from intentmem.model import TrajectoryStep


class ScriptedProvider:
    """Provider stub: canned raw outputs per task kind, rulebook fallthrough.

    A canned value may be a string (returned once per call, cycling) or a list
    of strings consumed in order; afterwards the rulebook takes over.
    """

    name = "scripted"

    def __init__(self, scripts: dict[str, object] | None = None):
        self.scripts = {k: list(v) if isinstance(v, list) else [v] for k, v in (scripts or {}).items()}
        self.fallback = DeterministicProvider()
        self.calls: list[tuple[str, str | None]] = []

    def complete(self, task, repair=None):
        self.calls.append((task.task_kind, repair))
        queued = self.scripts.get(task.task_kind)
        if queued:
            value = queued.pop(0)
            if isinstance(value, Exception):
                raise value
            return value if isinstance(value, str) else json.dumps(value)
        return self.fallback.complete(task, repair)


class FailingProvider:
    """Provider stub that raises for selected task kinds."""

    name = "failing"

    def __init__(self, failing_kinds: set[str], error_factory):
        self.failing_kinds = failing_kinds
        self.error_factory = error_factory
        self.fallback = DeterministicProvider()

    def complete(self, task, repair=None):
        if task.task_kind in self.failing_kinds:
            raise self.error_factory()
        return self.fallback.complete(task, repair)


def make_gateway(provider=None, max_retries: int = 2) -> Gateway:
    return Gateway(provider or DeterministicProvider(), max_retries=max_retries)


def travel_steps() -> list[TrajectoryStep]:
    """Hand-written mini travel trajectory with known boundaries and triggers."""
    texts = [
        ("user", "Let's focus on planning the itinerary for day 1. One idea is the Daphne Laurel Hotel for day 1 accommodation."),
        ("travel_agent", "The Daphne Laurel Hotel sits in the quiet riverside quarter. Guests praise the calm mornings there."),
        ("user", "Could you tell me about the price per night of the Daphne Laurel Hotel for day 1 accommodation? I want to be sure it fits the budget."),
        ("travel_agent", "The price per night for the Daphne Laurel Hotel comes to $120.50. Most travelers consider that fair."),
        ("user", "One idea is the Hyperion Horizon Dining for day 1 breakfast. It could set a pleasant tone for the day."),
        ("user", "Could you tell me about the price range and the ratings of the Hyperion Horizon Dining for day 1 breakfast?"),
        ("travel_agent", "The price for the Hyperion Horizon Dining comes to $76.22, and the rating stands at 4.2. Reviews skew warm."),
        ("user", "Book it."),
        ("user", "Let's focus on planning the itinerary for day 2. One idea is the Nyx Twilight Observatory for day 2 attraction."),
        ("user", "Let's go with the Nyx Twilight Observatory for day 2 attraction. Please lock that choice in."),
    ]
    return [
        TrajectoryStep(i, role, text, f"2025-05-15T08:{i:02d}")
        for i, (role, text) in enumerate(texts)
    ]


@pytest.fixture
def gateway() -> Gateway:
    return make_gateway()


@pytest.fixture
def steps() -> list[TrajectoryStep]:
    return travel_steps()
