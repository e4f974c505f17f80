from __future__ import annotations

import hashlib
import json

import pytest

from intentmem.gateway import (
    DeterministicProvider,
    Gateway,
    GatewayConfig,
    ModelTask,
    ProviderUnreachableError,
    RemoteProvider,
    ShapeViolationExhaustedError,
    TaskRejectedError,
    build_gateway,
    render_prompt,
)
from intentmem.rulebook import Rulebook

from conftest import ScriptedProvider, make_gateway


def _event_task(text: str, candidates: list[str]) -> ModelTask:
    return ModelTask("event_select", {"step_text": text, "candidates": candidates})


def test_event_select_price_lexicon_example(gateway):
    result = gateway.run_task(
        _event_task("How much is the Apollo Hotel per night?", ["Price Inquiry", "Booking"])
    )
    assert result.payload == "Price Inquiry"
    assert result.provider == "deterministic"


def test_scope_induction_inherits_without_trigger(gateway):
    task = ModelTask(
        "scope_induction",
        {
            "step_text": "That sounds reasonable to me overall.",
            "role": "user",
            "prior_scope": "Day 2 Itinerary",
            "scope_summary": "",
            "recent_history": "",
            "known_scopes": "Day 2 Itinerary",
        },
    )
    assert gateway.run_task(task).payload == "Day 2 Itinerary"


def test_scope_induction_boundary_creates_scope(gateway):
    task = ModelTask(
        "scope_induction",
        {
            "step_text": "Let's focus on planning the itinerary for day 1. I'm eager to start.",
            "role": "user",
            "prior_scope": "",
            "scope_summary": "",
            "recent_history": "",
            "known_scopes": "",
        },
    )
    assert gateway.run_task(task).payload == "planning the itinerary for day 1"


def test_scope_induction_reuses_known_string_form(gateway):
    task = ModelTask(
        "scope_induction",
        {
            "step_text": "Let's focus on PLANNING THE ITINERARY FOR DAY 1 again.",
            "role": "user",
            "prior_scope": "something else",
            "scope_summary": "",
            "recent_history": "",
            "known_scopes": "planning the itinerary for day 1 again",
        },
    )
    assert gateway.run_task(task).payload == "planning the itinerary for day 1 again"


def test_coref_rewrite_pronoun_substitution(gateway):
    task = ModelTask(
        "coref_rewrite",
        {
            "step_text": "Book it.",
            "aligned_context": "One idea is the Daphne Laurel Hotel for day 1 accommodation.",
        },
    )
    assert gateway.run_task(task).payload == "Book the Daphne Laurel Hotel."


def test_coref_rewrite_ordinal_reference(gateway):
    context = "\n".join(
        [
            "One idea is the Olympus Summit Dining Hall for day 1 breakfast.",
            "One idea is the Hyperion Horizon Dining for day 1 breakfast.",
        ]  # most recent first
    )
    task = ModelTask(
        "coref_rewrite",
        {
            "step_text": "Could you tell me the price of the 2th restaurant I raised before?",
            "aligned_context": context,
        },
    )
    # Chronological order is Hyperion (older) then Olympus, so the 2nd is Olympus.
    assert "Olympus Summit Dining Hall" in gateway.run_task(task).payload


def test_entity_extract_price_example(gateway):
    task = ModelTask(
        "entity_extract",
        {"step_text": "Could you tell me about the price range for breakfast? It is $76.22.", "vocab_labels": []},
    )
    assert gateway.run_task(task).payload == ["Price"]


def test_entity_extract_zero_and_double(gateway):
    none = gateway.run_task(
        ModelTask("entity_extract", {"step_text": "Great, focusing on day 1 is a smart way to start.", "vocab_labels": []})
    )
    assert none.payload == []
    both = gateway.run_task(
        ModelTask("entity_extract", {"step_text": "Tell me the price range and the ratings there.", "vocab_labels": []})
    )
    assert set(both.payload) == {"Price", "Rating"}


def test_determinism_over_replays(gateway):
    task = _event_task("How much is the Apollo Hotel per night?", ["Price Inquiry", "Booking"])
    digests = set()
    for _ in range(1000):
        result = gateway.run_task(task)
        digests.add(hashlib.sha256(json.dumps([result.task_kind, result.payload, result.raw]).encode()).hexdigest())
    assert len(digests) == 1


def test_task_rejected_on_missing_inputs():
    with pytest.raises(TaskRejectedError):
        ModelTask("event_select", {"step_text": "x"})
    with pytest.raises(TaskRejectedError):
        ModelTask("no_such_kind", {})


def test_retry_with_repair_then_success():
    provider = ScriptedProvider({"event_select": ["not-a-candidate", "Booking"]})
    gateway = Gateway(provider, max_retries=2)
    result = gateway.run_task(_event_task("anything", ["Price Inquiry", "Booking"]))
    assert result.payload == "Booking"
    # The second call carried a repair instruction.
    assert provider.calls[0][1] is None
    assert provider.calls[1][1] is not None


def test_shape_violation_exhausted_after_retries():
    provider = ScriptedProvider({"event_select": ["bad1", "bad2", "bad3"]})
    gateway = Gateway(provider, max_retries=2)
    with pytest.raises(ShapeViolationExhaustedError):
        gateway.run_task(_event_task("anything", ["Price Inquiry"]))
    assert len(provider.calls) == 3


@pytest.mark.parametrize(
    "raw",
    ["", "   ", "{broken json", "[1, 2, 3]", json.dumps({"scopes": "not-a-list"}), "multi\nline\nlabel"],
)
def test_shape_fuzz_never_leaks_malformed_payloads(raw):
    provider = ScriptedProvider(
        {kind: [raw] * 3 for kind in ("event_select", "event_seed", "filter_derive", "coref_rewrite")}
    )
    gateway = Gateway(provider, max_retries=2)
    for task in (
        _event_task("step", ["A"]),
        ModelTask("event_seed", {"turns": "user: hi", "dataset_kind": "d"}),
        ModelTask("filter_derive", {"query": "q", "scopes": [], "event_types": [], "entity_types": []}),
        ModelTask("coref_rewrite", {"step_text": "Book it.", "aligned_context": ""}),
    ):
        try:
            result = gateway.run_task(task)
        except ShapeViolationExhaustedError:
            continue
        # If something was accepted, it conforms to the declared shape.
        if task.constraints == "single_label":
            assert isinstance(result.payload, str) and result.payload.strip()
        elif task.constraints == "label_list":
            assert isinstance(result.payload, list)
        elif task.constraints in ("rewritten_text", "summary_text"):
            assert isinstance(result.payload, str) and result.payload.strip()
        else:
            assert set(result.payload) == {"scopes", "event_types", "entity_types"}


def test_remote_provider_unreachable():
    config = GatewayConfig(provider="remote", endpoint_url="http://127.0.0.1:9/v1/chat", timeout_ms=200)
    gateway = build_gateway(config)
    with pytest.raises(ProviderUnreachableError):
        gateway.run_task(_event_task("anything", ["A"]))


def test_prompt_templates_render_for_every_kind():
    rendered = render_prompt(
        ModelTask("filter_derive", {"query": "q?", "scopes": ["s"], "event_types": [], "entity_types": []})
    )
    assert "q?" in rendered and "respond" in rendered.lower()


def test_rulebook_consolidate_directives():
    rulebook = Rulebook()
    merges = rulebook.consolidate({"labels": ["Price Inquiry", "Price, Inquiry", "Booking"]})
    assert merges == ["Price, Inquiry => Price Inquiry"]


def test_rulebook_loads_and_saves(tmp_path):
    path = tmp_path / "rules.json"
    rulebook = Rulebook()
    rulebook.data["boundary_phrases"].append("pivoting to")
    rulebook.save(path)
    loaded = Rulebook.load(path)
    assert "pivoting to" in loaded.data["boundary_phrases"]
    provider = DeterministicProvider(loaded)
    gateway = Gateway(provider)
    task = ModelTask(
        "scope_induction",
        {
            "step_text": "Pivoting to the return flights now.",
            "role": "user",
            "prior_scope": "hotels",
            "scope_summary": "",
            "recent_history": "",
            "known_scopes": "hotels",
        },
    )
    assert gateway.run_task(task).payload == "the return flights now"
