from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from intentmem.model import (
    ContextualIntent,
    EvaluationQuestion,
    FilterConfig,
    LabelVocabulary,
    MemorySnippet,
    ScopeState,
    SymbolicOperation,
    TrajectoryStep,
    from_record,
    normalize_label,
    to_record,
    validate_trajectory,
)


def make_snippet(index: int = 0, **overrides) -> MemorySnippet:
    step = TrajectoryStep(index, "user", "Book the Apollo Hotel.", index)
    fields = dict(
        step=step,
        rewritten_text="Book the Apollo Hotel.",
        intent=ContextualIntent("day 1", "Decision", frozenset({"Price"})),
        summary="user decides on the Apollo Hotel.",
        summary_embedding_id=f"snip-{index:06d}",
    )
    fields.update(overrides)
    return MemorySnippet(**fields)


def test_round_trip_all_types():
    objects = [
        TrajectoryStep(0, "user", "hello there", "2025-05-15T08:00"),
        TrajectoryStep(1, "agent", "hi", 17),
        ContextualIntent("day 1", "Price Inquiry", frozenset({"Price", "Rating"})),
        make_snippet(),
        LabelVocabulary("event"),
        ScopeState(),
        FilterConfig(frozenset({"day 1"}), frozenset(), frozenset({"Price"})),
        SymbolicOperation(3, "user", "propose_option", "day 1 lunch", {"entity": "Apollo Hotel"}),
        EvaluationQuestion("q1", "multi_hop", "Which one?", frozenset({"Apollo Hotel"}), frozenset({3})),
    ]
    for obj in objects:
        assert from_record(to_record(obj)) == obj


def test_vocabulary_round_trip_preserves_history():
    vocab = LabelVocabulary("event")
    vocab.add("Price Inquiry", 3)
    vocab.add("Booking", 5)
    restored = from_record(to_record(vocab))
    assert restored.labels == ["Price Inquiry", "Booking"]
    assert restored.entries[0].created_at_step == 3


def test_validate_empty_trajectory_ok():
    assert validate_trajectory([]).ok


def test_validate_well_formed_ok():
    steps = [TrajectoryStep(i, "user", "x", i) for i in range(3)]
    assert validate_trajectory(steps).ok


def test_validate_non_contiguous_reports_offender():
    steps = [TrajectoryStep(0, "user", "x", 0), TrajectoryStep(2, "user", "y", 1)]
    report = validate_trajectory(steps)
    assert not report.ok
    assert report.rule == "non-contiguous"
    assert report.step_index == 2


def test_validate_non_monotonic_timestamp():
    steps = [TrajectoryStep(0, "user", "x", 5), TrajectoryStep(1, "user", "y", 4)]
    report = validate_trajectory(steps)
    assert report.rule == "non-monotonic-timestamp"
    assert report.step_index == 1


def test_validate_mixed_timestamp_types():
    steps = [TrajectoryStep(0, "user", "x", 5), TrajectoryStep(1, "user", "y", "2025-05-15T08:00")]
    assert validate_trajectory(steps).rule == "mixed-timestamp-types"


def test_step_rejects_bad_fields():
    with pytest.raises(ValueError):
        TrajectoryStep(-1, "user", "x", 0)
    with pytest.raises(ValueError):
        TrajectoryStep(0, "", "x", 0)
    with pytest.raises(ValueError):
        TrajectoryStep(0, "user", "  ", 0)
    with pytest.raises(ValueError):
        TrajectoryStep(0, "user", "x", "not-a-time")


def test_label_normalization():
    assert normalize_label("  Price   Inquiry ") == "price inquiry"
    vocab = LabelVocabulary("event")
    canonical, created = vocab.add("Price Inquiry", 0)
    assert created and canonical == "Price Inquiry"
    again, created = vocab.add("PRICE  INQUIRY", 9)
    assert not created and again == "Price Inquiry"
    assert vocab.labels == ["Price Inquiry"]


def test_vocabulary_rejects_duplicates_at_construction():
    record = {
        "kind": "label_vocabulary",
        "vocab_kind": "event",
        "entries": [["Booking", 0], ["booking", 1]],
        "merge_log": [],
    }
    with pytest.raises(ValueError):
        from_record(record)


def test_scope_state_window_and_reuse():
    state = ScopeState(window=3)
    label = state.enter_scope("Day 1 Itinerary")
    assert state.enter_scope("DAY 1 ITINERARY") == label
    assert state.scope_inventory == ["Day 1 Itinerary"]
    for i in range(5):
        state.record_step(i, "user", label)
    assert len(state.history_buffer) == 3
    assert state.history_buffer[0].step_index == 2


def test_snippet_requires_nonempty_text():
    with pytest.raises(ValueError):
        make_snippet(rewritten_text="   ")
    with pytest.raises(ValueError):
        make_snippet(summary="")


def test_question_requires_gold_and_support():
    with pytest.raises(ValueError):
        EvaluationQuestion("q", "synthesis", "t", frozenset(), frozenset({1}))
    with pytest.raises(ValueError):
        EvaluationQuestion("q", "synthesis", "t", frozenset({"a"}), frozenset())
    with pytest.raises(ValueError):
        EvaluationQuestion("q", "type5", "t", frozenset({"a"}), frozenset({1}))


_snippet_records = st.fixed_dictionaries(
    {
        "kind": st.just("memory_snippet"),
        "step": st.fixed_dictionaries(
            {
                "kind": st.just("trajectory_step"),
                "step_index": st.integers(-2, 5),
                "role": st.sampled_from(["user", "agent", ""]),
                "action_text": st.sampled_from(["Book it.", "", "  "]),
                "timestamp": st.sampled_from([0, 3, "2025-05-15T08:00", "bogus"]),
            }
        ),
        "rewritten_text": st.sampled_from(["Book the Apollo Hotel.", "", " "]),
        "intent": st.fixed_dictionaries(
            {
                "kind": st.just("contextual_intent"),
                "scope": st.sampled_from(["day 1", ""]),
                "event_type": st.sampled_from(["Decision", ""]),
                "entity_types": st.lists(st.sampled_from(["Price", "Rating", " "]), max_size=2),
            }
        ),
        "summary": st.sampled_from(["short summary", ""]),
        "summary_embedding_id": st.sampled_from(["snip-000000", ""]),
        "degraded": st.booleans(),
    }
)


@given(_snippet_records)
def test_snippet_fuzz_rejects_or_round_trips(record):
    try:
        snippet = from_record(record)
    except ValueError:
        return
    # Anything constructible satisfies the invariants and round-trips.
    assert snippet.rewritten_text.strip()
    assert snippet.summary.strip()
    assert from_record(to_record(snippet)) == snippet
