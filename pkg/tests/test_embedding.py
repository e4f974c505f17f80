from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentmem.embedding import (
    EmbeddingIndex,
    HashEmbedder,
    UnknownCandidateError,
    cosine,
)


def test_embed_deterministic_and_unit_norm():
    embedder = HashEmbedder()
    a = embedder.embed("x")
    b = embedder.embed("x")
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-6


def test_self_similarity_is_one():
    embedder = HashEmbedder()
    vec = embedder.embed("price inquiry for the Apollo Hotel")
    assert cosine(vec, vec) == pytest.approx(1.0, abs=1e-6)


def test_shared_tokens_rank_above_disjoint():
    embedder = HashEmbedder()
    anchor = embedder.embed("price inquiry")
    near = cosine(anchor, embedder.embed("ask about price"))
    far = cosine(anchor, embedder.embed("volcanic eruption"))
    assert near > far


def test_embed_rejects_empty():
    with pytest.raises(ValueError):
        HashEmbedder().embed("   ")


def _index_with(texts: dict[str, str]) -> EmbeddingIndex:
    embedder = HashEmbedder()
    index = EmbeddingIndex()
    for record_id, text in texts.items():
        index.add(record_id, text, embedder.embed(text))
    return index


def test_top_k_single_candidate():
    index = _index_with({"a": "hello world"})
    result = index.top_k(HashEmbedder().embed("hello"), k=1)
    assert [r[0] for r in result] == ["a"]


def test_top_k_saturates_at_candidate_count():
    index = _index_with({"a": "alpha", "b": "beta", "c": "gamma"})
    result = index.top_k(HashEmbedder().embed("alpha"), k=10)
    assert len(result) == 3
    assert result[0][0] == "a"


def test_top_k_unknown_candidate():
    index = _index_with({"a": "alpha"})
    with pytest.raises(UnknownCandidateError):
        index.top_k(HashEmbedder().embed("alpha"), candidate_ids={"missing"}, k=1)


def test_top_k_rejects_bad_args():
    index = _index_with({"a": "alpha"})
    with pytest.raises(ValueError):
        index.top_k(HashEmbedder().embed("alpha"), k=0)
    with pytest.raises(ValueError):
        index.top_k(HashEmbedder().embed("alpha"), candidate_ids=set(), k=1)


def test_top_k_matches_brute_force_on_random_instances():
    rng = random.Random(7)
    embedder = HashEmbedder()
    for trial in range(200):
        n = rng.randint(1, 50)
        texts = {}
        for i in range(n):
            words = [f"w{rng.randint(0, 30)}" for _ in range(rng.randint(1, 6))]
            texts[f"id{i:03d}"] = " ".join(words)
        index = _index_with(texts)
        query = embedder.embed(" ".join(f"w{rng.randint(0, 30)}" for _ in range(3)))
        k = rng.randint(1, 8)
        got = index.top_k(query, k=k)
        brute = sorted(
            ((rid, cosine(query, index.vector(rid))) for rid in texts),
            key=lambda item: (-item[1], item[0]),
        )[: min(k, n)]
        assert [r[0] for r in got] == [b[0] for b in brute]
        for (_, gs), (_, bs) in zip(got, brute):
            assert gs == pytest.approx(bs, abs=1e-12)


@settings(max_examples=50)
@given(st.floats(min_value=0.01, max_value=100.0))
def test_query_scaling_leaves_order_unchanged(scale):
    index = _index_with({"a": "alpha beta", "b": "beta gamma", "c": "delta"})
    query = HashEmbedder().embed("beta")
    base = [r[0] for r in index.top_k(query, k=3)]
    scaled = [r[0] for r in index.top_k(query * scale, k=3)]
    assert base == scaled


def test_index_rejects_unnormalized_vectors():
    index = EmbeddingIndex()
    with pytest.raises(ValueError):
        index.add("a", "text", np.ones(256))


def test_index_save_load_round_trip(tmp_path):
    index = _index_with({"a": "alpha beta", "b": "gamma"})
    path = tmp_path / "embeddings.jsonl"
    index.save(path)
    loaded = EmbeddingIndex.load(path)
    assert set(loaded.ids()) == {"a", "b"}
    assert np.allclose(loaded.vector("a"), index.vector("a"))
    assert loaded.text("b") == "gamma"
