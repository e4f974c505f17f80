"""Text-to-vector mapping and exact top-k cosine retrieval.

Two backends: a deterministic feature-hash embedder (token 1-2 grams hashed
into 256 buckets, L2-normalized) for offline use, and a remote embedding
service client. Retrieval is an exhaustive scan; inventories stay small
enough that correctness beats indexing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import httpx
import numpy as np

from .textutil import words

HASH_DIM = 256


class EmbeddingError(Exception):
    """Raised when the remote embedding backend cannot be reached."""

    code = "provider_unreachable"


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.sha1(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") % dim


@dataclass(frozen=True)
class HashEmbedder:
    """Deterministic n-gram feature hashing; unit-norm output."""

    dim: int = HASH_DIM

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        tokens = words(text)
        vec = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            vec[_bucket(tok, self.dim)] += 1.0
        for first, second in zip(tokens, tokens[1:]):
            vec[_bucket(f"{first}_{second}", self.dim)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # No alphanumeric content; fall back to a stable one-hot on the raw text.
            vec[_bucket(text, self.dim)] = 1.0
            norm = 1.0
        return vec / norm


@dataclass
class RemoteEmbedder:
    """Client for an embedding HTTP endpoint returning {"embedding": [...]}."""

    endpoint_url: str
    model_name: str = ""
    timeout_ms: int = 10_000

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        try:
            response = httpx.post(
                self.endpoint_url,
                json={"model": self.model_name, "input": text},
                timeout=self.timeout_ms / 1000.0,
            )
            response.raise_for_status()
            vec = np.asarray(response.json()["embedding"], dtype=np.float64)
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise EmbeddingError(f"embedding backend unreachable: {exc}") from exc
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise EmbeddingError("embedding backend returned a zero vector")
        return vec / norm


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class UnknownCandidateError(KeyError):
    code = "unknown_candidate_id"


@dataclass
class EmbeddingIndex:
    """In-memory id -> (text, unit vector) map with exact top-k scan."""

    dim: int = HASH_DIM
    _texts: dict[str, str] = field(default_factory=dict)
    _vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._vectors

    def ids(self) -> list[str]:
        return list(self._vectors)

    def add(self, record_id: str, text: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector must have dimension {self.dim}")
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError("vectors must be unit-normalized")
        self._texts[record_id] = text
        self._vectors[record_id] = vec

    def vector(self, record_id: str) -> np.ndarray:
        try:
            return self._vectors[record_id]
        except KeyError as exc:
            raise UnknownCandidateError(record_id) from exc

    def text(self, record_id: str) -> str:
        return self._texts[record_id]

    def top_k(
        self,
        query: np.ndarray,
        candidate_ids: set[str] | list[str] | None = None,
        k: int = 1,
    ) -> list[tuple[str, float]]:
        """Exact top-k by cosine, ties broken by ascending id."""
        if k < 1:
            raise ValueError("k must be >= 1")
        ids = list(self._vectors) if candidate_ids is None else list(candidate_ids)
        if not ids:
            raise ValueError("candidate set must be non-empty")
        scored = []
        for record_id in ids:
            vec = self.vector(record_id)
            scored.append((record_id, cosine(query, vec)))
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[: min(k, len(scored))]

    # -- persistence (line-delimited, decimal vectors, binary-free) --

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for record_id in self._vectors:
                record = {
                    "kind": "embedding_record",
                    "id": record_id,
                    "text": self._texts[record_id],
                    "vector": [repr(float(v)) for v in self._vectors[record_id]],
                }
                handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path, dim: int = HASH_DIM) -> EmbeddingIndex:
        index = cls(dim=dim)
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                vec = np.asarray([float(v) for v in record["vector"]], dtype=np.float64)
                index.add(record["id"], record["text"], vec)
        return index
