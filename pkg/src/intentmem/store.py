"""Durable per-trajectory persistence: snippets, vocabularies, scope state, embeddings.

Layout is one directory per trajectory, human-auditable:

    manifest.json              single JSON document (counts, versions, checksums)
    snippets.jsonl             append-only snippet log, step_index dense from 0
    embeddings.jsonl           one embedding record per snippet
    vocab_event.gen{N}.jsonl   event vocabulary, one generation per consolidation
    vocab_entity_type.gen{N}.jsonl
    scope_state.jsonl          single scope-state record

The snippet and embedding logs carry a running CRC over their first
``snippet_count`` lines, so a crash between the data write and the manifest
update recovers to the last manifest-consistent count on reopen. A single
writer per trajectory is enforced with an exclusive lock file; readers take
consistent snapshots.
"""

from __future__ import annotations

import json
import logging
import os
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from .embedding import HASH_DIM, EmbeddingIndex
from .model import (
    DEFAULT_SUMMARY_MAX_CHARS,
    ContextualIntent,
    LabelVocabulary,
    MemorySnippet,
    ScopeState,
    dumps_record,
    from_record,
    to_record,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SNIPPETS_NAME = "snippets.jsonl"
EMBEDDINGS_NAME = "embeddings.jsonl"
SCOPE_STATE_NAME = "scope_state.jsonl"
LOCK_NAME = ".lock"

VOCAB_KINDS = ("event", "entity_type")


class StoreError(Exception):
    code = "store_error"


class OutOfOrderError(StoreError):
    code = "out_of_order"


class NotFoundError(StoreError):
    code = "not_found"


class CorruptionError(StoreError):
    code = "corruption_detected"


class UnknownLabelError(StoreError):
    code = "unknown_label"


class StoreLockedError(StoreError):
    code = "store_locked"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _vocab_file(kind: str, generation: int) -> str:
    return f"vocab_{kind}.gen{generation}.jsonl"


def _line_crc(lines: list[str]) -> int:
    crc = 0
    for line in lines:
        crc = zlib.crc32(line.encode("utf-8"), crc)
    return crc


def _file_crc(path: Path) -> int:
    if not path.exists():
        return 0
    return zlib.crc32(path.read_bytes())


def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        handle.write(data)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)


def _read_log_lines(path: Path, count: int, expected_crc: int, name: str) -> list[str]:
    """First ``count`` lines of an append log, verified against the running CRC."""
    if count == 0:
        return []
    if not path.exists():
        raise CorruptionError(f"{name} missing but manifest records {count} records")
    lines: list[str] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            lines.append(line)
            if len(lines) == count:
                break
    if len(lines) < count:
        raise CorruptionError(f"{name} has {len(lines)} lines, manifest records {count}")
    if _line_crc(lines) != expected_crc:
        raise CorruptionError(f"{name} checksum mismatch")
    return [line.rstrip("\n") for line in lines]


@dataclass
class StoreManifest:
    trajectory_id: str
    snippet_count: int = 0
    vocab_versions: dict[str, int] = field(default_factory=lambda: {k: 0 for k in VOCAB_KINDS})
    created_at: str = field(default_factory=_now)
    updated_at: str = field(default_factory=_now)
    checksums: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "store_manifest",
            "trajectory_id": self.trajectory_id,
            "snippet_count": self.snippet_count,
            "vocab_versions": dict(self.vocab_versions),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "checksums": dict(self.checksums),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StoreManifest:
        return cls(
            trajectory_id=data["trajectory_id"],
            snippet_count=data["snippet_count"],
            vocab_versions=dict(data["vocab_versions"]),
            created_at=data["created_at"],
            updated_at=data["updated_at"],
            checksums=dict(data["checksums"]),
        )


@dataclass
class StoreView:
    """Immutable snapshot of one trajectory's store."""

    manifest: StoreManifest
    snippets: list[MemorySnippet]
    vocabularies: dict[str, LabelVocabulary]
    scope_state: ScopeState
    embeddings: EmbeddingIndex

    @property
    def snippet_count(self) -> int:
        return len(self.snippets)

    def snippet(self, step_index: int) -> MemorySnippet:
        return self.snippets[step_index]


def load_view(store_dir: str | Path) -> StoreView:
    """Consistent snapshot; later appends never mutate the returned view."""
    root = Path(store_dir)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.exists():
        raise NotFoundError(f"no store manifest under {root}")
    try:
        manifest = StoreManifest.from_dict(json.loads(manifest_path.read_text("utf-8")))
    except (ValueError, KeyError) as exc:
        raise CorruptionError(f"manifest unreadable: {exc}") from exc

    count = manifest.snippet_count
    snippet_lines = _read_log_lines(
        root / SNIPPETS_NAME, count, manifest.checksums.get(SNIPPETS_NAME, 0), SNIPPETS_NAME
    )
    snippets = [from_record(json.loads(line)) for line in snippet_lines]

    embedding_lines = _read_log_lines(
        root / EMBEDDINGS_NAME, count, manifest.checksums.get(EMBEDDINGS_NAME, 0), EMBEDDINGS_NAME
    )
    embeddings = EmbeddingIndex(dim=HASH_DIM)
    for line in embedding_lines:
        record = json.loads(line)
        vec = np.asarray([float(v) for v in record["vector"]], dtype=np.float64)
        embeddings.add(record["id"], record["text"], vec)

    vocabularies: dict[str, LabelVocabulary] = {}
    for kind in VOCAB_KINDS:
        name = _vocab_file(kind, manifest.vocab_versions[kind])
        path = root / name
        if _file_crc(path) != manifest.checksums.get(name, 0):
            raise CorruptionError(f"{name} checksum mismatch")
        if path.exists():
            records = [json.loads(l) for l in path.read_text("utf-8").splitlines() if l.strip()]
            vocabularies[kind] = from_record(records[0]) if records else LabelVocabulary(kind)
        else:
            vocabularies[kind] = LabelVocabulary(kind)

    scope_path = root / SCOPE_STATE_NAME
    if _file_crc(scope_path) != manifest.checksums.get(SCOPE_STATE_NAME, 0):
        raise CorruptionError(f"{SCOPE_STATE_NAME} checksum mismatch")
    if scope_path.exists() and scope_path.read_text("utf-8").strip():
        scope_state = from_record(json.loads(scope_path.read_text("utf-8").splitlines()[0]))
    else:
        scope_state = ScopeState()

    return StoreView(manifest, snippets, vocabularies, scope_state, embeddings)


class StoreWriter:
    """Single writer for one trajectory directory. Use as a context manager."""

    def __init__(
        self,
        store_dir: str | Path,
        trajectory_id: str | None = None,
        summary_max_chars: int = DEFAULT_SUMMARY_MAX_CHARS,
    ):
        self.root = Path(store_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.summary_max_chars = summary_max_chars
        self._lock_path = self.root / LOCK_NAME
        self._acquire_lock()
        try:
            manifest_path = self.root / MANIFEST_NAME
            if manifest_path.exists():
                self.manifest = StoreManifest.from_dict(json.loads(manifest_path.read_text("utf-8")))
                if trajectory_id and trajectory_id != self.manifest.trajectory_id:
                    raise StoreError(
                        f"store belongs to trajectory {self.manifest.trajectory_id!r}"
                    )
                self._recover()
                view = load_view(self.root)
                self.snippets = list(view.snippets)
                self._snippet_lines = [dumps_record(to_record(s)) for s in self.snippets]
                self._embedding_lines = self._read_raw(EMBEDDINGS_NAME)[: self.manifest.snippet_count]
            else:
                self.manifest = StoreManifest(trajectory_id or self.root.name)
                self.snippets = []
                self._snippet_lines = []
                self._embedding_lines = []
                self._write_manifest()
        except BaseException:
            self._release_lock()
            raise

    # -- locking --

    def _acquire_lock(self) -> None:
        try:
            fd = os.open(self._lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StoreLockedError(f"store {self.root} already has a writer") from None
        with os.fdopen(fd, "w") as handle:
            handle.write(str(os.getpid()))

    def _release_lock(self) -> None:
        try:
            self._lock_path.unlink()
        except FileNotFoundError:
            pass

    def close(self) -> None:
        self._release_lock()

    def __enter__(self) -> StoreWriter:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- internals --

    def _read_raw(self, name: str) -> list[str]:
        path = self.root / name
        if not path.exists():
            return []
        return [l for l in path.read_text("utf-8").splitlines() if l.strip()]

    def _recover(self) -> None:
        """Drop any torn tail beyond the manifest-recorded count."""
        count = self.manifest.snippet_count
        for name in (SNIPPETS_NAME, EMBEDDINGS_NAME):
            path = self.root / name
            if not path.exists():
                continue
            with open(path, encoding="utf-8") as handle:
                lines = handle.readlines()
            if len(lines) > count:
                logger.warning(
                    "recovering %s: truncating %d trailing line(s) past manifest count %d",
                    name,
                    len(lines) - count,
                    count,
                )
                with open(path, "w", encoding="utf-8") as handle:
                    handle.writelines(lines[:count])
                    handle.flush()
                    os.fsync(handle.fileno())

    def _write_manifest(self) -> None:
        self.manifest.updated_at = _now()
        _atomic_write(self.root / MANIFEST_NAME, json.dumps(self.manifest.to_dict(), indent=2, sort_keys=True))

    def _append_line(self, name: str, line: str) -> None:
        with open(self.root / name, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def _checkpoint_doc(self, name: str, content: str) -> None:
        _atomic_write(self.root / name, content)
        self.manifest.checksums[name] = _file_crc(self.root / name)

    # -- operations --

    @property
    def snippet_count(self) -> int:
        return self.manifest.snippet_count

    def append_snippet(self, snippet: MemorySnippet, vector: np.ndarray) -> int:
        """Append one snippet plus its summary embedding; returns the stored id."""
        if snippet.step.step_index != self.manifest.snippet_count:
            raise OutOfOrderError(
                f"expected step_index {self.manifest.snippet_count}, got {snippet.step.step_index}"
            )
        if len(snippet.summary) > self.summary_max_chars:
            raise StoreError(
                f"summary exceeds the {self.summary_max_chars}-character cap"
            )
        snippet_line = dumps_record(to_record(snippet))
        embedding_line = dumps_record(
            {
                "kind": "embedding_record",
                "id": snippet.summary_embedding_id,
                "text": snippet.summary,
                "vector": [repr(float(v)) for v in np.asarray(vector, dtype=np.float64)],
            }
        )
        self._append_line(SNIPPETS_NAME, snippet_line)
        self._append_line(EMBEDDINGS_NAME, embedding_line)
        self._snippet_lines.append(snippet_line)
        self._embedding_lines.append(embedding_line)
        self.snippets.append(snippet)
        self.manifest.snippet_count += 1
        self.manifest.checksums[SNIPPETS_NAME] = _line_crc([l + "\n" for l in self._snippet_lines])
        self.manifest.checksums[EMBEDDINGS_NAME] = _line_crc([l + "\n" for l in self._embedding_lines])
        self._write_manifest()
        return snippet.step.step_index

    def save_vocabulary(self, vocab: LabelVocabulary) -> None:
        """Persist the current generation of a vocabulary (no version bump)."""
        name = _vocab_file(vocab.kind, self.manifest.vocab_versions[vocab.kind])
        self._checkpoint_doc(name, dumps_record(to_record(vocab)) + "\n")
        self._write_manifest()

    def save_scope_state(self, state: ScopeState) -> None:
        self._checkpoint_doc(SCOPE_STATE_NAME, dumps_record(to_record(state)) + "\n")
        self._write_manifest()

    def apply_remap(self, kind: str, remap: dict[str, str], new_vocab: LabelVocabulary) -> None:
        """Rewrite stored intents through ``remap`` and start a new vocab generation.

        The previous generation file is left untouched for audit.
        """
        if kind not in VOCAB_KINDS:
            raise StoreError(f"unknown vocabulary kind {kind!r}")
        current = self._current_vocabulary(kind)
        known = {label.lower() for label in current.labels}
        for absorbed in remap:
            if absorbed.lower() not in known:
                raise UnknownLabelError(f"remap key {absorbed!r} not in current {kind} vocabulary")

        if remap:
            rewritten: list[MemorySnippet] = []
            for snippet in self.snippets:
                rewritten.append(_remap_snippet(snippet, kind, remap))
            lines = [dumps_record(to_record(s)) for s in rewritten]
            _atomic_write(self.root / SNIPPETS_NAME, "".join(l + "\n" for l in lines))
            self.snippets = rewritten
            self._snippet_lines = lines
            self.manifest.checksums[SNIPPETS_NAME] = _line_crc([l + "\n" for l in lines])

        self.manifest.vocab_versions[kind] += 1
        name = _vocab_file(kind, self.manifest.vocab_versions[kind])
        self._checkpoint_doc(name, dumps_record(to_record(new_vocab)) + "\n")
        self._write_manifest()

    def apply_relabel(self, intent_updates: dict[int, ContextualIntent]) -> None:
        """Replace stored intents for specific steps (post-seeding relabel hook)."""
        if not intent_updates:
            return
        for step_index in intent_updates:
            if not 0 <= step_index < len(self.snippets):
                raise OutOfOrderError(f"relabel target {step_index} not stored")
        rewritten = []
        for snippet in self.snippets:
            intent = intent_updates.get(snippet.step.step_index)
            if intent is None:
                rewritten.append(snippet)
            else:
                rewritten.append(
                    MemorySnippet(
                        step=snippet.step,
                        rewritten_text=snippet.rewritten_text,
                        intent=intent,
                        summary=snippet.summary,
                        summary_embedding_id=snippet.summary_embedding_id,
                        degraded=snippet.degraded,
                    )
                )
        lines = [dumps_record(to_record(s)) for s in rewritten]
        _atomic_write(self.root / SNIPPETS_NAME, "".join(l + "\n" for l in lines))
        self.snippets = rewritten
        self._snippet_lines = lines
        self.manifest.checksums[SNIPPETS_NAME] = _line_crc([l + "\n" for l in lines])
        self._write_manifest()

    def _current_vocabulary(self, kind: str) -> LabelVocabulary:
        name = _vocab_file(kind, self.manifest.vocab_versions[kind])
        path = self.root / name
        if not path.exists():
            return LabelVocabulary(kind)
        records = [json.loads(l) for l in path.read_text("utf-8").splitlines() if l.strip()]
        return from_record(records[0]) if records else LabelVocabulary(kind)


def _remap_snippet(snippet: MemorySnippet, kind: str, remap: dict[str, str]) -> MemorySnippet:
    intent = snippet.intent
    if kind == "event":
        new_intent = ContextualIntent(
            scope=intent.scope,
            event_type=remap.get(intent.event_type, intent.event_type),
            entity_types=intent.entity_types,
        )
    else:
        new_intent = ContextualIntent(
            scope=intent.scope,
            event_type=intent.event_type,
            entity_types=frozenset(remap.get(label, label) for label in intent.entity_types),
        )
    if new_intent == intent:
        return snippet
    return MemorySnippet(
        step=snippet.step,
        rewritten_text=snippet.rewritten_text,
        intent=new_intent,
        summary=snippet.summary,
        summary_embedding_id=snippet.summary_embedding_id,
        degraded=snippet.degraded,
    )
