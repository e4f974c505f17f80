"""Shared text utilities: token counting, word extraction, sentence spans."""

from __future__ import annotations

import re
from collections.abc import Callable

TokenCounter = Callable[[str], int]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_WORD_RE = re.compile(r"[a-z0-9]+")
_SENTENCE_END_RE = re.compile(r"[.!?]+[\"')\]]*")
_TERMINATOR_TAIL_RE = re.compile(r"[.!?][\"')\]]*$")

STOPWORDS = frozenset(
    """a an and are as at be been by can could did do does for from had has have
    how i if in into is it its let lets me my of on or our please she that the
    their them they this those to us was we were what when which who will with
    would you your""".split()
)


def count_tokens(text: str) -> int:
    """Count tokens under the default whitespace-and-punctuation tokenizer."""
    return len(_TOKEN_RE.findall(text))


def words(text: str) -> list[str]:
    """Lowercase alphanumeric word tokens, in order."""
    return _WORD_RE.findall(text.lower())


def content_words(text: str) -> set[str]:
    """Word tokens minus stopwords."""
    return {w for w in words(text) if w not in STOPWORDS}


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, including trailing whitespace.

    Spans tile the input exactly: concatenating ``text[a:b]`` over all spans
    reproduces ``text``. A boundary exists after a run of ``.!?`` (optionally
    followed by closing quotes/brackets) only when whitespace or end-of-text
    follows, so decimals like ``$76.22`` do not split.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    for match in _SENTENCE_END_RE.finditer(text):
        end = match.end()
        if end >= len(text):
            spans.append((start, len(text)))
            start = len(text)
            break
        if not text[end].isspace():
            continue
        while end < len(text) and text[end].isspace():
            end += 1
        spans.append((start, end))
        start = end
    if start < len(text):
        spans.append((start, len(text)))
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[a:b] for a, b in sentence_spans(text)]


def ends_with_terminator(text: str) -> bool:
    """True when the text (ignoring trailing whitespace) ends a sentence."""
    stripped = text.rstrip()
    return bool(stripped) and bool(_TERMINATOR_TAIL_RE.search(stripped))


def first_sentence(text: str) -> str:
    spans = sentence_spans(text)
    if not spans:
        return ""
    a, b = spans[0]
    return text[a:b].strip()
