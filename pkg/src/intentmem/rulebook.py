"""Deterministic rulebook backing the offline model provider.

Every model-backed task has a pure-function analogue here, driven by editable
lexicons (boundary phrases, pronoun triggers, attribute cues, keyword
expansions). The rulebook is a test double: crude but fully deterministic, so
the rest of the pipeline is exercisable with no network.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any

from .textutil import STOPWORDS, content_words, first_sentence, sentence_spans, words

# Title-case runs of >= 2 words ("Daphne Laurel Hotel") and author-year
# citations ("Aldridge (2019)") are treated as entity names.
_NAME_RE = re.compile(r"\b[A-Z][a-z]+(?:\s+[A-Z][a-z&]+){1,5}\b")
_AUTHOR_YEAR_RE = re.compile(r"\b[A-Z][A-Za-z]+ \([12]\d{3}\)")
_ORDINAL_REF_RE = re.compile(
    r"\bthe\s+(\d+)(?:st|nd|rd|th)\s+([a-z]+)\s+I\s+(?:raised|mentioned|cited)"
    r"(?:\s+(?:before|earlier))?\b",
    re.IGNORECASE,
)
_RECENCY_REF_RE = re.compile(
    r"\bthe\s+([a-z]+)\s+(?:we|I)\s+(?:discussed|mentioned|cited)\s+earlier\b",
    re.IGNORECASE,
)

DEFAULT_RULEBOOK: dict[str, Any] = {
    "boundary_phrases": [
        "let's focus on",
        "let us focus on",
        "moving on to",
        "switching to",
        "turning to",
    ],
    "pronoun_triggers": ["this one", "that one", "the one", "it", "they", "them"],
    "attribute_lexicons": {
        "Price": ["price", "priced", "prices", "how much", "$", "cost", "per night", "budget"],
        "Rating": ["rating", "ratings", "rated", "stars", "review score", "well-liked"],
        "Date": ["trip dates", "dates as", "check-in"],
        "Cuisine": ["cuisine", "signature dish", "menu"],
        "Evidence": ["re:\\([12]\\d{3}\\)", "evidence", "the source", "the study"],
    },
    "event_expansions": {
        "propose": ["one idea is", "how about", "i suggest"],
        "option": ["one idea is", "options we have"],
        "price": ["price", "priced", "how much", "cost", "$", "per night", "budget"],
        "rating": ["rating", "ratings", "rated", "stars", "well-liked"],
        "inquiry": ["could you tell me", "tell me", "how much", "wonder"],
        "comparison": ["compare", "comparing", "versus", "which suits", "which one"],
        "decision": [
            "let's go with",
            "lock",
            "we'll take",
            "final",
            "chosen",
            "choose",
            "decided",
            "decide",
            "instead",
            "update the plan",
        ],
        "date": ["trip dates", "dates as", "check-in"],
        "indication": ["trip dates", "dates as"],
        "argument": ["our contention"],
        "proposal": ["our contention"],
        "rebuttal": ["disagree", "overstates", "rebut", "challenge"],
        "defense": ["still stands", "demonstrates", "reinforces"],
        "concession": ["concede", "point taken", "grant that"],
        "background": ["for background"],
        "citation": ["provides context"],
        "case": ["our case"],
        "summary": ["to summarize", "in summary"],
    },
    "event_seed_rules": [
        ["Date Indication", ["trip dates"]],
        ["Option Comparison", ["compare", "comparing"]],
        ["Propose Option", ["one idea is", "how about"]],
        ["Price Inquiry", ["price", "how much", "priced"]],
        ["Rating Inquiry", ["rating", "ratings"]],
        ["Decision", ["let's go with", "instead", "we'll take"]],
        ["Argument Proposal", ["our contention"]],
        ["Rebuttal", ["disagree"]],
        ["Defense", ["still stands"]],
        ["Concession", ["concede"]],
        ["Background Citation", ["for background"]],
        ["Case Summary", ["to summarize"]],
    ],
    "category_suffixes": {
        "hotel": ["Hotel", "Inn", "Lodge", "Suites", "Retreat", "Guesthouse"],
        "accommodation": ["Hotel", "Inn", "Lodge", "Suites", "Retreat", "Guesthouse"],
        "restaurant": ["Grill", "Bistro", "Taverna", "Dining", "Kitchen", "Table", "Eatery", "Hall"],
        "attraction": ["Museum", "Gardens", "Observatory", "Dome", "Gallery", "Sanctuary", "Promenade", "Amphitheater"],
        "place": [],
        "evidence": ["(year)"],
        "source": ["(year)"],
        "study": ["(year)"],
    },
}


def _cue_matches(cue: str, text_lower: str) -> bool:
    if cue.startswith("re:"):
        return re.search(cue[3:], text_lower, re.IGNORECASE) is not None
    if re.fullmatch(r"[a-z0-9]+", cue):
        return re.search(rf"\b{re.escape(cue)}\b", text_lower) is not None
    return cue in text_lower


def find_entity_names(text: str) -> list[str]:
    """Ordered entity-name spans: author-year citations plus title-case runs.

    A leading sentence-initial "The" is not part of the name when at least two
    capitalized words follow it.
    """
    hits: list[tuple[int, str]] = []
    for match in _AUTHOR_YEAR_RE.finditer(text):
        hits.append((match.start(), match.group(0)))
    covered = [(start, start + len(name)) for start, name in hits]
    for match in _NAME_RE.finditer(text):
        if any(a <= match.start() < b for a, b in covered):
            continue
        name = match.group(0)
        if name.startswith("The ") and name.count(" ") >= 2:
            name = name[4:]
        hits.append((match.start(), name))
    hits.sort(key=lambda item: item[0])
    return [name for _, name in hits]


def _title_case(phrase: str) -> str:
    return " ".join(w.capitalize() for w in phrase.split())


@dataclass
class Rulebook:
    """Lexicon-driven deterministic implementation of every model task."""

    data: dict[str, Any] = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_RULEBOOK)))

    @classmethod
    def load(cls, path) -> Rulebook:
        with open(path, encoding="utf-8") as handle:
            loaded = json.load(handle)
        merged = json.loads(json.dumps(DEFAULT_RULEBOOK))
        merged.update(loaded)
        return cls(merged)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.data, handle, indent=2, sort_keys=True)
            handle.write("\n")

    # -- shared lexicon helpers --

    def step_keywords(self, text: str) -> set[str]:
        """Content words plus expansion keywords whose cues fire on the text."""
        text_lower = text.lower()
        keywords = content_words(text)
        for keyword, cues in self.data["event_expansions"].items():
            if any(_cue_matches(cue, text_lower) for cue in cues):
                keywords.add(keyword)
        return keywords

    def has_reference_trigger(self, text: str) -> bool:
        """Detector for ambiguous references: pronouns, ordinals, recency phrases."""
        text_lower = text.lower()
        if _ORDINAL_REF_RE.search(text) or _RECENCY_REF_RE.search(text):
            return True
        return any(
            re.search(rf"\b{re.escape(p)}\b", text_lower) for p in self.data["pronoun_triggers"]
        )

    def head_phrase(self, text: str) -> str:
        """Short nominal label for a step: matched keywords, else leading content words."""
        text_lower = text.lower()
        matched = [
            kw
            for kw in self.data["event_expansions"]
            if any(_cue_matches(cue, text_lower) for cue in self.data["event_expansions"][kw])
        ]
        if matched:
            return _title_case(" ".join(sorted(matched)[:3]))
        lead = [w for w in words(text) if w not in STOPWORDS and len(w) > 1][:3]
        return _title_case(" ".join(lead)) if lead else "Miscellaneous"

    def _entities_by_category(self, names: list[str], category: str) -> list[str]:
        suffixes = self.data["category_suffixes"].get(category.lower())
        if suffixes is None:
            return names
        out = []
        for name in names:
            if "(year)" in suffixes and _AUTHOR_YEAR_RE.fullmatch(name):
                out.append(name)
            elif any(name.endswith(suffix) for suffix in suffixes if suffix != "(year)"):
                out.append(name)
        return out

    # -- task implementations --

    def scope_induction(self, inputs: dict[str, str]) -> str:
        text = inputs["step_text"]
        prior = inputs.get("prior_scope", "")
        known = [s for s in inputs.get("known_scopes", "").split("\n") if s.strip()]
        text_lower = text.lower()
        for phrase in self.data["boundary_phrases"]:
            pos = text_lower.find(phrase)
            if pos < 0:
                continue
            start = pos + len(phrase)
            for a, b in sentence_spans(text):
                if a <= pos < b:
                    remainder = text[start:b]
                    break
            else:
                remainder = text[start:]
            label = remainder.strip().strip(".!?,;:").strip()
            label = " ".join(label.split()[:8])
            if not label:
                continue
            for existing in known:
                if existing.strip().lower() == label.lower():
                    return existing.strip()
            return label
        if prior:
            return prior
        # No prior scope and no boundary: bootstrap from the step itself.
        return self.head_phrase(text)

    def scope_summary(self, inputs: dict[str, str]) -> str:
        prior = inputs.get("prior_summary", "").strip()
        text = inputs["step_text"]
        spans = sentence_spans(text)
        note = first_sentence(text)
        if len(spans) > 1:
            a, b = spans[-1]
            last = text[a:b].strip()
            if last and last != note:
                note = f"{note} {last}"
        return f"{prior} {note}".strip() if prior else note

    def event_seed(self, inputs: dict[str, str]) -> list[str]:
        labels: list[str] = []
        for line in inputs["turns"].split("\n"):
            line_lower = line.lower()
            for label, cues in self.data["event_seed_rules"]:
                if any(_cue_matches(cue, line_lower) for cue in cues):
                    if label not in labels:
                        labels.append(label)
                    break
        return labels

    def event_select(self, inputs: dict[str, Any]) -> str:
        candidates = list(inputs["candidates"])
        keywords = self.step_keywords(inputs["step_text"])
        best_label = None
        best = 0
        for label in sorted(candidates, key=lambda lab: lab.strip().lower()):
            overlap = len(keywords & {w for w in words(label) if w not in STOPWORDS})
            if overlap > best:
                best, best_label = overlap, label
        if best_label is None:
            return f"NEW:{self.head_phrase(inputs['step_text'])}"
        return best_label

    def entity_extract(self, inputs: dict[str, Any]) -> list[str]:
        text_lower = inputs["step_text"].lower()
        out = []
        for label, cues in self.data["attribute_lexicons"].items():
            if any(_cue_matches(cue, text_lower) for cue in cues):
                out.append(label)
        return out

    def entity_seed(self, inputs: dict[str, str]) -> list[str]:
        labels: list[str] = []
        for line in inputs["turns"].split("\n"):
            for label in self.entity_extract({"step_text": line}):
                if label not in labels:
                    labels.append(label)
        return labels

    def coref_rewrite(self, inputs: dict[str, str]) -> str:
        text = inputs["step_text"]
        context_lines = [line for line in inputs.get("aligned_context", "").split("\n") if line.strip()]
        text = self._rewrite_ordinals(text, context_lines)
        text = self._rewrite_recency(text, context_lines)
        text = self._rewrite_pronouns(text, context_lines)
        return text

    def _chronological_entities(self, context_lines: list[str]) -> list[str]:
        # Aligned context arrives most-recent-first; ordinals index oldest-first.
        seen: list[str] = []
        for line in reversed(context_lines):
            for name in find_entity_names(line):
                if name not in seen:
                    seen.append(name)
        return seen

    def _rewrite_ordinals(self, text: str, context_lines: list[str]) -> str:
        def substitute(match: re.Match[str]) -> str:
            position = int(match.group(1))
            category = match.group(2)
            pool = self._entities_by_category(self._chronological_entities(context_lines), category)
            if 1 <= position <= len(pool):
                return f"the {pool[position - 1]}"
            return match.group(0)

        return _ORDINAL_REF_RE.sub(substitute, text)

    def _rewrite_recency(self, text: str, context_lines: list[str]) -> str:
        def substitute(match: re.Match[str]) -> str:
            category = match.group(1)
            pool = self._entities_by_category(self._chronological_entities(context_lines), category)
            if pool:
                return f"the {pool[-1]}"
            return match.group(0)

        return _RECENCY_REF_RE.sub(substitute, text)

    def _most_recent_entity(self, context_lines: list[str]) -> str | None:
        for line in context_lines:
            names = find_entity_names(line)
            if names:
                return names[-1]
        return None

    def _rewrite_pronouns(self, text: str, context_lines: list[str]) -> str:
        entity = self._most_recent_entity(context_lines)
        if entity is None:
            return text
        replacement = entity if entity.lower().startswith("the ") else f"the {entity}"
        for pronoun in sorted(self.data["pronoun_triggers"], key=len, reverse=True):
            pattern = re.compile(rf"\b{re.escape(pronoun)}\b", re.IGNORECASE)

            def substitute(match: re.Match[str]) -> str:
                if match.group(0)[0].isupper():
                    return replacement[0].upper() + replacement[1:]
                return replacement

            text = pattern.sub(substitute, text)
        return text

    def snippet_summary(self, inputs: dict[str, Any]) -> str:
        text = inputs["rewritten_text"]
        scope = inputs.get("scope", "")
        role = inputs.get("role", "")
        event = inputs.get("event_type", "")
        lead = first_sentence(text)
        prefix = " | ".join(part for part in (scope, role, event) if part)
        return f"[{prefix}] {lead}" if prefix else lead

    def filter_derive(self, inputs: dict[str, Any]) -> dict[str, list[str]]:
        query = inputs["query"]
        keywords = self.step_keywords(query) | content_words(query)
        scopes = self._select_max_overlap(keywords, inputs.get("scopes", []))
        events = self._select_max_overlap(keywords, inputs.get("event_types", []))
        entity_hits = set(self.entity_extract({"step_text": query}))
        entities = [lab for lab in inputs.get("entity_types", []) if lab in entity_hits]
        return {"scopes": scopes, "event_types": events, "entity_types": entities}

    @staticmethod
    def _select_max_overlap(keywords: set[str], labels: list[str]) -> list[str]:
        scored = []
        for label in labels:
            overlap = len(keywords & {w for w in words(label) if w not in STOPWORDS})
            if overlap > 0:
                scored.append((overlap, label))
        if not scored:
            return []
        best = max(score for score, _ in scored)
        return [label for score, label in scored if score == best]

    def consolidate(self, inputs: dict[str, Any]) -> list[str]:
        """Merge directives ("absorbed => survivor") for punctuation variants."""
        groups: dict[str, str] = {}
        directives = []
        for label in inputs["labels"]:
            key = " ".join(words(label))
            if key in groups:
                directives.append(f"{label} => {groups[key]}")
            else:
                groups[key] = label
        return directives

    def answer(self, inputs: dict[str, Any]) -> str:
        question = inputs["question"]
        turns = inputs.get("retrieved_turns", "")
        if not turns.strip():
            return "Question not answerable"
        question_lower = question.lower()
        values: list[str] = []
        if any(_cue_matches(c, question_lower) for c in self.data["attribute_lexicons"]["Price"]):
            values = re.findall(r"\$\d+(?:\.\d{2})?", turns)
        elif any(_cue_matches(c, question_lower) for c in self.data["attribute_lexicons"]["Rating"]):
            values = re.findall(r"\b\d\.\d\b", turns)
        if values:
            unique = list(dict.fromkeys(values))
            return "; ".join(unique)
        names = [n[4:] if n.startswith("The ") else n for n in find_entity_names(turns)]
        for category in self.data["category_suffixes"]:
            if re.search(rf"\b{category}s?\b", question_lower):
                filtered = self._entities_by_category(names, category)
                if filtered:
                    names = filtered
                    break
        unique = list(dict.fromkeys(names))
        if not unique:
            return "Question not answerable"
        return "; ".join(unique)

    def surface_render(self, inputs: dict[str, Any]) -> str:
        # The deterministic realization IS the template text.
        return inputs["template_text"]

    def entailment_check(self, inputs: dict[str, Any]) -> str:
        text = inputs["action_text"]
        required = inputs.get("required_terms", [])
        return "yes" if all(term in text for term in required) else "no"

    def apply(self, task_kind: str, inputs: dict[str, Any]) -> Any:
        handler = {
            "scope_induction": self.scope_induction,
            "scope_summary": self.scope_summary,
            "event_seed": self.event_seed,
            "entity_seed": self.entity_seed,
            "event_select": self.event_select,
            "entity_extract": self.entity_extract,
            "coref_rewrite": self.coref_rewrite,
            "snippet_summary": self.snippet_summary,
            "filter_derive": self.filter_derive,
            "consolidate": self.consolidate,
            "answer": self.answer,
            "surface_render": self.surface_render,
            "entailment_check": self.entailment_check,
        }.get(task_kind)
        if handler is None:
            raise ValueError(f"rulebook has no handler for task kind {task_kind!r}")
        return handler(inputs)
