"""Closed-world environment construction for the travel and debate domains.

Everything is a pure function of (domain, scale, seed). Travel entities carry
mythology-derived names with a category-specific suffix so surface category
can be recovered from the name alone; debate entities are evidence snippets
cited under a neutral author-year name.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any

TRAVEL_CATEGORIES = ("accommodation", "restaurant", "attraction")

_FIRST_NAMES = [
    "Apollo", "Daphne", "Hyperion", "Olympus", "Bellerophon", "Ismene", "Andromeda", "Nyx",
    "Menelaus", "Athena", "Persephone", "Helios", "Selene", "Orion", "Calypso", "Circe",
    "Daedalus", "Icarus", "Hestia", "Demeter", "Artemis", "Hermes", "Poseidon", "Thetis",
    "Achilles", "Hector", "Penelope", "Odysseus", "Ariadne", "Theseus", "Perseus", "Atalanta",
    "Leda", "Niobe", "Pandora", "Phaedra", "Electra", "Cassandra", "Galatea", "Medea",
    "Triton", "Zephyr", "Boreas", "Eos", "Iris", "Maia", "Rhea", "Gaia",
]

_MIDDLE_NAMES = [
    "Laurel", "Spartan", "Horizon", "Summit", "Pegasus", "Courtyard", "Galaxy", "Twilight",
    "Golden", "Marble", "Olive", "Amber", "Ivory", "Azure", "Emerald", "Crimson",
    "Velvet", "Harbor", "Meadow", "Cascade", "Ember", "Silver",
]

_SUFFIXES = {
    "accommodation": ["Hotel", "Inn", "Lodge", "Suites", "Retreat", "Guesthouse"],
    "restaurant": ["Grill", "Bistro", "Taverna", "Dining", "Kitchen", "Table", "Eatery"],
    "attraction": ["Museum", "Gardens", "Observatory", "Dome", "Gallery", "Sanctuary", "Promenade"],
}

_PRICE_BANDS = {
    "accommodation": (60.0, 400.0),
    "restaurant": (15.0, 180.0),
    "attraction": (5.0, 60.0),
}

_CUISINES = [
    "seafood", "grilled meats", "vegetarian fare", "pastry and tea", "island stews",
    "herb-roasted dishes", "market-fresh salads", "slow-cooked lamb",
]

_THEMES = [
    "stargazing", "ancient sculpture", "botanical walks", "maritime history",
    "mosaic art", "river lore", "cliffside views", "bronze-age relics",
]

_AUTHORS = [
    "Aldridge", "Beaumont", "Calloway", "Donnelly", "Eastman", "Farrow", "Grantham",
    "Holloway", "Ibarra", "Jennings", "Kessler", "Lockhart", "Merriweather", "Norwood",
    "Pemberton", "Quigley", "Rutherford", "Sinclair", "Thackeray", "Underwood",
    "Vance", "Whitfield", "Yarrow", "Zimmerman", "Ashcombe", "Birchall", "Cresswell",
    "Dunmore", "Ellsworth", "Fenwick", "Garfield", "Hathaway", "Ingleton", "Jarvis",
    "Kingsley", "Lamberton", "Mortlake", "Netherton", "Ollerton", "Pickford",
]

_EVIDENCE_POINTS = [
    "sector-level employment figures over a decade",
    "a longitudinal survey of municipal budgets",
    "cross-country productivity comparisons",
    "administrative records from licensing agencies",
    "a randomized audit of service wait times",
    "wage panels for entry-level occupations",
    "census-linked housing cost series",
    "school enrollment and staffing ratios",
]


@dataclass(frozen=True)
class WorldEntity:
    name: str
    category: str
    attributes: dict[str, Any] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": "world_entity",
            "name": self.name,
            "category": self.category,
            "attributes": self.attributes,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> WorldEntity:
        return cls(record["name"], record["category"], dict(record["attributes"]))


@dataclass
class ClosedWorld:
    domain: str
    entities: list[WorldEntity]
    seed: int

    def by_category(self, category: str) -> list[WorldEntity]:
        return [e for e in self.entities if e.category == category]

    def by_name(self, name: str) -> WorldEntity:
        for entity in self.entities:
            if entity.name == name:
                return entity
        raise KeyError(name)

    def evidence_name_map(self) -> dict[str, str]:
        """Debate registry: evidence id -> neutral citation name."""
        return {
            e.attributes["evidence_id"]: e.name
            for e in self.entities
            if e.category == "evidence"
        }


def _travel_entities(scale: int, rng: random.Random) -> list[WorldEntity]:
    entities: list[WorldEntity] = []
    pairs = [(first, middle) for first in _FIRST_NAMES for middle in _MIDDLE_NAMES]
    for category in TRAVEL_CATEGORIES:
        chosen = rng.sample(pairs, scale)
        lo, hi = _PRICE_BANDS[category]
        for first, middle in chosen:
            suffix = rng.choice(_SUFFIXES[category])
            name = f"{first} {middle} {suffix}"
            price = round(rng.uniform(lo, hi), 2)
            rating = round(rng.uniform(1.0, 5.0), 1)
            attributes: dict[str, Any] = {"rating": rating}
            if category == "accommodation":
                attributes["price_per_night"] = price
            elif category == "restaurant":
                attributes["price"] = price
                attributes["cuisine"] = rng.choice(_CUISINES)
            else:
                attributes["ticket_price"] = price
                attributes["theme"] = rng.choice(_THEMES)
            entities.append(WorldEntity(name, category, attributes))
    return entities


def _debate_entities(scale: int, rng: random.Random) -> list[WorldEntity]:
    pairs = [(author, year) for author in _AUTHORS for year in range(1998, 2025)]
    chosen = rng.sample(pairs, scale)
    entities = []
    for index, (author, year) in enumerate(chosen):
        stance = ("pro", "con", "neutral")[index % 3]
        entities.append(
            WorldEntity(
                name=f"{author} ({year})",
                category="evidence",
                attributes={
                    "evidence_id": f"EV-{index:03d}",
                    "author": author,
                    "year": year,
                    "stance": stance,
                    "point": rng.choice(_EVIDENCE_POINTS),
                },
            )
        )
    return entities


def build_environment(domain: str, scale: int, seed: int) -> ClosedWorld:
    """Deterministic closed world: ``scale`` entities per travel category, or
    ``scale`` evidence snippets for debate."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    rng = random.Random(f"world-{domain}-{scale}-{seed}")
    if domain == "travel":
        entities = _travel_entities(scale, rng)
    elif domain == "debate":
        # Need at least one evidence snippet per stance.
        entities = _debate_entities(max(scale, 3), rng)
    else:
        raise ValueError(f"unknown domain {domain!r}")
    return ClosedWorld(domain, entities, seed)
