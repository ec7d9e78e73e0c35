"""Closed vocabulary constraining MR slots: road types, manipulation targets, behaviors."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import DuplicateEntry, EmptyCategory, ParseError

# Wildcard road type; always a member of the RoadType slot.
ROAD_WILDCARD = "any roads"

DEFAULT_BEHAVIORS = ("slow down", "turn left", "turn right", "keep current")

_WS = re.compile(r"\s+")


def canonicalize(value: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return _WS.sub(" ", value.strip().lower())


class TargetCategory(Enum):
    TRAFFIC_INFRASTRUCTURE = "TrafficInfrastructure"
    OBJECT = "Object"
    ENVIRONMENT = "Environment"


class Presence(Enum):
    OPTIONAL = "Optional"
    MANDATORY = "Mandatory"


class Verb(Enum):
    ADDS = "adds"
    REPLACES = "replaces"


class Slot(Enum):
    ROAD_TYPE = "road_type"
    MANIPULATION = "manipulation"
    BEHAVIOR = "behavior"


@dataclass(frozen=True)
class ManipulationTarget:
    """One entry of the Manipulation vocabulary.

    Optional presence means the scene may lack the target (verb "adds");
    mandatory presence means the scene always has one (verb "replaces").
    """

    category: TargetCategory
    subcategory: str
    name: str
    presence: Presence


@dataclass(frozen=True)
class OntologyTaxonomy:
    road_types: frozenset[str]
    manipulation_targets: tuple[ManipulationTarget, ...]
    expected_behaviors: frozenset[str]
    region: str = ""
    # Longest-first target names, precomputed for phrase matching.
    _names_by_length: tuple[str, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        names = sorted({t.name for t in self.manipulation_targets}, key=len, reverse=True)
        object.__setattr__(self, "_names_by_length", tuple(names))

    def find_target(self, name: str) -> ManipulationTarget | None:
        """First target whose name equals the canonicalized value."""
        wanted = canonicalize(name)
        for target in self.manipulation_targets:
            if target.name == wanted:
                return target
        return None

    def find_target_in_phrase(self, phrase: str) -> ManipulationTarget | None:
        """Locate the vocabulary target named inside a manipulation phrase.

        Exact name match wins; otherwise the longest target name appearing
        as a whole-word substring of the phrase.
        """
        core = canonicalize(phrase)
        exact = self.find_target(core)
        if exact is not None:
            return exact
        for name in self._names_by_length:
            if re.search(rf"\b{re.escape(name)}\b", core):
                return self.find_target(name)
        return None


def verb_for(target: ManipulationTarget) -> Verb:
    """Optional targets take "adds"; mandatory ones take "replaces"."""
    return Verb.ADDS if target.presence is Presence.OPTIONAL else Verb.REPLACES


def is_member(taxonomy: OntologyTaxonomy, slot: Slot, value: str) -> bool:
    """Membership test, invariant under case and surrounding whitespace."""
    v = canonicalize(value)
    if slot is Slot.ROAD_TYPE:
        return v == ROAD_WILDCARD or v in taxonomy.road_types
    if slot is Slot.MANIPULATION:
        return taxonomy.find_target(v) is not None
    return v in taxonomy.expected_behaviors


_CATEGORIES = {c.value.lower(): c for c in TargetCategory}
_PRESENCES = {p.value.lower(): p for p in Presence}


def _parse_target(entry: dict) -> ManipulationTarget:
    if not isinstance(entry, dict) or "name" not in entry or "category" not in entry:
        raise ParseError(f"manipulation entry needs category and name: {entry!r}")
    category = _CATEGORIES.get(canonicalize(str(entry["category"])))
    if category is None:
        raise ParseError(f"unknown manipulation category: {entry['category']!r}")
    name = canonicalize(str(entry["name"]))
    if not name:
        raise ParseError("manipulation entry has an empty name")
    subcategory = canonicalize(str(entry.get("subcategory", "")))
    default = Presence.MANDATORY if category is TargetCategory.ENVIRONMENT else Presence.OPTIONAL
    raw = entry.get("presence")
    presence = default if raw is None else _PRESENCES.get(canonicalize(str(raw)))
    if presence is None:
        raise ParseError(f"unknown presence: {raw!r}")
    if category is TargetCategory.ENVIRONMENT and presence is not Presence.MANDATORY:
        raise ParseError(f"environment target {name!r} must be mandatory")
    if category is TargetCategory.OBJECT and presence is not Presence.OPTIONAL:
        raise ParseError(f"object target {name!r} must be optional")
    return ManipulationTarget(category, subcategory, name, presence)


def _canonical_set(values: Iterable[str], section: str) -> frozenset[str]:
    out: list[str] = []
    for raw in values:
        v = canonicalize(str(raw))
        if not v:
            raise ParseError(f"empty entry in {section}")
        if v in out:
            raise DuplicateEntry(f"duplicate {section} entry: {v!r}")
        out.append(v)
    return frozenset(out)


def taxonomy_from_dict(doc: dict) -> OntologyTaxonomy:
    """Build a canonical taxonomy from a parsed taxonomy document."""
    if not isinstance(doc, dict):
        raise ParseError("taxonomy document must be a JSON object")
    road_raw = doc.get("road_types")
    if not isinstance(road_raw, list) or not road_raw:
        raise EmptyCategory("road_types must be a non-empty array")
    road_types = _canonical_set(road_raw, "road_types")

    manip_raw = doc.get("manipulations")
    if not isinstance(manip_raw, list) or not manip_raw:
        raise EmptyCategory("manipulations must be a non-empty array")
    targets: list[ManipulationTarget] = []
    seen: set[tuple] = set()
    for entry in manip_raw:
        target = _parse_target(entry)
        key = (target.category, target.subcategory, target.name)
        if key in seen:
            raise DuplicateEntry(f"duplicate manipulation entry: {key!r}")
        seen.add(key)
        targets.append(target)

    behaviors_raw = doc.get("behaviors", list(DEFAULT_BEHAVIORS))
    if not isinstance(behaviors_raw, list) or not behaviors_raw:
        raise EmptyCategory("behaviors must be a non-empty array")
    behaviors = _canonical_set(behaviors_raw, "behaviors")

    region = str(doc.get("region", ""))
    return OntologyTaxonomy(road_types, tuple(targets), behaviors, region)


def load_taxonomy(source: str | Path) -> OntologyTaxonomy:
    """Load and canonicalize a taxonomy from a UTF-8 JSON file."""
    text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid taxonomy JSON: {exc}") from exc
    return taxonomy_from_dict(doc)


def load_builtin_taxonomy(region: str) -> OntologyTaxonomy:
    """Load one of the shipped region taxonomies ("DE" or "CA")."""
    name = f"taxonomy_{region.strip().lower()}.json"
    ref = resources.files("automt.data").joinpath(name)
    try:
        doc = json.loads(ref.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"no builtin taxonomy for region {region!r}")
    return taxonomy_from_dict(doc)
