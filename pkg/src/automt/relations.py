"""Metamorphic relations: the Given/When/Then triple, its text grammar, and checks."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import ArityError, GrammarError, InvalidMR, OntologyViolation, VerbMismatch
from .ontology import (
    ROAD_WILDCARD,
    ManipulationTarget,
    OntologyTaxonomy,
    Slot,
    Verb,
    canonicalize,
    verb_for,
)

DEFAULT_SYSTEM_NAME = "AutoMT"

# The two placement suffixes the grammar knows; anything else stays verbatim.
PLACEMENT_SUFFIXES = ("on the road", "on the roadside")

_ARTICLES = ("a ", "an ", "the ")
_VOWELS = "aeiou"


class PlacementWarning(UserWarning):
    """A manipulation phrase carries an unrecognized placement suffix."""


def strip_leading_article(phrase: str) -> str:
    for article in _ARTICLES:
        if phrase.startswith(article):
            return phrase[len(article):]
    return phrase


def _indefinite_article(phrase: str) -> str:
    return "an" if phrase[:1] in _VOWELS else "a"


def split_placement_suffix(phrase: str) -> tuple[str, str | None]:
    """Split a canonical phrase into (core, placement suffix or None)."""
    for suffix in PLACEMENT_SUFFIXES:
        # "on the roadside" must win over its prefix "on the road".
        if phrase == suffix:
            return "", suffix
    for suffix in sorted(PLACEMENT_SUFFIXES, key=len, reverse=True):
        if phrase.endswith(" " + suffix):
            return phrase[: -len(suffix) - 1], suffix
    return phrase, None


@dataclass(frozen=True)
class MetamorphicRelation:
    """A road context, a scene manipulation, and the expected ego reaction.

    The manipulation phrase is stored canonically: lowercased, whitespace
    collapsed, leading article removed (rendering re-inserts one).
    """

    road_type: str
    verb: Verb
    manipulation: str
    expected_behavior: str
    source_rule: str = ""
    region: str = ""
    hallucination_score: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "road_type", canonicalize(self.road_type))
        object.__setattr__(
            self, "manipulation", strip_leading_article(canonicalize(self.manipulation))
        )
        object.__setattr__(self, "expected_behavior", canonicalize(self.expected_behavior))


def _check_structure(mr: MetamorphicRelation) -> None:
    if not mr.road_type or not mr.manipulation or not mr.expected_behavior:
        raise InvalidMR("every MR slot must be non-empty")
    if not 0.0 <= mr.hallucination_score <= 1.0:
        raise InvalidMR(f"hallucination_score out of [0,1]: {mr.hallucination_score}")


def validate_mr(mr: MetamorphicRelation, taxonomy: OntologyTaxonomy) -> ManipulationTarget:
    """Check all slots against the taxonomy; returns the manipulation target."""
    _check_structure(mr)
    if mr.road_type != ROAD_WILDCARD and mr.road_type not in taxonomy.road_types:
        raise OntologyViolation(Slot.ROAD_TYPE, mr.road_type)
    if mr.expected_behavior not in taxonomy.expected_behaviors:
        raise OntologyViolation(Slot.BEHAVIOR, mr.expected_behavior)
    target = taxonomy.find_target_in_phrase(mr.manipulation)
    if target is None:
        raise OntologyViolation(Slot.MANIPULATION, mr.manipulation)
    if verb_for(target) is not mr.verb:
        raise VerbMismatch(
            f"{mr.verb.value!r} but target {target.name!r} takes {verb_for(target).value!r}"
        )
    return target


def render_gherkin(mr: MetamorphicRelation, system_name: str = DEFAULT_SYSTEM_NAME) -> str:
    """Render the canonical three-line Given/When/Then text."""
    _check_structure(mr)
    if mr.road_type == ROAD_WILDCARD:
        given = f"Given the ego-vehicle approaches to {mr.road_type}"
    else:
        given = (
            f"Given the ego-vehicle approaches to "
            f"{_indefinite_article(mr.road_type)} {mr.road_type}"
        )
    if mr.verb is Verb.ADDS:
        when = f"When {system_name} adds {_indefinite_article(mr.manipulation)} {mr.manipulation}"
    else:
        when = f"When {system_name} replaces the {mr.manipulation}"
    then = f"Then ego-vehicle should {mr.expected_behavior}"
    return "\n".join((given, when, then))


_GIVEN = re.compile(r"^given the ego-vehicle approaches (?:to )?(.+)$", re.IGNORECASE)
_WHEN = re.compile(r"^when (\S+) (adds|replaces) (.+)$", re.IGNORECASE)
_THEN = re.compile(r"^then (?:the )?ego-vehicle should (.+)$", re.IGNORECASE)


def _warn_unknown_placement(phrase: str) -> None:
    core, suffix = split_placement_suffix(phrase)
    if suffix is None and re.search(r"\bon the\b", phrase):
        warnings.warn(
            f"unrecognized placement suffix kept verbatim: {phrase!r}", PlacementWarning
        )


def parse_gherkin(
    text: str,
    taxonomy: OntologyTaxonomy,
    source_rule: str = "",
    region: str = "",
    hallucination_score: float = 0.0,
) -> MetamorphicRelation:
    """Parse three-line MR text, canonicalize, and validate against the taxonomy."""
    lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if len(lines) != 3:
        raise GrammarError(f"expected exactly 3 lines, got {len(lines)}")
    m_given = _GIVEN.match(lines[0])
    if m_given is None:
        raise GrammarError(f"bad Given line: {lines[0]!r}")
    m_when = _WHEN.match(lines[1])
    if m_when is None:
        raise GrammarError(f"bad When line: {lines[1]!r}")
    m_then = _THEN.match(lines[2])
    if m_then is None:
        raise GrammarError(f"bad Then line: {lines[2]!r}")

    road_type = strip_leading_article(canonicalize(m_given.group(1)))
    verb = Verb(m_when.group(2).lower())
    manipulation = strip_leading_article(canonicalize(m_when.group(3)))
    behavior = canonicalize(m_then.group(1))

    mr = MetamorphicRelation(
        road_type=road_type,
        verb=verb,
        manipulation=manipulation,
        expected_behavior=behavior,
        source_rule=source_rule,
        region=region,
        hallucination_score=hallucination_score,
    )
    validate_mr(mr, taxonomy)
    _warn_unknown_placement(mr.manipulation)
    return mr


def answers_to_score(answers: Sequence[str]) -> float:
    """Mean hallucination score over exactly three yes/no answers (yes=0, no=1)."""
    if len(answers) != 3:
        raise ArityError(f"expected 3 answers, got {len(answers)}")
    values = []
    for answer in answers:
        a = canonicalize(str(answer))
        if a not in ("yes", "no"):
            raise ValueError(f"answer must be yes or no, got {answer!r}")
        values.append(0.0 if a == "yes" else 1.0)
    return sum(values) / 3.0


def mr_to_record(mr: MetamorphicRelation, system_name: str = DEFAULT_SYSTEM_NAME) -> dict:
    """One MR as its JSONL interchange object."""
    return {
        "gherkin": render_gherkin(mr, system_name),
        "road_type": mr.road_type,
        "verb": mr.verb.value,
        "manipulation": mr.manipulation,
        "expected_behavior": mr.expected_behavior,
        "source_rule": mr.source_rule,
        "region": mr.region,
        "hallucination_score": mr.hallucination_score,
    }


def mr_from_record(record: dict) -> MetamorphicRelation:
    return MetamorphicRelation(
        road_type=record["road_type"],
        verb=Verb(record["verb"]),
        manipulation=record["manipulation"],
        expected_behavior=record["expected_behavior"],
        source_rule=record.get("source_rule", ""),
        region=record.get("region", ""),
        hallucination_score=float(record.get("hallucination_score", 0.0)),
    )


def with_score(mr: MetamorphicRelation, score: float) -> MetamorphicRelation:
    return replace(mr, hallucination_score=score)
