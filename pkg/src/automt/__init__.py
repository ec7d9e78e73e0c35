"""Offline metamorphic-testing engine for autonomous-driving systems."""

__version__ = "0.1.0"

from .ontology import (
    OntologyTaxonomy,
    Presence,
    Slot,
    TargetCategory,
    Verb,
    canonicalize,
    is_member,
    load_builtin_taxonomy,
    load_taxonomy,
    verb_for,
)
from .relations import (
    MetamorphicRelation,
    answers_to_score,
    mr_from_record,
    mr_to_record,
    parse_gherkin,
    render_gherkin,
    validate_mr,
)

__all__ = [
    "MetamorphicRelation",
    "OntologyTaxonomy",
    "Presence",
    "Slot",
    "TargetCategory",
    "Verb",
    "answers_to_score",
    "canonicalize",
    "is_member",
    "load_builtin_taxonomy",
    "load_taxonomy",
    "mr_from_record",
    "mr_to_record",
    "parse_gherkin",
    "render_gherkin",
    "validate_mr",
    "verb_for",
]
