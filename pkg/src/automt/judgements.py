"""Parsing of yes/no judge replies coming back from chat backends."""

from __future__ import annotations

import json
import re

from .errors import MalformedJudgement
from .ontology import canonicalize

_BRACKETED = re.compile(r"\[.*?\]", re.DOTALL)
_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


def parse_yes_no(text: str) -> bool:
    """Map a single-answer reply to True (yes) / False (no)."""
    tokens = _YES_NO.findall(text)
    if not tokens:
        raise MalformedJudgement(f"no yes/no answer in reply: {text[:120]!r}")
    return tokens[0].lower() == "yes"

def parse_yes_no_list(text: str, expected: int = 3) -> list[str]:
    """Extract exactly `expected` yes/no answers from a judge reply.

    Prefers a JSON array of strings (the requested format); falls back to
    scanning yes/no tokens in free text.
    """
    match = _BRACKETED.search(text)
    if match:
        try:
            data = json.loads(match.group(0))
        except json.JSONDecodeError:
            data = None
        if isinstance(data, list):
            answers = [canonicalize(str(a)) for a in data]
            if len(answers) == expected and all(a in ("yes", "no") for a in answers):
                return answers
            raise MalformedJudgement(f"expected {expected} yes/no answers, got {data!r}")
    tokens = [t.lower() for t in _YES_NO.findall(text)]
    if len(tokens) == expected:
        return tokens
    raise MalformedJudgement(
        f"expected {expected} yes/no answers, found {len(tokens)}: {text[:120]!r}"
    )
