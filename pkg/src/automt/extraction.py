"""Rule-to-MR extraction: candidate generation across parser profiles,
consistency scoring, and winner selection."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import prompts
from .backends import BackendEndpoint, chat
from .errors import AutomtError, BackendUnavailable, GrammarError, MalformedJudgement
from .judgements import parse_yes_no_list
from .ontology import OntologyTaxonomy
from .relations import (
    DEFAULT_SYSTEM_NAME,
    MetamorphicRelation,
    answers_to_score,
    parse_gherkin,
    render_gherkin,
    with_score,
)

# Winners must have at most one "no" among the three validation answers.
DEFAULT_ACCEPT_SCORE = 1 / 3


@dataclass(frozen=True)
class ParserProfile:
    """One LLM-based rule parser taking part in candidate generation."""

    name: str
    backend: BackendEndpoint
    prompt_template: str = "cot-v1"


@dataclass(frozen=True)
class CandidateResult:
    profile: str
    raw_text: str
    mr: MetamorphicRelation | None = None
    error: str | None = None
    score: float | None = None


@dataclass(frozen=True)
class ExtractionRecord:
    rule_text: str
    region: str
    candidates: tuple[CandidateResult, ...]
    winner: int | None

    @property
    def winner_mr(self) -> MetamorphicRelation | None:
        if self.winner is None:
            return None
        return self.candidates[self.winner].mr


def extract_candidates(
    rule: str,
    profiles: Sequence[ParserProfile],
    taxonomy: OntologyTaxonomy,
    region: str = "",
    system_name: str = DEFAULT_SYSTEM_NAME,
) -> list[CandidateResult]:
    """One candidate per profile; parse failures are captured, not raised."""
    if not profiles:
        raise ValueError("at least one parser profile is required")
    names = [p.name for p in profiles]
    if len(set(names)) != len(names):
        raise ValueError(f"parser profile names must be unique: {names}")
    prompt = prompts.build_rule_parser_prompt(rule, taxonomy, system_name)
    results = []
    for profile in profiles:
        text = chat(profile.backend, prompt)
        try:
            mr = parse_gherkin(text, taxonomy, source_rule=rule, region=region)
            results.append(CandidateResult(profile.name, text, mr=mr))
        except AutomtError as exc:
            results.append(
                CandidateResult(profile.name, text, error=f"{type(exc).__name__}: {exc}")
            )
    return results


def score_candidate(
    rule: str,
    mr: MetamorphicRelation,
    validator: BackendEndpoint,
    system_name: str = DEFAULT_SYSTEM_NAME,
) -> float:
    """Consistency score from the three-question protocol: 0 best, 1 worst."""
    prompt = prompts.build_validation_prompt(rule, render_gherkin(mr, system_name))
    reply = chat(validator, prompt)
    return answers_to_score(parse_yes_no_list(reply, expected=3))


def select_winner(
    candidates: Sequence[CandidateResult], accept_score: float = DEFAULT_ACCEPT_SCORE
) -> int | None:
    """Index of the lowest-score parsed candidate; ties favor earlier profiles.

    None when nothing parsed or the best score exceeds the acceptance bound.
    """
    best: int | None = None
    for i, candidate in enumerate(candidates):
        if candidate.mr is None or candidate.score is None:
            continue
        if best is None or candidate.score < candidates[best].score:
            best = i
    if best is None or candidates[best].score > accept_score:
        return None
    return best


def _extract_one(
    rule: str,
    profiles: Sequence[ParserProfile],
    taxonomy: OntologyTaxonomy,
    validator: BackendEndpoint,
    region: str,
    accept_score: float,
    system_name: str,
) -> ExtractionRecord:
    candidates = extract_candidates(rule, profiles, taxonomy, region, system_name)
    scored = []
    for candidate in candidates:
        if candidate.mr is None:
            scored.append(candidate)
            continue
        try:
            score = score_candidate(rule, candidate.mr, validator, system_name)
        except MalformedJudgement as exc:
            scored.append(
                CandidateResult(
                    candidate.profile, candidate.raw_text,
                    error=f"MalformedJudgement: {exc}",
                )
            )
            continue
        scored.append(
            CandidateResult(
                candidate.profile, candidate.raw_text,
                mr=with_score(candidate.mr, score), score=score,
            )
        )
    winner = select_winner(scored, accept_score)
    return ExtractionRecord(rule, region, tuple(scored), winner)


def extract_corpus(
    rules: Sequence[str],
    profiles: Sequence[ParserProfile],
    taxonomy: OntologyTaxonomy,
    validator: BackendEndpoint,
    region: str = "",
    accept_score: float = DEFAULT_ACCEPT_SCORE,
    parallelism: int = 1,
    system_name: str = DEFAULT_SYSTEM_NAME,
) -> list[ExtractionRecord]:
    """One record per rule, in input order regardless of completion order."""
    if not rules:
        raise ValueError("rules must be non-empty")

    def task(rule: str) -> ExtractionRecord:
        return _extract_one(rule, profiles, taxonomy, validator, region, accept_score, system_name)

    if parallelism <= 1:
        return [task(rule) for rule in rules]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(task, rules))


def winners(records: Sequence[ExtractionRecord]) -> list[MetamorphicRelation]:
    return [r.winner_mr for r in records if r.winner_mr is not None]


def read_rules(path: str | Path) -> list[str]:
    """Rules file: one rule per line; blanks and '#' comments skipped."""
    rules = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            rules.append(stripped)
    return rules


def record_to_dict(record: ExtractionRecord) -> dict:
    return {
        "rule": record.rule_text,
        "region": record.region,
        "winner": record.winner,
        "candidates": [
            {
                "profile": c.profile,
                "text": c.raw_text,
                "gherkin": None if c.mr is None else render_gherkin(c.mr),
                "error": c.error,
                "score": c.score,
            }
            for c in record.candidates
        ],
    }
