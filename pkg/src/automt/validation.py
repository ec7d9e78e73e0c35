"""Binary follow-up validity metrics, the validation-rate aggregate, and the
manipulation-diversity counter."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from . import prompts
from .backends import BackendEndpoint, chat
from .errors import EmptyBatch
from .judgements import parse_yes_no, parse_yes_no_list
from .ontology import canonicalize
from .relations import MetamorphicRelation, answers_to_score, render_gherkin


@dataclass(frozen=True)
class ValidityVerdict:
    case_id: str
    mr_index: int
    scenario_alignment: int
    logical_alignment: int
    manipulation_verification: int
    judge_transcripts: dict = field(default_factory=dict, compare=False)

    @property
    def valid(self) -> bool:
        return (
            self.scenario_alignment == 1
            and self.logical_alignment == 1
            and self.manipulation_verification == 1
        )

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "mr_index": self.mr_index,
            "scenario": self.scenario_alignment,
            "logical": self.logical_alignment,
            "manipulation": self.manipulation_verification,
            "valid": self.valid,
        }


def _middle(frames: Sequence[bytes]) -> bytes:
    return frames[len(frames) // 2]


def scenario_alignment(
    source_frames: Sequence[bytes],
    followup_frames: Sequence[bytes],
    vision_backend: BackendEndpoint,
    transcripts: dict | None = None,
) -> int:
    """1 iff the judge sees the same road type in both middle frames."""
    if not source_frames or not followup_frames:
        raise ValueError("both frame sets must be non-empty")
    reply = chat(
        vision_backend,
        prompts.ROAD_MATCH_QUESTION,
        images=[_middle(source_frames), _middle(followup_frames)],
    )
    if transcripts is not None:
        transcripts["scenario"] = reply
    return 1 if parse_yes_no(reply) else 0


def logical_alignment(
    mr: MetamorphicRelation,
    chat_backend: BackendEndpoint,
    transcripts: dict | None = None,
) -> int:
    """1 iff the three-question consistency score is exactly 0 (all yes)."""
    prompt = prompts.build_validation_prompt(mr.source_rule, render_gherkin(mr))
    reply = chat(chat_backend, prompt)
    if transcripts is not None:
        transcripts["logical"] = reply
    return 1 if answers_to_score(parse_yes_no_list(reply, expected=3)) == 0.0 else 0


def manipulation_verification(
    source_keyframe: bytes,
    followup_keyframe: bytes,
    instruction: str,
    vision_backend: BackendEndpoint,
    transcripts: dict | None = None,
) -> int:
    """Binary coherence check: does the visual change align with the instruction?"""
    if not source_keyframe or not followup_keyframe:
        raise ValueError("both keyframes must be present")
    reply = chat(
        vision_backend,
        prompts.build_manipulation_check_prompt(instruction),
        images=[source_keyframe, followup_keyframe],
    )
    if transcripts is not None:
        transcripts["manipulation"] = reply
    return 1 if parse_yes_no(reply) else 0


def judge_followup(
    case_id: str,
    mr_index: int,
    mr: MetamorphicRelation,
    source_frames: Sequence[bytes],
    followup_frames: Sequence[bytes],
    chat_backend: BackendEndpoint,
    vision_backend: BackendEndpoint,
) -> ValidityVerdict:
    """All three metrics for one follow-up, transcripts kept for audit."""
    transcripts: dict = {}
    scenario = scenario_alignment(source_frames, followup_frames, vision_backend, transcripts)
    logical = logical_alignment(mr, chat_backend, transcripts)
    manipulation = manipulation_verification(
        source_frames[0], followup_frames[0], mr.manipulation, vision_backend, transcripts
    )
    return ValidityVerdict(case_id, mr_index, scenario, logical, manipulation, transcripts)


def validation_rate(verdicts: Sequence[ValidityVerdict]) -> float:
    if not verdicts:
        raise EmptyBatch("validation rate over zero verdicts")
    return sum(1 for v in verdicts if v.valid) / len(verdicts)


def metric_rates(verdicts: Sequence[ValidityVerdict]) -> dict[str, float]:
    if not verdicts:
        raise EmptyBatch("metric rates over zero verdicts")
    n = len(verdicts)
    return {
        "scenario_alignment": sum(v.scenario_alignment for v in verdicts) / n,
        "manipulation_verification": sum(v.manipulation_verification for v in verdicts) / n,
        "logical_alignment": sum(v.logical_alignment for v in verdicts) / n,
    }


def summary(verdicts: Sequence[ValidityVerdict], method: str = "engine") -> dict:
    """Overall rate plus the three per-metric rates, one table row per method."""
    return {
        "method": method,
        "total": len(verdicts),
        "valid": sum(1 for v in verdicts if v.valid),
        "overall_validation_rate": validation_rate(verdicts),
        "metrics": metric_rates(verdicts),
    }


def distinct_manipulations(phrases: Iterable[str]) -> tuple[int, Counter]:
    """Unique canonicalized manipulation phrases with their usage histogram."""
    histogram: Counter = Counter()
    for phrase in phrases:
        histogram[canonicalize(phrase)] += 1
    return len(histogram), histogram
