"""Safety-violation detection: median summaries, cross-predictor variance
bands, and behavior-specific violation rules."""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .errors import EmptyBatch, EmptySeries, TooFewPredictors, UnknownBehavior
from .ontology import canonicalize

DEFAULT_BAND_K = 1.0


class Channel(Enum):
    SPEED = "speed"
    STEERING = "steering"


@dataclass(frozen=True)
class PredictionSeries:
    ads_id: str
    case_id: str
    speed_mps: tuple[float, ...]
    steering_rad: tuple[float, ...]

    def __post_init__(self):
        if len(self.speed_mps) != len(self.steering_rad):
            raise ValueError(
                f"{self.ads_id}/{self.case_id}: speed and steering lengths differ"
            )


@dataclass(frozen=True)
class VarianceBand:
    channel: Channel
    mean: float
    std: float
    lower: float
    upper: float

    @classmethod
    def from_values(cls, channel: Channel, values: Sequence[float], k: float) -> "VarianceBand":
        # statistics.mean is exact over rationals: identical inputs yield a
        # degenerate band centered exactly on the input value.
        mean = float(statistics.mean(values))
        std = float(statistics.pstdev(values, mu=mean))
        return cls(channel, mean, std, mean - k * std, mean + k * std)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "lower": self.lower,
            "upper": self.upper,
        }


@dataclass(frozen=True)
class ViolationVerdict:
    ads_id: str
    case_id: str
    expected_behavior: str
    violated: bool
    speed_band: VarianceBand
    steering_band: VarianceBand
    observed_speed: float
    observed_steering: float

    def to_dict(self) -> dict:
        return {
            "ads_id": self.ads_id,
            "case_id": self.case_id,
            "behavior": self.expected_behavior,
            "violated": self.violated,
            "bands": {
                "speed": self.speed_band.to_dict(),
                "steering": self.steering_band.to_dict(),
            },
            "observed": {"speed_mps": self.observed_speed, "steering_rad": self.observed_steering},
        }


def summarize(series: PredictionSeries) -> tuple[float, float]:
    """Per-channel median over frames (even length: mean of the middle two)."""
    if not series.speed_mps:
        raise EmptySeries(f"{series.ads_id}/{series.case_id} has no frames")
    return (
        float(statistics.median(series.speed_mps)),
        float(statistics.median(series.steering_rad)),
    )


def bands_from_source(
    source_summaries: Sequence[tuple[float, float]], k: float = DEFAULT_BAND_K
) -> tuple[VarianceBand, VarianceBand]:
    """Variance bands over all predictors' source-case medians (population std)."""
    if len(source_summaries) < 2:
        raise TooFewPredictors(f"need >= 2 predictors, got {len(source_summaries)}")
    speeds = [s for s, _ in source_summaries]
    steers = [s for _, s in source_summaries]
    return (
        VarianceBand.from_values(Channel.SPEED, speeds, k),
        VarianceBand.from_values(Channel.STEERING, steers, k),
    )


def judge(
    expected_behavior: str,
    observed: tuple[float, float],
    bands: tuple[VarianceBand, VarianceBand],
    left_positive: bool = True,
    ads_id: str = "",
    case_id: str = "",
) -> ViolationVerdict:
    """Behavior rule table; `violated` is the negation of the rule being met.

    slow down     follow-up speed strictly below the speed band's lower bound
    keep current  speed and steering both inside their closed bands
    turn left     steering beyond the left-direction bound (sign-aware)
    turn right    symmetric on the right side
    """
    behavior = canonicalize(expected_behavior)
    speed_band, steering_band = bands
    speed, steering = observed
    # Normalize steering to a left-positive frame so the turn rules read once.
    if left_positive:
        s, low, up = steering, steering_band.lower, steering_band.upper
    else:
        s, low, up = -steering, -steering_band.upper, -steering_band.lower
    if behavior == "slow down":
        satisfied = speed < speed_band.lower
    elif behavior == "keep current":
        satisfied = (
            speed_band.lower <= speed <= speed_band.upper and low <= s <= up
        )
    elif behavior == "turn left":
        satisfied = s > max(up, 0.0)
    elif behavior == "turn right":
        satisfied = s < min(low, 0.0)
    else:
        raise UnknownBehavior(f"no violation rule for behavior {behavior!r}")
    return ViolationVerdict(
        ads_id=ads_id,
        case_id=case_id,
        expected_behavior=behavior,
        violated=not satisfied,
        speed_band=speed_band,
        steering_band=steering_band,
        observed_speed=speed,
        observed_steering=steering,
    )


def violation_rate(verdicts: Sequence[ViolationVerdict]) -> float:
    if not verdicts:
        raise EmptyBatch("violation rate over zero verdicts")
    return sum(1 for v in verdicts if v.violated) / len(verdicts)


def per_ads_rates(verdicts: Sequence[ViolationVerdict]) -> dict[str, float]:
    """Violation rate per predictor id, sorted by id."""
    by_ads: dict[str, list[ViolationVerdict]] = {}
    for verdict in verdicts:
        by_ads.setdefault(verdict.ads_id, []).append(verdict)
    return {ads_id: violation_rate(group) for ads_id, group in sorted(by_ads.items())}


def judge_case(
    expected_behavior: str,
    source_by_ads: Mapping[str, PredictionSeries],
    followup_by_ads: Mapping[str, PredictionSeries],
    k: float = DEFAULT_BAND_K,
    left_positive: bool = True,
    case_id: str = "",
) -> list[ViolationVerdict]:
    """Shared bands from all predictors' source medians; one verdict per predictor."""
    ads_ids = sorted(source_by_ads)
    if sorted(followup_by_ads) != ads_ids:
        raise ValueError("source and follow-up predictions cover different predictors")
    source_summaries = [summarize(source_by_ads[a]) for a in ads_ids]
    bands = bands_from_source(source_summaries, k)
    return [
        judge(
            expected_behavior,
            summarize(followup_by_ads[ads_id]),
            bands,
            left_positive=left_positive,
            ads_id=ads_id,
            case_id=case_id,
        )
        for ads_id in ads_ids
    ]
