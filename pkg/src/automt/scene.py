"""Source test-case loading and scene analysis into structured representations."""

from __future__ import annotations

import json
import re
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .backends import BackendEndpoint, chat
from .errors import MalformedSceneReply, ParseError
from .ontology import canonicalize
from .prompts import SCENE_PROMPT

KMH_PER_MPS = 3.6
DEFAULT_FRAME_CAP = 10


@dataclass(frozen=True)
class SourceTestCase:
    id: str
    frames: tuple[Path, ...]
    speed_mps: tuple[float, ...]
    steering_rad: tuple[float, ...]
    region: str = ""

    def __post_init__(self):
        if not self.frames:
            raise ValueError(f"case {self.id!r} has no frames")
        if not (len(self.frames) == len(self.speed_mps) == len(self.steering_rad)):
            raise ValueError(
                f"case {self.id!r}: frames/speed/steering lengths differ "
                f"({len(self.frames)}/{len(self.speed_mps)}/{len(self.steering_rad)})"
            )

    def frame_bytes(self) -> list[bytes]:
        return [path.read_bytes() for path in self.frames]


@dataclass(frozen=True)
class SceneFields:
    time: str
    weather: str
    road_type: str
    objects: str


@dataclass(frozen=True)
class TestCaseRepresentation:
    """Scene fields plus median ego telemetry; speeds canonical in m/s."""

    case_id: str
    time: str
    weather: str
    road_type: str
    objects: str
    ego_speed_mps: float
    ego_steering_rad: float

    @property
    def ego_speed_kmh(self) -> float:
        return KMH_PER_MPS * self.ego_speed_mps


_SCENE_KEYS = ("time", "weather", "road type", "objects")


def parse_scene_reply(text: str) -> SceneFields:
    """Parse the "time: , weather: , road type: , objects:" reply format.

    Trailing prose after the objects value is kept as part of objects.
    """
    positions = {}
    for key in _SCENE_KEYS:
        match = re.search(rf"(?i)\b{key}\s*:", text)
        if match is None:
            raise MalformedSceneReply(f"reply missing {key!r}: {text[:120]!r}")
        positions[key] = (match.start(), match.end())
    ordered = sorted(positions.items(), key=lambda item: item[1][0])
    values = {}
    for (key, (_, value_start)), nxt in zip(ordered, ordered[1:] + [None]):
        value_end = nxt[1][0] if nxt else len(text)
        values[key] = text[value_start:value_end].strip().strip(",;").strip()
    return SceneFields(
        time=values["time"],
        weather=values["weather"],
        road_type=values["road type"],
        objects=values["objects"],
    )


def analyze_scene(
    case: SourceTestCase,
    vision_backend: BackendEndpoint,
    frame_cap: int = DEFAULT_FRAME_CAP,
) -> SceneFields:
    """Describe a case's frames via the vision backend.

    Single-image backends (max_images=1) receive the middle frame; otherwise
    all frames up to the cap go in one call.
    """
    frames = case.frame_bytes()
    if vision_backend.max_images == 1:
        selected = [frames[len(frames) // 2]]
    else:
        cap = vision_backend.max_images or frame_cap
        selected = frames[: min(cap, frame_cap)]
    reply = chat(vision_backend, SCENE_PROMPT, images=selected)
    return parse_scene_reply(reply)


def build_representation(case: SourceTestCase, fields: SceneFields) -> TestCaseRepresentation:
    """Median ego telemetry plus canonicalized road type."""
    return TestCaseRepresentation(
        case_id=case.id,
        time=fields.time.strip(),
        weather=fields.weather.strip(),
        road_type=canonicalize(fields.road_type),
        objects=fields.objects.strip(),
        ego_speed_mps=float(statistics.median(case.speed_mps)),
        ego_steering_rad=float(statistics.median(case.steering_rad)),
    )


def serialize_representation(rep: TestCaseRepresentation) -> dict:
    """JSONL record: display block plus full-precision canonical fields."""
    return {
        "case_id": rep.case_id,
        "Test Case Representation": {
            "Time": rep.time,
            "Weather": rep.weather,
            "RoadType": rep.road_type,
            "Objects": rep.objects,
            "EgoVehicle": {
                "Speed": f"{rep.ego_speed_kmh:.3f} km/h",
                "Steering Angle": f"{rep.ego_steering_rad:.3f} rad",
            },
        },
        "ego_speed_mps": rep.ego_speed_mps,
        "ego_steering_rad": rep.ego_steering_rad,
    }


def parse_representation(record: dict) -> TestCaseRepresentation:
    block = record["Test Case Representation"]
    if "ego_speed_mps" in record:
        speed_mps = float(record["ego_speed_mps"])
        steering = float(record["ego_steering_rad"])
    else:
        speed_mps = float(block["EgoVehicle"]["Speed"].split()[0]) / KMH_PER_MPS
        steering = float(block["EgoVehicle"]["Steering Angle"].split()[0])
    return TestCaseRepresentation(
        case_id=record["case_id"],
        time=block["Time"],
        weather=block["Weather"],
        road_type=block["RoadType"],
        objects=block["Objects"],
        ego_speed_mps=speed_mps,
        ego_steering_rad=steering,
    )


def representation_query_text(rep: TestCaseRepresentation) -> str:
    """Retrieval query string: the serialized display block."""
    return json.dumps(serialize_representation(rep)["Test Case Representation"], sort_keys=True)


# --- corpus layout: one directory per case with frame_%03d.png + telemetry.json ---


def load_case(directory: str | Path, region: str = "") -> SourceTestCase:
    directory = Path(directory)
    frames = tuple(sorted(directory.glob("frame_*.png")))
    telemetry_path = directory / "telemetry.json"
    if not frames or not telemetry_path.exists():
        raise ParseError(f"{directory} is not a test-case directory")
    try:
        telemetry = json.loads(telemetry_path.read_text(encoding="utf-8"))
        speed = tuple(float(x) for x in telemetry["speed_mps"])
        steering = tuple(float(x) for x in telemetry["steering_rad"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad telemetry in {directory}: {exc}") from exc
    try:
        return SourceTestCase(directory.name, frames, speed, steering, region)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def load_corpus(root: str | Path, region: str = "") -> list[SourceTestCase]:
    root = Path(root)
    cases = []
    for directory in sorted(p for p in root.iterdir() if p.is_dir()):
        cases.append(load_case(directory, region))
    if not cases:
        raise ParseError(f"no test-case directories under {root}")
    return cases


def analyze_corpus(
    cases: Sequence[SourceTestCase],
    vision_backend: BackendEndpoint,
    parallelism: int = 1,
) -> list[TestCaseRepresentation]:
    """One representation per case, in corpus order."""

    def task(case: SourceTestCase) -> TestCaseRepresentation:
        return build_representation(case, analyze_scene(case, vision_backend))

    if parallelism <= 1:
        return [task(case) for case in cases]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(task, cases))
