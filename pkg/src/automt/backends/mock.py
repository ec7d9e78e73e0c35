"""Deterministic in-process backends.

Every response is a pure function of (scenario, seed, request bytes): the
seed comes from AUTOMT_MOCK_SEED plus the endpoint URL, randomness is a
splitmix64 stream keyed by blake2b digests, and images are re-encoded with
sorted metadata so identical requests yield identical bytes on any platform.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import re
from dataclasses import dataclass
from typing import Callable
from urllib.parse import parse_qsl, urlsplit

import numpy as np
from PIL import Image, PngImagePlugin

from ..errors import EditRejected
from ..ontology import canonicalize

REFUSAL_MARKER = "[mock-refusal] no scripted reply"

# PNG text-chunk keys the mocks read and write.
TAG_ROAD = "automt-road"
TAG_CASE = "automt-case"
TAG_ROLE = "automt-role"
TAG_EDITED = "automt-edited"
TAG_FRAME = "automt-frame"

_MASK64 = (1 << 64) - 1


def _digest(*parts: bytes) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(len(part).to_bytes(4, "little"))
        h.update(part)
    return int.from_bytes(h.digest(), "little")


class _Stream:
    """splitmix64 pseudo-random stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return self.u64() / 2.0**64

    def choice(self, seq):
        return seq[self.u64() % len(seq)]


def instruction_tag(instruction: str) -> str:
    """Short stable tag the edit mock stamps for a given instruction."""
    return hashlib.sha256(canonicalize(instruction).encode()).hexdigest()[:8]


# --- PNG plumbing ---


def _load_png(b64_or_bytes) -> tuple[Image.Image, dict[str, str]]:
    data = base64.b64decode(b64_or_bytes) if isinstance(b64_or_bytes, str) else b64_or_bytes
    img = Image.open(io.BytesIO(data))
    img.load()
    text = {str(k): str(v) for k, v in getattr(img, "text", {}).items()}
    return img.convert("RGB"), text


def png_bytes(img: Image.Image, text: dict[str, str] | None = None) -> bytes:
    info = PngImagePlugin.PngInfo()
    for key in sorted(text or {}):
        info.add_text(key, (text or {})[key])
    buf = io.BytesIO()
    img.save(buf, format="PNG", pnginfo=info)
    return buf.getvalue()


def png_text(data: bytes) -> dict[str, str]:
    img = Image.open(io.BytesIO(data))
    img.load()
    return {str(k): str(v) for k, v in getattr(img, "text", {}).items()}


# --- scripted scenarios ---


@dataclass(frozen=True)
class MockScenario:
    """Scripted chat behavior layered over a builtin scenario.

    rules: ordered (regex, response) pairs tried against the chat prompt;
    a response may be a string or a callable taking the request body.
    Unmatched chat prompts and all non-chat requests fall through to the
    builtin `fallback` scenario.
    """

    seed: int = 0
    rules: tuple[tuple[str, str | Callable[[dict], str]], ...] = ()
    fallback: str = "default"


_REGISTRY: dict[str, MockScenario] = {}


def register_scenario(scenario_id: str, scenario: MockScenario) -> None:
    _REGISTRY[scenario_id] = scenario


def clear_registered_scenarios() -> None:
    _REGISTRY.clear()


# --- handlers ---


def _embed_vector(base: int, text: str, dim: int) -> list[float]:
    stream = _Stream(_digest(base.to_bytes(8, "little"), b"embed", text.encode()))
    vec = np.array([stream.uniform() * 2.0 - 1.0 for _ in range(dim)])
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return [float(x) for x in vec / norm]


def _keyed_or_synth_vector(base: int, text: str, dim: int) -> list[float]:
    # "vec:1,0,..." returns the literal vector; used to script exact geometry.
    if text.startswith("vec:"):
        return [float(x) for x in text[4:].split(",")]
    return _embed_vector(base, text, dim)


def _handle_embed(base: int, params: dict, body: dict) -> dict:
    dim = int(params.get("dim", 64))
    return {"vectors": [_keyed_or_synth_vector(base, t, dim) for t in body["texts"]]}


_STAMP_SIZE_FRACTION = 5


def _handle_edit(base: int, params: dict, body: dict) -> dict:
    mode = body["mode"]
    if mode == "add" and not body.get("mask_classes"):
        raise EditRejected("add mode requires mask_classes")
    img, text = _load_png(body["image_b64"])
    arr = np.asarray(img, dtype=np.uint16).copy()
    h, w = arr.shape[:2]
    key = _digest(base.to_bytes(8, "little"), b"edit", canonicalize(body["instruction"]).encode())
    stream = _Stream(key)
    colors = [(stream.u64() % 256, stream.u64() % 256, stream.u64() % 256) for _ in range(3)]
    if mode == "add":
        rw = max(w // _STAMP_SIZE_FRACTION, 4)
        rh = max(h // _STAMP_SIZE_FRACTION, 4)
        if body.get("placement") == "roadside":
            x0, y0 = max(w - rw - 2, 0), max((h - rh) // 2, 0)
        else:
            x0, y0 = max((w - rw) // 2, 0), max(h - rh - 2, 0)
        block = arr[y0 : y0 + rh, x0 : x0 + rw]
        third = max(block.shape[0] // 3, 1)
        for i, color in enumerate(colors):
            block[i * third : (i + 1) * third if i < 2 else block.shape[0], :] = color
    else:
        tint = np.array(colors[0], dtype=np.uint16)
        arr = (arr * 65 + tint * 35) // 100
    text[TAG_EDITED] = instruction_tag(body["instruction"])
    out = Image.fromarray(arr.astype(np.uint8), "RGB")
    return {"image_b64": base64.b64encode(png_bytes(out, text)).decode("ascii")}


def _handle_video(base: int, params: dict, body: dict) -> dict:
    img, text = _load_png(body["image_b64"])
    arr = np.asarray(img, dtype=np.uint8)
    frames = []
    size = min(16, arr.shape[0], arr.shape[1])
    for i in range(int(body["frame_count"])):
        frame = arr.copy()
        stream = _Stream(_digest(base.to_bytes(8, "little"), b"video", i.to_bytes(4, "little")))
        color = (stream.u64() % 256, stream.u64() % 256, stream.u64() % 256)
        frame[0:size, 0:size] = color
        chunk_text = dict(text)
        chunk_text[TAG_FRAME] = str(i)
        frames.append(
            base64.b64encode(png_bytes(Image.fromarray(frame, "RGB"), chunk_text)).decode("ascii")
        )
    return {"frames": frames}


def _frame_meta(frames_b64: list[str]) -> tuple[int | None, bool]:
    """(case id, is_followup) read from the frames' text chunks."""
    case_id: int | None = None
    followup = False
    for encoded in frames_b64:
        text = png_text(base64.b64decode(encoded))
        if case_id is None and TAG_CASE in text:
            try:
                case_id = int(text[TAG_CASE])
            except ValueError:
                case_id = None
        if TAG_FRAME in text or TAG_EDITED in text or text.get(TAG_ROLE) == "followup":
            followup = True
    return case_id, followup


def _handle_predict(base: int, params: dict, body: dict) -> dict:
    speeds, steers = [], []
    for encoded in body["frames"]:
        raw = base64.b64decode(encoded)
        stream = _Stream(_digest(base.to_bytes(8, "little"), b"predict", raw))
        speeds.append(round(2.0 + 10.0 * stream.uniform(), 6))
        steers.append(round(0.6 * (stream.uniform() - 0.5), 6))
    return {"speed_mps": speeds, "steering_rad": steers}


def _scripted_predict(params: dict, body: dict, base: int) -> dict:
    """Per-case scripted compliance for violation-rate reproduction.

    Source predictions depend only on the case tag (identical for every
    endpoint), so cross-predictor bands are degenerate and the scripted
    outcome is exact.
    """
    behavior = params.get("behavior", "slowdown")
    violate_below = int(params.get("violate", 0))
    case_id, followup = _frame_meta(body["frames"])
    if case_id is None:
        return _handle_predict(base, params, body)
    n = len(body["frames"])
    s0 = 5.0 + (case_id % 7) * 0.5
    st0 = ((case_id % 5) - 2) * 0.05
    speed, steer = s0, st0
    if followup:
        violate = case_id < violate_below
        if behavior == "slowdown":
            speed = s0 if violate else s0 * 0.1
        elif behavior == "keepcurrent":
            speed = s0 + 3.0 if violate else s0
        elif behavior == "turnleft":
            steer = st0 if violate else max(st0, 0.0) + 0.5
        elif behavior == "turnright":
            steer = st0 if violate else min(st0, 0.0) - 0.5
    return {"speed_mps": [speed] * n, "steering_rad": [steer] * n}


# --- chat synthesis for the "pipeline" scenario ---


def _extract_options(prompt: str, label: str) -> list[str]:
    match = re.search(rf"(?m)^{re.escape(label)}: (.+)$", prompt)
    if not match:
        return []
    return [item.strip() for item in match.group(1).split(";") if item.strip()]


def _article(phrase: str) -> str:
    return "an" if phrase[:1] in "aeiou" else "a"


def _synth_mr_reply(base: int, prompt: str) -> str:
    roads = _extract_options(prompt, "Road Type options")
    adds = _extract_options(prompt, "Add-manipulation options")
    replaces = _extract_options(prompt, "Replace-manipulation options")
    behaviors = _extract_options(prompt, "Expected Behavior options")
    rule_match = re.search(r'User: Traffic rule: "(.*)"\s*$', prompt, re.DOTALL)
    system_match = re.search(r"(?m)^When (\S+) Manipulation$", prompt)
    if not (roads and behaviors and (adds or replaces) and rule_match):
        return REFUSAL_MARKER
    system = system_match.group(1) if system_match else "AutoMT"
    stream = _Stream(_digest(base.to_bytes(8, "little"), b"parse", rule_match.group(1).encode()))
    road = "any roads" if stream.uniform() < 0.15 else stream.choice(roads)
    use_adds = bool(adds) and (not replaces or stream.uniform() < 0.7)
    if use_adds:
        name = stream.choice(adds)
        placement = stream.choice(["on the road", "on the roadside", ""])
        phrase = f"{name} {placement}".strip()
        when = f"When {system} adds {_article(phrase)} {phrase}"
    else:
        name = stream.choice(replaces)
        when = f"When {system} replaces the weather with {name}"
    behavior = stream.choice(behaviors)
    given = (
        "Given the ego-vehicle approaches to any roads"
        if road == "any roads"
        else f"Given the ego-vehicle approaches to {_article(road)} {road}"
    )
    return "\n".join((given, when, f"Then ego-vehicle should {behavior}"))


def _synth_judgement(base: int, prompt: str, p_yes: float = 0.85) -> str:
    stream = _Stream(_digest(base.to_bytes(8, "little"), b"selfcheck", prompt.encode()))
    answers = ["yes" if stream.uniform() < p_yes else "no" for _ in range(3)]
    return json.dumps(answers)


def _image_tags(body: dict, key: str) -> list[str | None]:
    tags = []
    for encoded in body.get("images", []):
        text = png_text(base64.b64decode(encoded))
        tags.append(text.get(key))
    return tags


def _synth_scene_reply(base: int, body: dict) -> str:
    roads = ["intersection", "crosswalk", "field path"]
    tags = [t for t in _image_tags(body, TAG_ROAD) if t]
    stream = _Stream(_digest(base.to_bytes(8, "little"), b"scene", _body_bytes(body)))
    road = tags[len(tags) // 2] if tags else stream.choice(roads)
    time = stream.choice(["morning", "afternoon", "evening"])
    weather = stream.choice(["clear", "cloudy", "overcast"])
    return f"time: {time}, weather: {weather}, road type: {road}, objects: cars, buildings, trees"


def _synth_match_reply(prompt: str) -> str:
    rows = re.findall(r"(?m)^Index: (\d+) \| Execution Count: (\d+)", prompt)
    if not rows:
        return REFUSAL_MARKER
    best = min(range(len(rows)), key=lambda i: (int(rows[i][1]), i))
    return f"Index: {rows[best][0]}"


def _synth_road_match(base: int, body: dict) -> str:
    tags = _image_tags(body, TAG_ROAD)
    if len(tags) >= 2 and tags[0] and tags[1]:
        return "yes" if tags[0] == tags[1] else "no"
    stream = _Stream(_digest(base.to_bytes(8, "little"), b"roadmatch", _body_bytes(body)))
    return "yes" if stream.uniform() < 0.8 else "no"


def _synth_manipulation_check(base: int, body: dict) -> str:
    prompt = body["prompt"]
    images = body.get("images", [])
    match = re.search(r'instruction: "(.+?)"', prompt, re.DOTALL)
    if len(images) < 2 or not match:
        return REFUSAL_MARKER
    original, followup = base64.b64decode(images[0]), base64.b64decode(images[1])
    if original == followup:
        return "no"
    expected = instruction_tag(match.group(1))
    if png_text(followup).get(TAG_EDITED) == expected:
        return "yes"
    stream = _Stream(_digest(base.to_bytes(8, "little"), b"manipcheck", _body_bytes(body)))
    return "yes" if stream.uniform() < 0.5 else "no"


def _pipeline_chat(base: int, params: dict, body: dict) -> str:
    prompt = body["prompt"]
    if '"Given-When-Then" metamorphic relations' in prompt:
        return _synth_mr_reply(base, prompt)
    if "generate a JSON answer" in prompt:
        return _synth_judgement(base, prompt, float(params.get("p_yes", 0.85)))
    if "Analyze this driving scenario" in prompt:
        return _synth_scene_reply(base, body)
    if "select one MR from the retrieved context" in prompt:
        return _synth_match_reply(prompt)
    if "Is the road type in the second image the same" in prompt:
        return _synth_road_match(base, body)
    if "align with the manipulation instruction" in prompt:
        return _synth_manipulation_check(base, body)
    return REFUSAL_MARKER


_EXAMPLE_MR_TEXT = (
    "Given the ego-vehicle approaches to an intersection\n"
    "When {system} adds a red light on the roadside\n"
    "Then ego-vehicle should slow down"
)


def _example_chat(base: int, params: dict, body: dict) -> str:
    prompt = body["prompt"]
    if '"Given-When-Then" metamorphic relations' in prompt:
        system_match = re.search(r"(?m)^When (\S+) Manipulation$", prompt)
        system = system_match.group(1) if system_match else "AutoMT"
        return _EXAMPLE_MR_TEXT.format(system=system)
    if "generate a JSON answer" in prompt:
        return '["yes", "yes", "yes"]'
    return REFUSAL_MARKER


def _body_bytes(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def handle(url: str, global_seed: int, path: str, body: dict) -> dict:
    """Serve one request for a mock endpoint URL."""
    split = urlsplit(url)
    scenario_id = split.path
    params = dict(parse_qsl(split.query))
    base = _digest(str(global_seed).encode(), url.encode())

    registered = _REGISTRY.get(scenario_id)
    if registered is not None:
        base = _digest(base.to_bytes(8, "little"), str(registered.seed).encode())
        if path == "chat":
            for pattern, response in registered.rules:
                if re.search(pattern, body["prompt"], re.DOTALL):
                    text = response(body) if callable(response) else response
                    return {"text": text}
        scenario_id = registered.fallback
        split = urlsplit(f"mock:{scenario_id}")
        params = dict(parse_qsl(split.query))

    if path == "chat":
        if scenario_id == "pipeline":
            return {"text": _pipeline_chat(base, params, body)}
        if scenario_id == "example-mr":
            return {"text": _example_chat(base, params, body)}
        return {"text": REFUSAL_MARKER}
    if path == "embed":
        return _handle_embed(base, params, body)
    if path == "edit":
        return _handle_edit(base, params, body)
    if path == "video":
        return _handle_video(base, params, body)
    if path == "predict":
        if scenario_id == "predict-script":
            return _scripted_predict(params, body, base)
        return _handle_predict(base, params, body)
    raise ValueError(f"unknown wire path: {path!r}")
