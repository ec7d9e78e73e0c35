"""Backend endpoints and the client operations speaking the wire protocol."""

from __future__ import annotations

import base64
import hashlib
import json
import os
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from ..errors import BackendUnavailable, DimensionMismatch, VideoRejected
from . import http, mock, schemas


class BackendKind(Enum):
    CHAT = "chat"
    VISION = "vision"
    EMBED = "embed"
    EDIT = "edit"
    VIDEO = "video"
    PREDICT = "predict"


# Wire path served by each endpoint kind (vision shares the chat path).
_PATHS = {
    BackendKind.CHAT: "chat",
    BackendKind.VISION: "chat",
    BackendKind.EMBED: "embed",
    BackendKind.EDIT: "edit",
    BackendKind.VIDEO: "video",
    BackendKind.PREDICT: "predict",
}

ENV_SEED = "AUTOMT_MOCK_SEED"


@dataclass(frozen=True)
class BackendEndpoint:
    kind: BackendKind
    url: str
    timeout_ms: int = 30000
    retries: int = 2
    retry_base_s: float = 0.1
    max_images: int | None = None
    auth_token: str | None = None
    seed: int | None = None

    @property
    def is_mock(self) -> bool:
        return self.url.startswith("mock:")


def endpoint_from_env(kind: BackendKind, default: str = "mock:pipeline") -> BackendEndpoint:
    url = os.environ.get(f"AUTOMT_BACKEND_{kind.name}_URL", default)
    return BackendEndpoint(kind=kind, url=url)


def canonical_bytes(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode()


def request_id(body: dict) -> str:
    """Content hash identifying a request (idempotency / caching key)."""
    return hashlib.sha256(canonical_bytes(body)).hexdigest()


_COUNTS: Counter = Counter()
_COUNTS_LOCK = threading.Lock()


def call_count(kind: BackendKind | None = None) -> int:
    with _COUNTS_LOCK:
        if kind is None:
            return sum(_COUNTS.values())
        return _COUNTS[kind]


def reset_call_counts() -> None:
    with _COUNTS_LOCK:
        _COUNTS.clear()


def _mock_seed(endpoint: BackendEndpoint) -> int:
    if endpoint.seed is not None:
        return endpoint.seed
    return int(os.environ.get(ENV_SEED, "0"))


def _call(endpoint: BackendEndpoint, body: dict) -> dict:
    path = _PATHS[endpoint.kind]
    schemas.validate_request(path, body)
    with _COUNTS_LOCK:
        _COUNTS[endpoint.kind] += 1
    if endpoint.is_mock:
        response = mock.handle(endpoint.url, _mock_seed(endpoint), path, body)
    else:
        response = http.post_json(endpoint, path, body)
    schemas.validate_response(path, response)
    return response


def chat(endpoint: BackendEndpoint, prompt: str, images: list[bytes] | None = None) -> str:
    """Text completion; `images` makes it a vision request on the same path."""
    if endpoint.kind not in (BackendKind.CHAT, BackendKind.VISION):
        raise ValueError(f"chat needs a chat or vision endpoint, got {endpoint.kind}")
    body: dict = {"prompt": prompt}
    if images:
        body["images"] = [base64.b64encode(i).decode("ascii") for i in images]
    return _call(endpoint, body)["text"]


def embed(endpoint: BackendEndpoint, texts: list[str]) -> list[list[float]]:
    if endpoint.kind is not BackendKind.EMBED:
        raise ValueError(f"embed needs an embed endpoint, got {endpoint.kind}")
    if not texts:
        raise ValueError("embed requires at least one text")
    vectors = _call(endpoint, {"texts": list(texts)})["vectors"]
    if len(vectors) != len(texts):
        raise BackendUnavailable(f"expected {len(texts)} vectors, got {len(vectors)}")
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"inconsistent vector lengths: {sorted(dims)}")
    return vectors


def edit(
    endpoint: BackendEndpoint,
    image: bytes,
    instruction: str,
    mode: str,
    mask_classes: list[str] | None = None,
    placement: str | None = None,
) -> bytes:
    if endpoint.kind is not BackendKind.EDIT:
        raise ValueError(f"edit needs an edit endpoint, got {endpoint.kind}")
    body: dict = {
        "image_b64": base64.b64encode(image).decode("ascii"),
        "instruction": instruction,
        "mode": mode,
    }
    if mask_classes is not None:
        body["mask_classes"] = sorted(mask_classes)
    if placement is not None:
        body["placement"] = placement
    return base64.b64decode(_call(endpoint, body)["image_b64"])


def video(
    endpoint: BackendEndpoint,
    keyframe: bytes,
    speed_mps: list[float],
    steering_rad: list[float],
    frame_count: int,
) -> list[bytes]:
    if endpoint.kind is not BackendKind.VIDEO:
        raise ValueError(f"video needs a video endpoint, got {endpoint.kind}")
    if frame_count < 1:
        raise ValueError("frame_count must be >= 1")
    if len(speed_mps) != frame_count or len(steering_rad) != frame_count:
        raise ValueError("telemetry series must match frame_count")
    body = {
        "image_b64": base64.b64encode(keyframe).decode("ascii"),
        "speed_mps": list(speed_mps),
        "steering_rad": list(steering_rad),
        "frame_count": frame_count,
    }
    frames = _call(endpoint, body)["frames"]
    if len(frames) != frame_count:
        raise VideoRejected(f"expected {frame_count} frames, got {len(frames)}")
    return [base64.b64decode(f) for f in frames]


def predict(endpoint: BackendEndpoint, frames: list[bytes]) -> tuple[list[float], list[float]]:
    if endpoint.kind is not BackendKind.PREDICT:
        raise ValueError(f"predict needs a predict endpoint, got {endpoint.kind}")
    if not frames:
        raise ValueError("predict requires at least one frame")
    body = {"frames": [base64.b64encode(f).decode("ascii") for f in frames]}
    response = _call(endpoint, body)
    return list(response["speed_mps"]), list(response["steering_rad"])
