"""Adapters turning wire requests into upstream model calls.

Stub adapters are deterministic stand-ins so the gateway can serve the whole
protocol with no external models; HTTP adapters forward to real services.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
from typing import Callable

import numpy as np
import requests
from PIL import Image

from .config import GatewayRoute
from .errors import BadRequest, ConfigError, EditRejectedError, UpstreamError, UpstreamTimeout


class Adapter:
    """One upstream capability behind a wire route."""

    def __init__(self, route: GatewayRoute):
        self.route = route

    def ready(self) -> bool:
        return True

    def handle(self, body: dict) -> dict:
        raise NotImplementedError


def _digest(*parts: bytes) -> bytes:
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(len(part).to_bytes(4, "little"))
        h.update(part)
    return h.digest()


def _decode_image(b64: str) -> Image.Image:
    try:
        img = Image.open(io.BytesIO(base64.b64decode(b64)))
        img.load()
        return img.convert("RGB")
    except Exception as exc:
        raise BadRequest(f"undecodable image: {exc}") from exc


def _encode_image(img: Image.Image) -> str:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class StubChat(Adapter):
    def handle(self, body: dict) -> dict:
        seed = _digest(self.route.model.encode(), body["prompt"].encode())
        images = body.get("images", [])
        summary = f"[{self.route.model}] reply {seed.hex()[:12]}"
        if images:
            summary += f" (saw {len(images)} images)"
        return {"text": summary}


class StubEmbed(Adapter):
    def handle(self, body: dict) -> dict:
        dim = int(self.route.options.get("dim", 64))
        vectors = []
        for text in body["texts"]:
            stream = hashlib.shake_256(self.route.model.encode() + b"\x00" + text.encode())
            raw = np.frombuffer(stream.digest(dim * 8), dtype="<u8").astype(np.float64)
            centered = raw / 2.0**64 - 0.5
            norm = float(np.linalg.norm(centered)) or 1.0
            vectors.append([float(x) for x in centered / norm])
        return {"vectors": vectors}


class StubSegmenter(Adapter):
    """Editable-region mask: everything except a deterministic agent band."""

    def handle(self, body: dict) -> dict:
        img = _decode_image(body["image_b64"])
        w, h = img.size
        mask = np.full((h, w), 255, dtype=np.uint8)
        # pretend the requested agent classes occupy a center band
        if body.get("mask_classes"):
            band = h // 4
            mask[h // 2 - band // 2 : h // 2 + band // 2, :] = 0
        return {"image_b64": _encode_image(Image.fromarray(mask).convert("RGB"))}


class StubInpainter(Adapter):
    def handle(self, body: dict) -> dict:
        img = _decode_image(body["image_b64"])
        mask = _decode_image(body["mask_b64"]).convert("L")
        arr = np.asarray(img, dtype=np.uint8).copy()
        editable = np.asarray(mask, dtype=np.uint8) > 127
        key = _digest(body["instruction"].encode())
        color = np.array([key[0], key[1], key[2]], dtype=np.uint8)
        ys, xs = editable.nonzero()
        if len(ys):
            y0, x0 = int(ys.min()), int(xs.min())
            y1 = min(y0 + max((ys.max() - y0) // 3, 4), arr.shape[0])
            x1 = min(x0 + max((xs.max() - x0) // 3, 4), arr.shape[1])
            region = arr[y0:y1, x0:x1]
            region[editable[y0:y1, x0:x1]] = color
        return {"image_b64": _encode_image(Image.fromarray(arr))}


class StubInstructEditor(Adapter):
    def handle(self, body: dict) -> dict:
        img = _decode_image(body["image_b64"])
        arr = np.asarray(img, dtype=np.uint16)
        key = _digest(body["instruction"].encode())
        tint = np.array([key[0], key[1], key[2]], dtype=np.uint16)
        out = ((arr * 60 + tint * 40) // 100).astype(np.uint8)
        return {"image_b64": _encode_image(Image.fromarray(out))}


class CompositeEdit(Adapter):
    """Add: segmentation builds the mask, then inpainting. Replace: global
    instruction edit, no segmentation call."""

    def __init__(self, route: GatewayRoute, make_adapter: Callable[[str], Adapter]):
        super().__init__(route)
        options = route.options
        self.segmenter = make_adapter(options.get("segment", "stub-segment"))
        self.inpainter = make_adapter(options.get("inpaint", "stub-inpaint"))
        self.instruct = make_adapter(options.get("instruct", "stub-instruct"))

    def handle(self, body: dict) -> dict:
        mode = body["mode"]
        if mode == "add":
            if not body.get("mask_classes"):
                raise EditRejectedError("add mode requires mask_classes")
            _decode_image(body["image_b64"])  # reject undecodable input up front
            mask_reply = self.segmenter.handle(
                {"image_b64": body["image_b64"], "mask_classes": body["mask_classes"]}
            )
            return self.inpainter.handle(
                {
                    "image_b64": body["image_b64"],
                    "mask_b64": mask_reply["image_b64"],
                    "instruction": body["instruction"],
                }
            )
        return self.instruct.handle(
            {"image_b64": body["image_b64"], "instruction": body["instruction"]}
        )


class StubVideo(Adapter):
    def handle(self, body: dict) -> dict:
        img = _decode_image(body["image_b64"])
        arr = np.asarray(img, dtype=np.uint8)
        frames = []
        size = min(12, arr.shape[0], arr.shape[1])
        for i in range(int(body["frame_count"])):
            frame = arr.copy()
            key = _digest(self.route.model.encode(), i.to_bytes(4, "little"))
            frame[0:size, 0:size] = (key[0], key[1], key[2])
            frames.append(_encode_image(Image.fromarray(frame)))
        return {"frames": frames}


class StubPredictor(Adapter):
    def handle(self, body: dict) -> dict:
        speeds, steers = [], []
        for encoded in body["frames"]:
            key = _digest(self.route.model.encode(), encoded.encode())
            u1 = int.from_bytes(key[:8], "little") / 2.0**64
            u2 = int.from_bytes(key[8:], "little") / 2.0**64
            speeds.append(round(2.0 + 10.0 * u1, 6))
            steers.append(round(0.6 * (u2 - 0.5), 6))
        return {"speed_mps": speeds, "steering_rad": steers}


class HttpUpstream(Adapter):
    """Generic JSON POST passthrough; model endpoint and path come from options."""

    def handle(self, body: dict) -> dict:
        url = self.route.options.get("url")
        if not url:
            raise ConfigError(f"http adapter for {self.route.kind!r} needs options.url")
        headers = {}
        if self.route.credentials_env:
            token = os.environ.get(self.route.credentials_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        timeout = float(self.route.options.get("timeout_s", 30.0))
        payload = dict(body)
        if self.route.model:
            payload["model"] = self.route.model
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.Timeout as exc:
            raise UpstreamTimeout(f"{url} timed out") from exc
        except requests.RequestException as exc:
            raise UpstreamError(f"{url}: {exc}") from exc
        if response.status_code >= 300:
            raise UpstreamError(f"{url} -> HTTP {response.status_code}")
        try:
            return response.json()
        except json.JSONDecodeError as exc:
            raise UpstreamError(f"{url} returned non-JSON") from exc


_FACTORIES: dict[str, Callable[[GatewayRoute, Callable[[str], Adapter]], Adapter]] = {}


def register_adapter(name: str, factory) -> None:
    _FACTORIES[name] = factory


def _simple(cls):
    return lambda route, make: cls(route)


register_adapter("stub-chat", _simple(StubChat))
register_adapter("stub-embed", _simple(StubEmbed))
register_adapter("stub-segment", _simple(StubSegmenter))
register_adapter("stub-inpaint", _simple(StubInpainter))
register_adapter("stub-instruct", _simple(StubInstructEditor))
register_adapter("stub-video", _simple(StubVideo))
register_adapter("stub-predict", _simple(StubPredictor))
register_adapter("composite-edit", lambda route, make: CompositeEdit(route, make))
register_adapter("http", _simple(HttpUpstream))


def build_adapter(route: GatewayRoute) -> Adapter:
    factory = _FACTORIES.get(route.adapter)
    if factory is None:
        raise ConfigError(f"unknown adapter {route.adapter!r} for kind {route.kind!r}")

    def make(name: str) -> Adapter:
        sub_factory = _FACTORIES.get(name)
        if sub_factory is None:
            raise ConfigError(f"unknown sub-adapter {name!r}")
        sub_route = GatewayRoute(kind=route.kind, adapter=name, model=route.model,
                                 options=route.options)
        return sub_factory(sub_route, make)

    return factory(route, make)
