"""Published JSON schemas for the backend wire protocol.

Every request and response body exchanged with a backend (mock, HTTP, or
gateway) must validate against these documents.
"""

from __future__ import annotations

import json

from jsonschema import Draft7Validator

_B64_IMAGE = {"type": "string", "minLength": 1}
_NUMBER_ARRAY = {"type": "array", "items": {"type": "number"}}

REQUEST_SCHEMAS: dict[str, dict] = {
    "chat": {
        "type": "object",
        "properties": {
            "prompt": {"type": "string"},
            "images": {"type": "array", "items": _B64_IMAGE},
        },
        "required": ["prompt"],
        "additionalProperties": False,
    },
    "embed": {
        "type": "object",
        "properties": {
            "texts": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        },
        "required": ["texts"],
        "additionalProperties": False,
    },
    "edit": {
        "type": "object",
        "properties": {
            "image_b64": _B64_IMAGE,
            "mask_classes": {"type": "array", "items": {"type": "string"}},
            "placement": {"type": "string", "enum": ["on_road", "roadside"]},
            "instruction": {"type": "string"},
            "mode": {"type": "string", "enum": ["add", "replace"]},
        },
        "required": ["image_b64", "instruction", "mode"],
        "additionalProperties": False,
    },
    "video": {
        "type": "object",
        "properties": {
            "image_b64": _B64_IMAGE,
            "speed_mps": _NUMBER_ARRAY,
            "steering_rad": _NUMBER_ARRAY,
            "frame_count": {"type": "integer", "minimum": 1},
        },
        "required": ["image_b64", "speed_mps", "steering_rad", "frame_count"],
        "additionalProperties": False,
    },
    "predict": {
        "type": "object",
        "properties": {
            "frames": {"type": "array", "items": _B64_IMAGE, "minItems": 1},
        },
        "required": ["frames"],
        "additionalProperties": False,
    },
}

RESPONSE_SCHEMAS: dict[str, dict] = {
    "chat": {
        "type": "object",
        "properties": {"text": {"type": "string"}},
        "required": ["text"],
        "additionalProperties": False,
    },
    "embed": {
        "type": "object",
        "properties": {
            "vectors": {"type": "array", "items": _NUMBER_ARRAY, "minItems": 1},
        },
        "required": ["vectors"],
        "additionalProperties": False,
    },
    "edit": {
        "type": "object",
        "properties": {"image_b64": _B64_IMAGE},
        "required": ["image_b64"],
        "additionalProperties": False,
    },
    "video": {
        "type": "object",
        "properties": {"frames": {"type": "array", "items": _B64_IMAGE}},
        "required": ["frames"],
        "additionalProperties": False,
    },
    "predict": {
        "type": "object",
        "properties": {"speed_mps": _NUMBER_ARRAY, "steering_rad": _NUMBER_ARRAY},
        "required": ["speed_mps", "steering_rad"],
        "additionalProperties": False,
    },
}

ERROR_SCHEMA: dict = {
    "type": "object",
    "properties": {"code": {"type": "string"}, "message": {"type": "string"}},
    "required": ["code", "message"],
}

_VALIDATORS: dict[tuple[str, str], Draft7Validator] = {}


def _validator(direction: str, path: str) -> Draft7Validator:
    key = (direction, path)
    if key not in _VALIDATORS:
        table = REQUEST_SCHEMAS if direction == "request" else RESPONSE_SCHEMAS
        _VALIDATORS[key] = Draft7Validator(table[path])
    return _VALIDATORS[key]


def validate_request(path: str, body: dict) -> None:
    _validator("request", path).validate(body)


def validate_response(path: str, body: dict) -> None:
    _validator("response", path).validate(body)


def schemas_json() -> str:
    """All schemas as one JSON document (for export to other implementations)."""
    return json.dumps(
        {"request": REQUEST_SCHEMAS, "response": RESPONSE_SCHEMAS, "error": ERROR_SCHEMA},
        indent=2,
        sort_keys=True,
    )
