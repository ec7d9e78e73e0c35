"""Wire protocol to model services plus deterministic in-process mocks."""

from .mock import (
    REFUSAL_MARKER,
    TAG_CASE,
    TAG_EDITED,
    TAG_FRAME,
    TAG_ROAD,
    TAG_ROLE,
    MockScenario,
    clear_registered_scenarios,
    instruction_tag,
    png_bytes,
    png_text,
    register_scenario,
)
from .protocol import (
    BackendEndpoint,
    BackendKind,
    call_count,
    canonical_bytes,
    chat,
    edit,
    embed,
    endpoint_from_env,
    predict,
    request_id,
    reset_call_counts,
    video,
)
from .schemas import (
    ERROR_SCHEMA,
    REQUEST_SCHEMAS,
    RESPONSE_SCHEMAS,
    schemas_json,
    validate_request,
    validate_response,
)

__all__ = [
    "BackendEndpoint",
    "BackendKind",
    "ERROR_SCHEMA",
    "MockScenario",
    "REFUSAL_MARKER",
    "REQUEST_SCHEMAS",
    "RESPONSE_SCHEMAS",
    "TAG_CASE",
    "TAG_EDITED",
    "TAG_FRAME",
    "TAG_ROAD",
    "TAG_ROLE",
    "call_count",
    "canonical_bytes",
    "chat",
    "clear_registered_scenarios",
    "edit",
    "embed",
    "endpoint_from_env",
    "instruction_tag",
    "png_bytes",
    "png_text",
    "predict",
    "register_scenario",
    "request_id",
    "reset_call_counts",
    "schemas_json",
    "validate_request",
    "validate_response",
    "video",
]
