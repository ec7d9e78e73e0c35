"""HTTP transport for remote backends, with retry/backoff and error mapping."""

from __future__ import annotations

import time
from typing import TYPE_CHECKING

import requests

from ..errors import BackendUnavailable, EditRejected, Timeout, VideoRejected

if TYPE_CHECKING:  # pragma: no cover
    from .protocol import BackendEndpoint

# Error codes a backend may return in its {code, message} body.
_CODE_ERRORS = {
    "edit_rejected": EditRejected,
    "video_rejected": VideoRejected,
}


def post_json(endpoint: "BackendEndpoint", path: str, body: dict) -> dict:
    url = endpoint.url.rstrip("/") + "/v1/" + path
    headers = {}
    if endpoint.auth_token:
        headers["Authorization"] = f"Bearer {endpoint.auth_token}"
    attempts = endpoint.retries + 1
    last_error: Exception | None = None
    all_timeouts = True
    for attempt in range(attempts):
        if attempt:
            time.sleep(endpoint.retry_base_s * 2 ** (attempt - 1))
        try:
            response = requests.post(
                url, json=body, headers=headers, timeout=endpoint.timeout_ms / 1000.0
            )
        except requests.Timeout as exc:
            last_error = exc
            continue
        except requests.RequestException as exc:
            last_error = exc
            all_timeouts = False
            continue
        all_timeouts = False
        if response.status_code < 300:
            return response.json()
        if response.status_code >= 500:
            last_error = BackendUnavailable(f"{url} -> HTTP {response.status_code}")
            continue
        # 4xx: a definitive backend answer, not worth retrying.
        try:
            error = response.json()
            code, message = error.get("code", ""), error.get("message", "")
        except ValueError:
            code, message = "", response.text[:200]
        error_type = _CODE_ERRORS.get(code, BackendUnavailable)
        raise error_type(f"{url} -> {code or response.status_code}: {message}")
    if last_error is not None and all_timeouts:
        raise Timeout(f"{url}: every attempt timed out") from last_error
    raise BackendUnavailable(f"{url}: {last_error}") from last_error
