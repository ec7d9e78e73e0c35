"""FastAPI application serving the backend wire protocol."""

from __future__ import annotations

import hashlib
import json
import threading
from collections import OrderedDict

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from automt.backends.schemas import validate_request, validate_response

from .adapters import Adapter, build_adapter
from .config import WIRE_KINDS, GatewayConfig, stub_config
from .errors import BadRequest, EditRejectedError, UpstreamError, UpstreamTimeout

_ERROR_STATUS = {
    BadRequest: (400, "bad_request"),
    EditRejectedError: (422, "edit_rejected"),
    UpstreamError: (502, "upstream_error"),
    UpstreamTimeout: (504, "upstream_timeout"),
}


class _ResponseCache:
    """Bounded request-hash cache making retried requests idempotent."""

    def __init__(self, size: int):
        self._size = size
        self._entries: OrderedDict[str, dict] = OrderedDict()
        self._lock = threading.Lock()

    @staticmethod
    def key(kind: str, body: dict) -> str:
        canonical = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return kind + ":" + hashlib.sha256(canonical.encode()).hexdigest()

    def get(self, key: str) -> dict | None:
        with self._lock:
            if key in self._entries:
                self._entries.move_to_end(key)
                return self._entries[key]
        return None

    def put(self, key: str, value: dict) -> None:
        if self._size <= 0:
            return
        with self._lock:
            self._entries[key] = value
            self._entries.move_to_end(key)
            while len(self._entries) > self._size:
                self._entries.popitem(last=False)


def _error_response(exc: Exception) -> JSONResponse:
    for exc_type, (status, code) in _ERROR_STATUS.items():
        if isinstance(exc, exc_type):
            return JSONResponse(status_code=status, content={"code": code, "message": str(exc)})
    return JSONResponse(
        status_code=500, content={"code": "internal_error", "message": str(exc)}
    )


def create_app(config: GatewayConfig | None = None) -> FastAPI:
    """Build the gateway; raises ConfigError for an unservable route table."""
    config = config or stub_config()
    adapters: dict[str, Adapter] = {
        kind: build_adapter(route) for kind, route in config.routes.items()
    }
    cache = _ResponseCache(config.cache_size)
    limiter = threading.Semaphore(config.upstream_concurrency)
    app = FastAPI(title="automt model gateway")

    def serve(kind: str, body: dict) -> JSONResponse:
        try:
            validate_request(kind, body)
        except Exception as exc:
            return _error_response(BadRequest(f"request schema violation: {exc}"))
        key = cache.key(kind, body)
        cached = cache.get(key)
        if cached is not None:
            return JSONResponse(content=cached)
        try:
            with limiter:
                response = adapters[kind].handle(body)
            validate_response(kind, response)
        except Exception as exc:
            return _error_response(exc)
        cache.put(key, response)
        return JSONResponse(content=response)

    def _register(kind: str) -> None:
        async def endpoint(request: Request) -> JSONResponse:
            try:
                body = await request.json()
            except json.JSONDecodeError as exc:
                return _error_response(BadRequest(f"invalid JSON body: {exc}"))
            if not isinstance(body, dict):
                return _error_response(BadRequest("body must be a JSON object"))
            return serve(kind, body)

        app.post(f"/v1/{kind}")(endpoint)

    for kind in WIRE_KINDS:
        _register(kind)

    @app.get("/healthz")
    def healthz() -> dict:
        return {
            "status": "ok",
            "routes": {
                kind: {
                    "adapter": config.routes[kind].adapter,
                    "model": config.routes[kind].model,
                    "ready": adapters[kind].ready(),
                }
                for kind in sorted(adapters)
            },
        }

    return app
