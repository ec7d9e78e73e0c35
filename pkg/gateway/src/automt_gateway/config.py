"""Gateway configuration: the route table mapping wire kinds to adapters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

WIRE_KINDS = ("chat", "embed", "edit", "video", "predict")


@dataclass(frozen=True)
class GatewayRoute:
    kind: str
    adapter: str
    model: str = ""
    credentials_env: str | None = None
    options: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GatewayConfig:
    routes: dict[str, GatewayRoute]
    cache_size: int = 256
    upstream_concurrency: int = 8

    def __post_init__(self):
        for kind in WIRE_KINDS:
            if kind not in self.routes:
                raise ConfigError(f"no route configured for wire kind {kind!r}")
        for kind in self.routes:
            if kind not in WIRE_KINDS:
                raise ConfigError(f"unroutable wire kind in config: {kind!r}")


def stub_config() -> GatewayConfig:
    """All-stub route table; serves the full protocol without upstreams."""
    return GatewayConfig(
        routes={
            "chat": GatewayRoute("chat", "stub-chat", model="stub"),
            "embed": GatewayRoute("embed", "stub-embed", model="stub", options={"dim": 64}),
            "edit": GatewayRoute("edit", "composite-edit", model="stub"),
            "video": GatewayRoute("video", "stub-video", model="stub"),
            "predict": GatewayRoute("predict", "stub-predict", model="stub"),
        }
    )


def load_gateway_config(path: str | Path) -> GatewayConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid gateway config JSON: {exc}") from exc
    routes_doc = doc.get("routes")
    if not isinstance(routes_doc, dict):
        raise ConfigError("config needs a 'routes' object")
    routes = {}
    for kind, entry in routes_doc.items():
        if not isinstance(entry, dict) or "adapter" not in entry:
            raise ConfigError(f"route {kind!r} needs an 'adapter' name")
        routes[kind] = GatewayRoute(
            kind=kind,
            adapter=str(entry["adapter"]),
            model=str(entry.get("model", "")),
            credentials_env=entry.get("credentials_env"),
            options=dict(entry.get("options", {})),
        )
    return GatewayConfig(
        routes=routes,
        cache_size=int(doc.get("cache_size", 256)),
        upstream_concurrency=int(doc.get("upstream_concurrency", 8)),
    )
