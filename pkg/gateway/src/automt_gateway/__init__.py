"""Reference gateway serving the automt backend wire protocol."""

from .adapters import Adapter, build_adapter, register_adapter
from .app import create_app
from .config import GatewayConfig, GatewayRoute, load_gateway_config, stub_config
from .errors import BadRequest, ConfigError, EditRejectedError, UpstreamError, UpstreamTimeout

__all__ = [
    "Adapter",
    "BadRequest",
    "ConfigError",
    "EditRejectedError",
    "GatewayConfig",
    "GatewayRoute",
    "UpstreamError",
    "UpstreamTimeout",
    "build_adapter",
    "create_app",
    "load_gateway_config",
    "register_adapter",
    "stub_config",
]
