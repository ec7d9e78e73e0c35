"""Gateway error types and their wire mapping."""


class ConfigError(Exception):
    """The route table cannot serve the wire protocol."""


class BadRequest(Exception):
    """The request body is malformed (HTTP 400)."""


class EditRejectedError(Exception):
    """The edit request violates the edit contract (HTTP 422)."""


class UpstreamError(Exception):
    """An upstream model call failed (HTTP 502)."""


class UpstreamTimeout(Exception):
    """An upstream model call timed out (HTTP 504)."""
