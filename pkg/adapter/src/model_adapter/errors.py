"""Error types for the adapter."""

from __future__ import annotations


class AdapterError(Exception):
    """Base class for adapter failures."""


class AdapterConfigError(AdapterError):
    """Invalid configuration or unloadable model."""


class BadRequestError(AdapterError):
    """Structurally broken request; served as HTTP 400."""


class UnsupportedRequestError(AdapterError):
    """Well-formed request the server cannot honor; served as HTTP 422."""
