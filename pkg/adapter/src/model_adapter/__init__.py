"""Serve a small image-captioning model behind the /v1/generate protocol."""

from .config import AdapterConfig, config_from_dict, load_config
from .errors import (
    AdapterConfigError,
    AdapterError,
    BadRequestError,
    UnsupportedRequestError,
)
from .modeling import CaptioningModel, GenerationPayload, extract_topk, load_model
from .server import AdapterServer, serve
from .wire import WireRequest, encode_response, parse_request

__all__ = [
    "AdapterConfig",
    "AdapterConfigError",
    "AdapterError",
    "AdapterServer",
    "BadRequestError",
    "CaptioningModel",
    "GenerationPayload",
    "UnsupportedRequestError",
    "WireRequest",
    "config_from_dict",
    "encode_response",
    "extract_topk",
    "load_config",
    "load_model",
    "parse_request",
    "serve",
]
