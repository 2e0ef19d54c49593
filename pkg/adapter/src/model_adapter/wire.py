"""Request/response codec for the /v1/generate wire protocol.

Requests carry the image as base64 rgb8 bytes with explicit dimensions,
the top-k width to report, and decode settings.  Responses carry the
decode length, one record per generated position with the EOS probability
and the k largest next-token probabilities, the decoded text, and the
server-side decode time.  Response JSON is canonical (sorted keys,
compact separators).

Structural problems raise BadRequestError (HTTP 400); well-formed
requests asking for something unsupported raise UnsupportedRequestError
(HTTP 422).
"""

from __future__ import annotations

import base64
import binascii
import json
from dataclasses import dataclass

import numpy as np

from .errors import BadRequestError, UnsupportedRequestError

ENCODING = "rgb8_base64"
DEFAULT_MAX_NEW_TOKENS = 1024
DEFAULT_STRATEGY = "greedy"


@dataclass(frozen=True)
class WireRequest:
    """A validated generation request."""

    image: np.ndarray
    topk: int
    max_new_tokens: int
    strategy: str


def _require(doc: dict, key: str, kind: type, where: str):
    if key not in doc:
        raise BadRequestError(f"missing field {where}{key}")
    value = doc[key]
    if kind is int and isinstance(value, bool):
        raise BadRequestError(f"{where}{key} must be {kind.__name__}")
    if not isinstance(value, kind):
        raise BadRequestError(f"{where}{key} must be {kind.__name__}")
    return value


def parse_request(body: bytes) -> WireRequest:
    try:
        doc = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise BadRequestError(f"request body is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadRequestError("request body must be a JSON object")

    image_doc = _require(doc, "image", dict, "")
    topk = _require(doc, "topk", int, "")
    if topk < 2:
        raise UnsupportedRequestError(f"topk must be >= 2, got {topk}")

    encoding = _require(image_doc, "encoding", str, "image.")
    if encoding != ENCODING:
        raise UnsupportedRequestError(f"unsupported image encoding {encoding!r}")
    height = _require(image_doc, "height", int, "image.")
    width = _require(image_doc, "width", int, "image.")
    channels = _require(image_doc, "channels", int, "image.")
    if channels != 3:
        raise UnsupportedRequestError(f"only 3-channel images are served, got {channels}")
    if height < 1 or width < 1:
        raise UnsupportedRequestError(f"bad image dimensions {height}x{width}")
    data = _require(image_doc, "data", str, "image.")
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadRequestError(f"image.data is not valid base64: {exc}") from exc
    if len(raw) != height * width * channels:
        raise BadRequestError(
            f"image.data holds {len(raw)} bytes, expected {height * width * channels}"
        )
    image = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, channels)

    decode = doc.get("decode", {})
    if not isinstance(decode, dict):
        raise BadRequestError("decode must be an object")
    strategy = decode.get("strategy", DEFAULT_STRATEGY)
    if not isinstance(strategy, str):
        raise BadRequestError("decode.strategy must be a string")
    if strategy != "greedy":
        raise UnsupportedRequestError(f"unsupported decode strategy {strategy!r}")
    params = decode.get("params", {})
    if not isinstance(params, dict):
        raise BadRequestError("decode.params must be an object")
    if params:
        raise UnsupportedRequestError(
            f"unsupported decode params: {sorted(params)}"
        )
    max_new = decode.get("max_new_tokens", DEFAULT_MAX_NEW_TOKENS)
    if isinstance(max_new, bool) or not isinstance(max_new, int):
        raise BadRequestError("decode.max_new_tokens must be an integer")
    if max_new < 1:
        raise UnsupportedRequestError(f"decode.max_new_tokens must be >= 1, got {max_new}")

    return WireRequest(image=image, topk=topk, max_new_tokens=max_new, strategy=strategy)


def encode_response(
    eos_probs: np.ndarray,
    topk_probs: np.ndarray,
    text: str,
    server_decode_ms: float,
) -> bytes:
    positions = [
        {"eos_prob": float(e), "topk_probs": [float(p) for p in row]}
        for e, row in zip(eos_probs, topk_probs)
    ]
    doc = {
        "length": len(positions),
        "positions": positions,
        "text": text,
        "server_decode_ms": float(server_decode_ms),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
