"""Wire protocol: byte-exact request/response encoding and validation.

Requests carry the image as base64 row-major 8-bit RGB plus a requested
top-k size and decode options; responses carry, per generated position, the
EOS probability and the k largest full-vocabulary probabilities sorted
descending (probabilities, never logits).  JSON is emitted in canonical form
(sorted keys, no whitespace) so fixtures can be compared byte for byte.

Validation is total: no response that violates the contract ever reaches the
objective code, and every violation names the offending field.
"""

from __future__ import annotations

import base64
import binascii
import json

import numpy as np

from .errors import ConfigError, MalformedResponseError, ProtocolError
from .imageops import ImageTensor, to_uint8
from .objectives import TOPK_SUM_TOLERANCE, GenerationResponse

GENERATE_PATH = "/v1/generate"
DECODE_STRATEGIES = ("greedy", "beam", "top_k", "nucleus")
DEFAULT_DECODE = {"strategy": "greedy", "max_new_tokens": 1024, "params": {}}


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def merge_decode(decode: dict | None) -> dict:
    """Fill in decode defaults and validate the result."""
    merged = dict(DEFAULT_DECODE)
    merged["params"] = {}
    if decode:
        if not isinstance(decode, dict):
            raise ConfigError(f"decode options must be a mapping, got {type(decode).__name__}")
        merged.update(decode)
    if merged["strategy"] not in DECODE_STRATEGIES:
        raise ConfigError(
            f"decode.strategy must be one of {DECODE_STRATEGIES}, got {merged['strategy']!r}"
        )
    tokens = merged["max_new_tokens"]
    if not isinstance(tokens, int) or isinstance(tokens, bool) or tokens < 1:
        raise ConfigError(f"decode.max_new_tokens must be an integer >= 1, got {tokens!r}")
    if not isinstance(merged["params"], dict):
        raise ConfigError("decode.params must be a mapping")
    return merged


def encode_request(image: ImageTensor, k: int, decode: dict | None = None) -> bytes:
    """Serialize a generation request to canonical JSON bytes.

    Pixels are rounded half away from zero onto the 8-bit grid before
    base64 encoding, matching what saving the image to disk would produce.
    """
    if not isinstance(k, int) or isinstance(k, bool) or k < 2:
        raise ConfigError(f"topk must be an integer >= 2, got {k!r}")
    raw = to_uint8(image).tobytes()
    body = {
        "image": {
            "width": image.width,
            "height": image.height,
            "channels": 3,
            "encoding": "rgb8_base64",
            "data": base64.b64encode(raw).decode("ascii"),
        },
        "topk": k,
        "decode": merge_decode(decode),
    }
    return _canonical(body)


def decode_request(body: bytes) -> tuple[ImageTensor, int, dict]:
    """Parse and validate a request; server side of :func:`encode_request`."""
    try:
        obj = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"request is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolError("request body must be a JSON object")

    img = obj.get("image")
    if not isinstance(img, dict):
        raise ProtocolError("request needs an 'image' object")
    width, height, channels = img.get("width"), img.get("height"), img.get("channels")
    for label, value in (("width", width), ("height", height)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ProtocolError(f"image.{label} must be an integer >= 1, got {value!r}")
    if channels != 3:
        raise ProtocolError(f"image.channels must be 3, got {channels!r}")
    if img.get("encoding") != "rgb8_base64":
        raise ProtocolError(f"image.encoding must be 'rgb8_base64', got {img.get('encoding')!r}")
    data = img.get("data")
    if not isinstance(data, str):
        raise ProtocolError("image.data must be a base64 string")
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ProtocolError(f"image.data is not valid base64: {exc}") from exc
    if len(raw) != width * height * 3:
        raise ProtocolError(
            f"image.data decodes to {len(raw)} bytes, expected {width * height * 3}"
        )

    k = obj.get("topk")
    if not isinstance(k, int) or isinstance(k, bool) or k < 2:
        raise ProtocolError(f"topk must be an integer >= 2, got {k!r}")
    decode_opts = obj.get("decode")
    if not isinstance(decode_opts, dict):
        raise ProtocolError("request needs a 'decode' object")
    try:
        decode_opts = merge_decode(decode_opts)
    except ConfigError as exc:
        raise ProtocolError(str(exc)) from exc

    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return ImageTensor(pixels.astype(np.float64)), k, decode_opts


def encode_response(resp: GenerationResponse) -> bytes:
    """Serialize a response to canonical JSON bytes; timing is optional."""
    positions = [
        {"eos_prob": float(e), "topk_probs": [float(v) for v in row]}
        for e, row in zip(resp.eos_probs, resp.topk_probs)
    ]
    body: dict = {"length": resp.length, "positions": positions}
    if resp.text is not None:
        body["text"] = resp.text
    if resp.server_decode_ms is not None:
        body["server_decode_ms"] = float(resp.server_decode_ms)
    return _canonical(body)


def _require_probability(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedResponseError(field, f"must be a number, got {value!r}")
    v = float(value)
    if not np.isfinite(v) or v < 0.0 or v > 1.0:
        raise MalformedResponseError(field, f"must be a probability in [0, 1], got {value!r}")
    return v


def parse_response(body: bytes, client_latency_ms: float | None = None) -> GenerationResponse:
    """Parse and fully validate a response; violations name the bad field."""
    try:
        obj = json.loads(body)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedResponseError("body", f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedResponseError("body", "must be a JSON object")

    length = obj.get("length")
    if not isinstance(length, int) or isinstance(length, bool) or length < 0:
        raise MalformedResponseError("length", f"must be an integer >= 0, got {length!r}")
    positions = obj.get("positions")
    if not isinstance(positions, list):
        raise MalformedResponseError("positions", "must be a list")
    if len(positions) != length:
        raise MalformedResponseError(
            "positions", f"has {len(positions)} entries but length field says {length}"
        )

    eos = np.empty(length, dtype=np.float64)
    rows: list[list[float]] = []
    k = None
    for i, pos in enumerate(positions):
        if not isinstance(pos, dict):
            raise MalformedResponseError(f"positions[{i}]", "must be an object")
        eos[i] = _require_probability(pos.get("eos_prob"), f"positions[{i}].eos_prob")
        topk = pos.get("topk_probs")
        field = f"positions[{i}].topk_probs"
        if not isinstance(topk, list) or not topk:
            raise MalformedResponseError(field, "must be a nonempty list")
        row = [_require_probability(v, field) for v in topk]
        if k is None:
            k = len(row)
        elif len(row) != k:
            raise MalformedResponseError(field, f"has {len(row)} entries, other positions have {k}")
        if any(row[j] < row[j + 1] for j in range(len(row) - 1)):
            raise MalformedResponseError(field, "must be sorted descending")
        if sum(row) > 1.0 + TOPK_SUM_TOLERANCE:
            raise MalformedResponseError(field, f"sums to {sum(row)}, more than 1")
        rows.append(row)

    text = obj.get("text")
    if text is not None and not isinstance(text, str):
        raise MalformedResponseError("text", f"must be a string, got {text!r}")
    decode_ms = obj.get("server_decode_ms")
    if decode_ms is not None:
        if isinstance(decode_ms, bool) or not isinstance(decode_ms, (int, float)):
            raise MalformedResponseError("server_decode_ms", f"must be a number, got {decode_ms!r}")
        decode_ms = float(decode_ms)
        if not np.isfinite(decode_ms) or decode_ms < 0.0:
            raise MalformedResponseError("server_decode_ms", f"must be >= 0, got {decode_ms}")

    topk_arr = np.array(rows, dtype=np.float64).reshape(length, k or 0)
    return GenerationResponse(
        length, eos, topk_arr, text=text, server_decode_ms=decode_ms,
        client_latency_ms=client_latency_ms,
    )
