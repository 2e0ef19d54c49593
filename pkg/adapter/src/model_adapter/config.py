"""Adapter configuration.

The model identifier selects what gets served.  Anything that does not
start with ``builtin:`` is treated as a Hugging Face model id and loaded
with ``from_pretrained``.  The ``builtin:tiny`` scheme constructs a small
seeded encoder-decoder locally (no download) and accepts options in query
form, e.g. ``builtin:tiny?seed=7&eos_bias=2.5``; see modeling.py for the
option list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

from .errors import AdapterConfigError

DEFAULT_MODEL = "builtin:tiny"
SUPPORTED_STRATEGIES = ("greedy",)


@dataclass(frozen=True)
class AdapterConfig:
    """What to serve: model, device, decode ceiling, top-k width."""

    model: str = DEFAULT_MODEL
    device: str = "cpu"
    max_new_tokens: int = 24
    k: int = 8
    strategy: str = "greedy"

    def __post_init__(self) -> None:
        if not isinstance(self.model, str) or not self.model:
            raise AdapterConfigError("model must be a non-empty string")
        if int(self.k) != self.k or self.k < 2:
            raise AdapterConfigError(f"k must be an integer >= 2, got {self.k!r}")
        if int(self.max_new_tokens) != self.max_new_tokens or self.max_new_tokens < 1:
            raise AdapterConfigError(
                f"max_new_tokens must be an integer >= 1, got {self.max_new_tokens!r}"
            )
        if self.strategy not in SUPPORTED_STRATEGIES:
            raise AdapterConfigError(
                f"strategy must be one of {SUPPORTED_STRATEGIES}, got {self.strategy!r}"
            )


def config_from_dict(doc: dict) -> AdapterConfig:
    if not isinstance(doc, dict):
        raise AdapterConfigError("adapter config must be a JSON object")
    known = {f.name for f in fields(AdapterConfig)}
    unknown = set(doc) - known
    if unknown:
        raise AdapterConfigError(f"unknown config keys: {sorted(unknown)}")
    return AdapterConfig(**doc)


def load_config(path: str) -> AdapterConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise AdapterConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise AdapterConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc)
