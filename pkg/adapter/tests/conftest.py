"""Shared fixtures: one builtin-model server per session, plus seed images.

The conformance tests drive the adapter through the toolkit's client and
response validator, which is the point: the adapter exists to serve that
wire protocol.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from model_adapter import AdapterConfig, AdapterServer

IMAGE_COUNT = 10
IMAGE_SEED = 42


def seed_image_arrays() -> list[np.ndarray]:
    rng = np.random.default_rng(IMAGE_SEED)
    return [
        rng.integers(0, 17, size=(3, 3, 3)).astype(np.float64)
        for _ in range(IMAGE_COUNT)
    ]


@pytest.fixture(scope="session")
def tiny_server():
    with AdapterServer(AdapterConfig()) as server:
        yield server


@pytest.fixture(scope="session")
def seed_images(tmp_path_factory) -> tuple[str, ...]:
    from slowgen import ImageTensor, save_image

    out = tmp_path_factory.mktemp("adapter-seeds")
    paths = []
    for idx, arr in enumerate(seed_image_arrays()):
        path = out / f"img{idx:02d}.png"
        save_image(ImageTensor(arr), str(path))
        paths.append(str(path))
    return tuple(paths)
