"""Builders shared across test modules: responses, images, golden inputs."""

from __future__ import annotations

import numpy as np

from slowgen import GenerationResponse, ImageTensor, RuleVictim


def uniform_rows(n: int, k: int, mass: float = 1.0) -> np.ndarray:
    """n identical top-k rows, each uniform with the given total mass."""
    return np.full((n, k), mass / k, dtype=np.float64)


def sorted_rows(rng: np.random.Generator, n: int, k: int, mass: float = 1.0) -> np.ndarray:
    """Random valid top-k rows: descending, nonnegative, summing to mass."""
    raw = rng.dirichlet(np.full(k, 2.0), size=n) * mass
    return np.sort(raw, axis=1)[:, ::-1]


def make_response(eos, rows, **kwargs) -> GenerationResponse:
    eos = np.asarray(eos, dtype=np.float64)
    rows = np.asarray(rows, dtype=np.float64)
    return GenerationResponse(eos.shape[0], eos, rows, **kwargs)


def random_image(rng: np.random.Generator, h: int = 3, w: int = 3) -> ImageTensor:
    return ImageTensor(rng.uniform(0.0, 255.0, size=(h, w, 3)))


# Golden wire fixture inputs.  The image mixes extremes and mid values, the
# requested k is below the victim's k so the server-side truncation path is
# exercised, and the victim is small enough to keep the fixture readable.
GOLDEN_IMAGE = np.array(
    [
        [[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]],
        [[250.0, 251.0, 252.0], [127.0, 128.0, 255.0]],
    ]
)
GOLDEN_K = 3


def golden_victim() -> RuleVictim:
    return RuleVictim(max_length=6, k=5, sharpness=2.0, seed=11)
