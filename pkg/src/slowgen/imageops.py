"""Image and perturbation value types with norm, projection, and clamping.

Pixels live in the [0, 255] float domain throughout, so L2 budgets and step
sizes quoted in 8-bit pixel units apply verbatim.  All values are immutable
after construction and every operation is a pure function, so they are safe
to share across concurrent evaluators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ConfigError

# Absolute slack allowed on the L2 budget after projection, absorbing
# floating-point error in the radial scaling.
EPS_TOLERANCE = 1e-6

# Relative slack used when deciding a vector is already inside the ball, so
# that projecting twice returns the identical object (bitwise idempotence).
_INSIDE_BALL_RTOL = 1e-12


@dataclass(frozen=True)
class ImageTensor:
    """An H x W x 3 float array of pixel values in [0, 255]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"image must have shape (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must have positive height and width, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 255.0:
            raise ValueError(f"pixel values must lie in [0, 255], got range [{lo}, {hi}]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"ImageTensor(shape={self.data.shape})"


@dataclass(frozen=True)
class Perturbation:
    """An additive delta with the same shape as its target image.

    Values are in pixel units and may be negative; the L2 budget is enforced
    by :func:`clip_l2`, not by the type itself.
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"perturbation must have shape (H, W, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("perturbation contains non-finite values")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, shape: tuple[int, int, int]) -> "Perturbation":
        return cls(np.zeros(shape, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Perturbation(shape={self.data.shape}, l2={l2_norm(self):.4g})"


def l2_norm(p: Perturbation) -> float:
    """Euclidean norm of a perturbation."""
    return float(np.linalg.norm(p.data.ravel()))


def clip_l2_array(arr: np.ndarray, eps: float) -> np.ndarray:
    """Project a raw array onto the L2 ball of radius ``eps``.

    Returns the input object unchanged when it is already inside the ball,
    so repeated projection is bitwise idempotent.
    """
    if eps <= 0:
        raise ConfigError(f"L2 budget must be positive, got {eps}")
    norm = float(np.linalg.norm(arr.ravel()))
    if norm <= eps * (1.0 + _INSIDE_BALL_RTOL):
        return arr
    return arr * (eps / norm)


def clip_l2(p: Perturbation, eps: float) -> Perturbation:
    """Project a perturbation onto the L2 ball of radius ``eps``.

    The same object is returned when the perturbation is already inside the
    ball, so clip_l2(clip_l2(p, e), e) is clip_l2(p, e) exactly.
    """
    out = clip_l2_array(p.data, eps)
    if out is p.data:
        return p
    return Perturbation(out)


def apply_array(image: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Add a raw delta to raw pixels and clamp the result into [0, 255]."""
    if image.shape != delta.shape:
        raise ValueError(f"shape mismatch: image {image.shape} vs delta {delta.shape}")
    return np.clip(image + delta, 0.0, 255.0)


def apply(i: ImageTensor, p: Perturbation) -> ImageTensor:
    """Perturbed image i + p, elementwise clamped into the valid pixel box."""
    return ImageTensor(apply_array(i.data, p.data))


def round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with halves moving away from zero.

    numpy's default rounds halves to even, which would make saved images
    depend on parity; this rule is the one common raster encoders use.
    """
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def to_uint8(i: ImageTensor) -> np.ndarray:
    """Quantize an image to the 8-bit grid used for files and the wire."""
    return round_half_away_from_zero(i.data).astype(np.uint8)


def load_image(path: str) -> ImageTensor:
    """Read an 8-bit RGB PNG (or other lossless raster) as a float image.

    8-bit values map to floats verbatim, so load(save(x)) = round(x).
    """
    with Image.open(path) as img:
        if img.mode != "RGB":
            raise ValueError(f"expected an 8-bit RGB image, got mode {img.mode!r}: {path}")
        arr = np.asarray(img, dtype=np.float64)
    return ImageTensor(arr)


def save_image(i: ImageTensor, path: str) -> None:
    """Write an image as 8-bit RGB PNG, rounding half away from zero."""
    Image.fromarray(to_uint8(i), mode="RGB").save(path, format="PNG")
