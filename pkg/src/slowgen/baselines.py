"""Corruption baseline and input-side defense.

The Gaussian baseline perturbs an image with random noise projected onto
the same L2 budget as the attack, so any efficiency gap between the two
reflects optimization quality rather than perturbation size.  Bit-depth
quantization is the defense counterpart: it snaps pixels onto a coarse
grid to destroy fine-grained adversarial structure.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .imageops import ImageTensor, apply_array, clip_l2_array, round_half_away_from_zero

DEFAULT_QUANTIZE_BITS = 4


def gaussian_baseline(
    image: ImageTensor, sigma: float, eps: float, rng: np.random.Generator
) -> ImageTensor:
    """Image plus L2-projected Gaussian noise, box-clamped to valid pixels."""
    if sigma < 0.0:
        raise ConfigError(f"sigma must be nonnegative, got {sigma}")
    noise = sigma * rng.standard_normal(image.shape)
    noise = clip_l2_array(noise, eps)
    return ImageTensor(apply_array(image.data, noise))


def quantize_defense(image: ImageTensor, bits: int = DEFAULT_QUANTIZE_BITS) -> ImageTensor:
    """Reduce pixel bit depth: round onto a 2**bits level grid over [0, 255].

    Exactly idempotent: quantizing twice equals quantizing once.
    """
    if not isinstance(bits, int) or isinstance(bits, bool) or not (1 <= bits <= 8):
        raise ConfigError(f"bits must be an integer in 1..8, got {bits!r}")
    levels = float(2**bits - 1)
    snapped = round_half_away_from_zero(image.data / 255.0 * levels) / levels * 255.0
    return ImageTensor(snapped)
