"""Session fixtures: frozen seed images and shared end-to-end batches.

The end-to-end criteria (attack success, baseline ordering, defense trend)
all measure the same frozen configuration, so the expensive attack batch
runs once per session and its report is reused.

The frozen numbers matter.  The rule victim's length responds to mean
brightness in steps of 1/max_length, and the gradient probes only see the
objective change when eta-sized noise moves brightness across at least one
step: that needs max_length * eta / (255 * sqrt(n)) around 1 or more for an
n-value image.  max_length = 8192 over 3x3 images satisfies it with the
default eta = 0.1; small max_length values stall the search.  Seed images
are dim (pixels in {0..16}) so there is plenty of headroom to brighten.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from slowgen import (
    AttackConfig,
    EfficiencyReport,
    ExperimentConfig,
    ImageTensor,
    RuleVictim,
    run_experiment,
    save_image,
)

RULE_SPEC = {"kind": "rule", "max_length": 8192, "k": 8, "sharpness": 4.0, "seed": 11}
IMAGE_SHAPE = (3, 3, 3)
IMAGE_COUNT = 10
IMAGE_SEED = 42
ATTACK_SEED = 0
ATTACK_ITERATIONS = 200
EPS = 64.0
# Elementwise sigma whose expected noise norm roughly fills the L2 budget.
SIGMA = EPS / math.sqrt(float(np.prod(IMAGE_SHAPE)))


def frozen_rule_victim() -> RuleVictim:
    return RuleVictim(
        max_length=RULE_SPEC["max_length"],
        k=RULE_SPEC["k"],
        sharpness=RULE_SPEC["sharpness"],
        seed=RULE_SPEC["seed"],
    )


@pytest.fixture(scope="session")
def rule_victim() -> RuleVictim:
    return frozen_rule_victim()


@pytest.fixture(scope="session")
def seed_image_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("seed-images")
    rng = np.random.default_rng(IMAGE_SEED)
    for idx in range(IMAGE_COUNT):
        pixels = rng.integers(0, 17, size=IMAGE_SHAPE).astype(np.float64)
        save_image(ImageTensor(pixels), str(out / f"img{idx:02d}.png"))
    return out


@pytest.fixture(scope="session")
def seed_images(seed_image_dir) -> tuple[str, ...]:
    return tuple(str(p) for p in sorted(seed_image_dir.glob("*.png")))


def batch_config(images, out_dir, method: str) -> ExperimentConfig:
    return ExperimentConfig(
        images=tuple(images),
        out_dir=str(out_dir),
        attack=AttackConfig(iterations=ATTACK_ITERATIONS, eps=EPS, seed=ATTACK_SEED),
        method=method,
        victim_spec=RULE_SPEC,
        sigma=SIGMA,
    )


@pytest.fixture(scope="session")
def attack_batch(seed_images, tmp_path_factory) -> EfficiencyReport:
    out = tmp_path_factory.mktemp("attack-batch")
    return run_experiment(batch_config(seed_images, out, "attack"))


@pytest.fixture(scope="session")
def gaussian_batch(seed_images, tmp_path_factory) -> EfficiencyReport:
    out = tmp_path_factory.mktemp("gaussian-batch")
    return run_experiment(batch_config(seed_images, out, "gaussian"))
