"""Deterministic in-process victims with known structure.

Two families back the test story.  The analytic family maps pixels through
logistic and softmax heads with a fixed generation length, so the combined
efficiency objective has a closed-form gradient: it validates the zero-order
estimator.  The rule family drives generation length from mean brightness
with a known monotone mechanism: it validates the end-to-end attack, since
the optimal perturbation direction is known by construction.

All victims are pure functions of the queried image, which makes them safe
to serve concurrently and makes golden fixtures reproducible from a seed.
"""

from __future__ import annotations

import abc

import numpy as np

from .errors import ConfigError
from .imageops import ImageTensor, round_half_away_from_zero
from .objectives import GenerationResponse, ObjectiveParams


class VictimEndpoint(abc.ABC):
    """Opaque query-only victim: image in, generation response out."""

    name: str = "victim"
    k: int = 2

    @abc.abstractmethod
    def query(self, image: ImageTensor, decode: dict | None = None) -> GenerationResponse:
        """Run one generation on the given image."""


def _ravel_pixels(x, d: int) -> np.ndarray:
    arr = x.data if isinstance(x, ImageTensor) else np.asarray(x, dtype=np.float64)
    flat = arr.ravel()
    if flat.size != d:
        raise ValueError(f"expected {d} input elements, got {flat.size}")
    return flat


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


class AnalyticVictim(VictimEndpoint):
    """Smooth victim with constant length and a closed-form objective gradient.

    For a flattened input x rescaled to [0, 1], position i emits EOS
    probability logistic(w_i . x + b_i) and top-k probabilities proportional
    to softmax(A_i x + c_i), scaled by ``topk_mass`` so the row sums below 1
    like a genuine top-k slice of a larger vocabulary.  The length is fixed,
    so the length term never contributes to the gradient and the remaining
    terms are differentiable everywhere.
    """

    def __init__(
        self,
        weights: np.ndarray,
        biases: np.ndarray,
        score_weights: np.ndarray,
        score_biases: np.ndarray,
        topk_mass: float = 0.9,
        name: str = "analytic",
    ):
        w = np.asarray(weights, dtype=np.float64)
        b = np.asarray(biases, dtype=np.float64)
        a = np.asarray(score_weights, dtype=np.float64)
        c = np.asarray(score_biases, dtype=np.float64)
        if w.ndim != 2:
            raise ConfigError(f"weights must be (positions, d), got shape {w.shape}")
        n, d = w.shape
        if b.shape != (n,):
            raise ConfigError(f"biases must have shape ({n},), got {b.shape}")
        if a.ndim != 3 or a.shape[0] != n or a.shape[2] != d:
            raise ConfigError(f"score_weights must be ({n}, k, {d}), got {a.shape}")
        k = a.shape[1]
        if k < 2:
            raise ConfigError(f"need at least 2 top-k scores per position, got {k}")
        if c.shape != (n, k):
            raise ConfigError(f"score_biases must have shape ({n}, {k}), got {c.shape}")
        if not (0.0 < topk_mass <= 1.0):
            raise ConfigError(f"topk_mass must be in (0, 1], got {topk_mass}")
        self.weights = w
        self.biases = b
        self.score_weights = a
        self.score_biases = c
        self.topk_mass = float(topk_mass)
        self.name = name
        self.positions = n
        self.d = d
        self.k = k
        self.delay_ms_per_token = 0.0

    @classmethod
    def from_seed(
        cls,
        d: int,
        positions: int = 4,
        k: int = 5,
        seed: int = 0,
        name: str | None = None,
    ) -> "AnalyticVictim":
        """Generate well-conditioned random parameters from a seed.

        Scales keep logistic arguments and softmax scores of order one for
        inputs anywhere in the pixel box, so gradients neither saturate nor
        blow up.
        """
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 2.0 / np.sqrt(d), size=(positions, d))
        b = rng.normal(0.0, 0.25, size=positions)
        a = rng.normal(0.0, 3.0 / np.sqrt(d), size=(positions, k, d))
        c = rng.normal(0.0, 0.5, size=(positions, k))
        return cls(w, b, a, c, name=name or f"analytic-d{d}-seed{seed}")

    def _unit_input(self, x) -> np.ndarray:
        return _ravel_pixels(x, self.d) / 255.0

    def query(self, image, decode: dict | None = None) -> GenerationResponse:
        x01 = self._unit_input(image)
        eos = _sigmoid(self.weights @ x01 + self.biases)
        rows = _softmax(self.score_weights @ x01 + self.score_biases)
        topk = self.topk_mass * np.sort(rows, axis=1)[:, ::-1]
        return GenerationResponse(self.positions, eos, topk)

    def _check_k(self, params: ObjectiveParams) -> None:
        if params.k < self.k:
            raise ConfigError(
                f"objective k={params.k} would truncate this victim's {self.k} "
                "top-k entries; the closed-form oracle does not model truncation"
            )

    def value(self, x, params: ObjectiveParams) -> float:
        """Combined objective of this victim's response, computed directly.

        Equals total_objective(query(x), params) up to roundoff; zero-padding
        the top-k rows out to params.k shifts each position's KL term by the
        constant log(params.k / k), which the log(params.k) term absorbs.
        """
        self._check_k(params)
        x01 = self._unit_input(x)
        eos = _sigmoid(self.weights @ x01 + self.biases)
        n = self.positions
        decay = np.power(params.omega, np.arange(n - 1, -1, -1, dtype=np.float64))
        l_eos = -float(np.dot(decay, eos))
        p = _softmax(self.score_weights @ x01 + self.score_biases)
        neg_entropy = (p * np.log(p)).sum(axis=1)
        kl = neg_entropy + np.log(params.k)
        l_var = -float(kl.mean())
        return float(n) + params.alpha * l_eos + params.beta * l_var

    def value_batch(self, xs: np.ndarray, params: ObjectiveParams) -> np.ndarray:
        """Vectorized ``value`` over a (batch, d) array of inputs."""
        self._check_k(params)
        x01 = np.asarray(xs, dtype=np.float64) / 255.0
        n = self.positions
        eos = _sigmoid(x01 @ self.weights.T + self.biases)
        decay = np.power(params.omega, np.arange(n - 1, -1, -1, dtype=np.float64))
        l_eos = -(eos @ decay)
        z = np.einsum("pkd,md->mpk", self.score_weights, x01) + self.score_biases
        p = _softmax(z, axis=2)
        kl = (p * np.log(p)).sum(axis=2) + np.log(params.k)
        l_var = -kl.mean(axis=1)
        return float(n) + params.alpha * l_eos + params.beta * l_var

    def grad_total(self, x, params: ObjectiveParams) -> np.ndarray:
        """Exact gradient of ``value`` with respect to raw pixel values."""
        self._check_k(params)
        x01 = self._unit_input(x)
        n = self.positions
        eos = _sigmoid(self.weights @ x01 + self.biases)
        decay = np.power(params.omega, np.arange(n - 1, -1, -1, dtype=np.float64))
        grad_eos = -(self.weights.T @ (decay * eos * (1.0 - eos)))
        p = _softmax(self.score_weights @ x01 + self.score_biases)
        neg_entropy = (p * np.log(p)).sum(axis=1)
        # dKL/dz for softmax p: p * (log p - sum(p log p)), per position.
        dkl_dz = p * (np.log(p) - neg_entropy[:, None])
        grad_var = -np.einsum("pkd,pk->d", self.score_weights, dkl_dz) / n
        return (params.alpha * grad_eos + params.beta * grad_var) / 255.0


class LinearVictim:
    """Affine objective with a constant gradient, for estimator diagnostics.

    The zero-order estimator is exactly unbiased on affine functions, so
    this victim pins down Monte Carlo behavior with no smoothing bias at any
    search radius.  It exposes only the diagnostic surface (value and
    gradient), not the query protocol.
    """

    def __init__(self, slope: np.ndarray, intercept: float = 0.0, name: str = "linear"):
        a = np.asarray(slope, dtype=np.float64)
        if a.ndim != 1 or a.size < 1:
            raise ConfigError(f"slope must be a nonempty vector, got shape {a.shape}")
        self.slope = a
        self.intercept = float(intercept)
        self.d = a.size
        self.name = name

    @classmethod
    def from_seed(cls, d: int, seed: int = 0) -> "LinearVictim":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, 1.0, size=d), name=f"linear-d{d}-seed{seed}")

    def value(self, x, params: ObjectiveParams | None = None) -> float:
        return float(np.dot(self.slope, np.asarray(x, dtype=np.float64).ravel()) + self.intercept)

    def value_batch(self, xs: np.ndarray, params: ObjectiveParams | None = None) -> np.ndarray:
        return np.asarray(xs, dtype=np.float64) @ self.slope + self.intercept

    def grad_total(self, x, params: ObjectiveParams | None = None) -> np.ndarray:
        return self.slope.copy()


class QuadraticVictim:
    """Quadratic objective with an exact gradient, for smoothing-bias trends.

    Antithetic pairs cancel the quadratic term exactly, so estimator quality
    must not degrade as the search radius grows.
    """

    def __init__(self, curvature: np.ndarray, slope: np.ndarray, name: str = "quadratic"):
        q = np.asarray(curvature, dtype=np.float64)
        a = np.asarray(slope, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ConfigError(f"curvature must be square, got shape {q.shape}")
        if a.shape != (q.shape[0],):
            raise ConfigError(f"slope must have shape ({q.shape[0]},), got {a.shape}")
        self.curvature = (q + q.T) / 2.0
        self.slope = a
        self.d = a.size
        self.name = name

    @classmethod
    def from_seed(cls, d: int, seed: int = 0) -> "QuadraticVictim":
        rng = np.random.default_rng(seed)
        m = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, d))
        return cls(m, rng.normal(0.0, 1.0, size=d), name=f"quadratic-d{d}-seed{seed}")

    def value(self, x, params: ObjectiveParams | None = None) -> float:
        v = np.asarray(x, dtype=np.float64).ravel()
        return float(0.5 * v @ self.curvature @ v + self.slope @ v)

    def value_batch(self, xs: np.ndarray, params: ObjectiveParams | None = None) -> np.ndarray:
        v = np.asarray(xs, dtype=np.float64)
        return 0.5 * np.einsum("md,de,me->m", v, self.curvature, v) + v @ self.slope

    def grad_total(self, x, params: ObjectiveParams | None = None) -> np.ndarray:
        v = np.asarray(x, dtype=np.float64).ravel()
        return self.curvature @ v + self.slope


class RuleVictim(VictimEndpoint):
    """Brightness-driven victim with a known, monotone length mechanism.

    For mean brightness m = mean(pixels)/255 the generated length is
    clamp(round(max_length * m), 1, max_length), EOS probability at position
    i of N is (1 - m) * i / N, and every position shares one top-k row
    softmax(sharpness * (1 - m) * scores): brighter images generate longer,
    less committal output.  Because the mechanism is known, the best possible
    perturbation under a given L2 budget is known too.
    """

    def __init__(
        self,
        max_length: int,
        k: int = 8,
        sharpness: float = 4.0,
        seed: int = 0,
        name: str | None = None,
        delay_ms_per_token: float = 0.0,
    ):
        if int(max_length) != max_length or max_length < 1:
            raise ConfigError(f"max_length must be an integer >= 1, got {max_length}")
        if int(k) != k or k < 2:
            raise ConfigError(f"k must be an integer >= 2, got {k}")
        if sharpness < 0.0:
            raise ConfigError(f"sharpness must be nonnegative, got {sharpness}")
        self.max_length = int(max_length)
        self.k = int(k)
        self.sharpness = float(sharpness)
        rng = np.random.default_rng(seed)
        self.scores = np.sort(rng.normal(0.0, 1.0, size=self.k))[::-1].copy()
        self.name = name or f"rule-L{max_length}-seed{seed}"
        self.delay_ms_per_token = float(delay_ms_per_token)

    def brightness(self, image: ImageTensor) -> float:
        return float(image.data.mean() / 255.0)

    def length_for(self, image: ImageTensor) -> int:
        m = self.brightness(image)
        n = float(round_half_away_from_zero(np.asarray(self.max_length * m)))
        return int(min(max(n, 1.0), float(self.max_length)))

    def query(self, image: ImageTensor, decode: dict | None = None) -> GenerationResponse:
        m = self.brightness(image)
        n = self.length_for(image)
        eos = (1.0 - m) * np.arange(1, n + 1, dtype=np.float64) / n
        # Scores are already sorted descending and the temperature is
        # nonnegative, so the softmax row needs no re-sorting.
        row = _softmax(self.sharpness * (1.0 - m) * self.scores)
        return GenerationResponse(n, eos, np.broadcast_to(row, (n, self.k)))


def victim_from_spec(spec: dict) -> VictimEndpoint:
    """Build a victim from a JSON-style spec mapping.

    Rule victims: {"kind": "rule", "max_length", "k", "sharpness", "seed",
    "delay_ms_per_token"}.  Analytic victims: {"kind": "analytic", "d",
    "positions", "k", "seed"}.  ``L_max`` is accepted as an alias for
    ``max_length``.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("victim spec must be a mapping with a 'kind' field")
    kind = spec["kind"]
    if kind == "rule":
        max_length = spec.get("max_length", spec.get("L_max"))
        if max_length is None:
            raise ConfigError("rule victim spec needs 'max_length'")
        victim = RuleVictim(
            max_length=max_length,
            k=spec.get("k", 8),
            sharpness=spec.get("sharpness", 4.0),
            seed=spec.get("seed", 0),
            delay_ms_per_token=spec.get("delay_ms_per_token", 0.0),
        )
        return victim
    if kind == "analytic":
        if "d" not in spec:
            raise ConfigError("analytic victim spec needs 'd'")
        victim = AnalyticVictim.from_seed(
            d=spec["d"],
            positions=spec.get("positions", 4),
            k=spec.get("k", 5),
            seed=spec.get("seed", 0),
        )
        victim.delay_ms_per_token = float(spec.get("delay_ms_per_token", 0.0))
        return victim
    raise ConfigError(f"unknown victim kind {kind!r}")
