"""Efficiency objectives computed from a victim's generation response.

The attack maximizes a weighted sum of three terms: the generated length
itself, a penalty on end-of-sequence probability mass (weighted toward the
end of the sequence), and a penalty on how far each position's renormalized
top-k distribution sits from uniform.  Longer outputs, suppressed EOS mass,
and flatter next-token distributions all raise the score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateDistributionError

# Slack allowed on a top-k row's probability mass; sums can exceed 1 only by
# accumulated floating-point error.
TOPK_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class PositionInfo:
    """Per-position victim output: EOS probability and top-k probabilities.

    ``topk_probs`` holds the k largest full-vocabulary probabilities, sorted
    descending, not renormalized.
    """

    eos_prob: float
    topk_probs: tuple[float, ...]


@dataclass(frozen=True)
class ObjectiveParams:
    """Weights of the combined objective.

    omega: decay base for the EOS term; position i of N carries weight
        omega**(N-i), so the final position always has weight 1.
    alpha: weight of the EOS term.
    beta: weight of the distribution-flatness term.
    k: top-k size used when renormalizing next-token distributions.
    """

    omega: float = 0.1
    alpha: float = 0.5
    beta: float = 0.1
    k: int = 100

    def __post_init__(self) -> None:
        if not (0.0 < self.omega <= 1.0):
            raise ConfigError(f"omega must be in (0, 1], got {self.omega}")
        if self.alpha < 0.0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if self.beta < 0.0:
            raise ConfigError(f"beta must be nonnegative, got {self.beta}")
        if int(self.k) != self.k or self.k < 2:
            raise ConfigError(f"k must be an integer >= 2, got {self.k}")


@dataclass(frozen=True, eq=False)
class GenerationResponse:
    """Victim output for one query.

    Stored as stacked arrays rather than per-position objects so that long
    generations stay cheap to validate and score: ``eos_probs`` has shape
    (N,) and ``topk_probs`` has shape (N, k_victim) with rows sorted
    descending.  The ``positions`` property materializes the per-position
    view on demand.  Equality compares payload fields only, never timing.
    """

    length: int
    eos_probs: np.ndarray
    topk_probs: np.ndarray
    text: str | None = None
    server_decode_ms: float | None = None
    client_latency_ms: float | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GenerationResponse):
            return NotImplemented
        return (
            self.length == other.length
            and self.text == other.text
            and np.array_equal(self.eos_probs, other.eos_probs)
            and np.array_equal(self.topk_probs, other.topk_probs)
        )

    def __post_init__(self) -> None:
        n = self.length
        if int(n) != n or n < 0:
            raise ValueError(f"length must be a nonnegative integer, got {n!r}")
        eos = np.asarray(self.eos_probs, dtype=np.float64)
        topk = np.asarray(self.topk_probs, dtype=np.float64)
        if eos.shape != (n,):
            raise ValueError(f"eos_probs must have shape ({n},), got {eos.shape}")
        if topk.ndim != 2 or topk.shape[0] != n:
            raise ValueError(f"topk_probs must have shape ({n}, k), got {topk.shape}")
        if n > 0:
            if topk.shape[1] < 1:
                raise ValueError("each position needs at least one top-k probability")
            if not np.all(np.isfinite(eos)) or not np.all(np.isfinite(topk)):
                raise ValueError("probabilities must be finite")
            if eos.min() < 0.0 or eos.max() > 1.0:
                raise ValueError("eos_probs must lie in [0, 1]")
            if topk.min() < 0.0 or topk.max() > 1.0:
                raise ValueError("topk_probs entries must lie in [0, 1]")
            if float(topk.sum(axis=1).max()) > 1.0 + TOPK_SUM_TOLERANCE:
                raise ValueError("a top-k row sums to more than 1")
            if topk.shape[1] > 1 and float(np.diff(topk, axis=1).max()) > 0.0:
                raise ValueError("top-k rows must be sorted descending")
        eos = eos.copy()
        topk = topk.copy()
        eos.flags.writeable = False
        topk.flags.writeable = False
        object.__setattr__(self, "length", int(n))
        object.__setattr__(self, "eos_probs", eos)
        object.__setattr__(self, "topk_probs", topk)

    @classmethod
    def from_positions(
        cls,
        positions: list[PositionInfo],
        text: str | None = None,
        server_decode_ms: float | None = None,
        client_latency_ms: float | None = None,
    ) -> "GenerationResponse":
        n = len(positions)
        k = len(positions[0].topk_probs) if n else 0
        eos = np.array([p.eos_prob for p in positions], dtype=np.float64)
        topk = np.array([p.topk_probs for p in positions], dtype=np.float64).reshape(n, k)
        return cls(n, eos, topk, text, server_decode_ms, client_latency_ms)

    @property
    def positions(self) -> tuple[PositionInfo, ...]:
        return tuple(
            PositionInfo(float(e), tuple(float(v) for v in row))
            for e, row in zip(self.eos_probs, self.topk_probs)
        )


def len_objective(r: GenerationResponse) -> float:
    """Number of generated tokens, i.e. decoder calls."""
    return float(r.length)


def eos_objective(r: GenerationResponse, omega: float) -> float:
    """Negated decayed sum of EOS probabilities.

    Position i of N carries weight omega**(N-i): the closer to the end, the
    heavier the weight, so late EOS mass is penalized hardest.  Empty
    generations score 0.
    """
    if not (0.0 < omega <= 1.0):
        raise ConfigError(f"omega must be in (0, 1], got {omega}")
    n = r.length
    if n == 0:
        return 0.0
    weights = np.power(omega, np.arange(n - 1, -1, -1, dtype=np.float64))
    return -float(np.dot(weights, r.eos_probs))


def normalize_topk(topk_probs: np.ndarray) -> np.ndarray:
    """Rescale top-k probabilities to sum to 1."""
    arr = np.asarray(topk_probs, dtype=np.float64)
    total = float(arr.sum())
    if total <= 0.0:
        raise DegenerateDistributionError(
            "top-k probabilities sum to zero; cannot normalize"
        )
    return arr / total


def var_objective(r: GenerationResponse, k: int) -> float:
    """Negated mean KL divergence from uniform over the top-k support.

    Each position's top-k row is truncated or zero-padded to exactly k
    entries, renormalized, and compared against the uniform distribution on
    k outcomes using natural-log KL with the 0*log(0) = 0 convention.  Empty
    generations score 0.
    """
    if int(k) != k or k < 2:
        raise ConfigError(f"k must be an integer >= 2, got {k}")
    n = r.length
    if n == 0:
        return 0.0
    rows = r.topk_probs[:, :k]
    sums = rows.sum(axis=1)
    if float(sums.min()) <= 0.0:
        raise DegenerateDistributionError(
            "a position's top-k probabilities sum to zero; cannot normalize"
        )
    p = rows / sums[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p * k), 0.0)
    kl_per_position = terms.sum(axis=1)
    return -float(kl_per_position.mean())


def total_objective(r: GenerationResponse, p: ObjectiveParams) -> float:
    """Weighted sum the optimizer maximizes: length + alpha*EOS + beta*flatness."""
    return (
        len_objective(r)
        + p.alpha * eos_objective(r, p.omega)
        + p.beta * var_objective(r, p.k)
    )
