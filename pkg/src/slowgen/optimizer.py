"""Zero-order gradient estimation and the perturbation search loop.

The optimizer never sees model internals: it estimates the gradient of the
efficiency objective from paired function evaluations at Gaussian-perturbed
points (antithetic sampling), takes a fixed-size ascent step, and projects
the perturbation back onto the L2 budget ball after every iteration.

A diagnostics routine measures estimator quality against victims that expose
a closed-form gradient, reporting how often the squared norm of the estimate
falls within a relative tolerance band of the true gradient's.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AttackError, ConfigError
from .imageops import (
    EPS_TOLERANCE,
    ImageTensor,
    Perturbation,
    apply_array,
    clip_l2_array,
)
from .objectives import GenerationResponse, ObjectiveParams, total_objective


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters of the perturbation search.

    iterations: number of optimizer steps.
    pairs: antithetic noise pairs per iteration; each pair costs two queries.
    eta: search radius, i.e. standard deviation of the Gaussian probes.
    step_size: gradient-ascent step applied to the estimated gradient.
    eps: L2 budget of the perturbation, in 0-255 pixel units.
    objective: weights of the efficiency objective.
    seed: PRNG seed; the whole run is a deterministic function of it.
    decode: opaque decode options forwarded to the victim with every query.
    """

    iterations: int = 500
    pairs: int = 5
    eta: float = 0.1
    step_size: float = 5.0
    eps: float = 64.0
    objective: ObjectiveParams = field(default_factory=ObjectiveParams)
    seed: int = 0
    decode: dict | None = None

    def __post_init__(self) -> None:
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError(f"iterations must be an integer >= 1, got {self.iterations}")
        if int(self.pairs) != self.pairs or self.pairs < 1:
            raise ConfigError(f"pairs must be an integer >= 1, got {self.pairs}")
        if self.eta <= 0.0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        # step_size = 0 is allowed: it freezes delta and is useful for plumbing
        # checks (the run then measures the baseline twice).
        if self.step_size < 0.0:
            raise ConfigError(f"step_size must be >= 0, got {self.step_size}")
        if self.eps <= 0.0:
            raise ConfigError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True, eq=False)
class AttackResult:
    """Outcome of one perturbation search.

    objective_trace holds, per iteration, the mean of the 2*pairs sampled
    objective values, a Monte Carlo estimate of the smoothed objective at the
    current perturbation.  query_count covers every victim call made: the
    initial baseline query, 2*pairs per iteration, and the final evaluation.
    """

    delta: Perturbation
    objective_trace: tuple[float, ...]
    query_count: int
    baseline_response: GenerationResponse
    final_response: GenerationResponse


@dataclass(frozen=True)
class EstimatorCheckReport:
    """Aggregate estimator diagnostics over repeated random trials.

    success_fraction: fraction of trials whose estimate satisfied
        (1 - zeta) * |grad|^2 <= |estimate|^2 <= (1 + zeta) * |grad|^2.
    mean_cosine: mean per-trial cosine similarity between estimate and
        true gradient.
    mean_estimate_cosine: cosine between the trial-averaged estimate and the
        trial-averaged true gradient; for victims with a constant gradient
        this measures unbiasedness directly.
    """

    zeta: float
    trials: int
    success_fraction: float
    mean_cosine: float
    mean_estimate_cosine: float

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "trials": self.trials,
            "success_fraction": self.success_fraction,
            "mean_cosine": self.mean_cosine,
            "mean_estimate_cosine": self.mean_estimate_cosine,
        }


def sample_noise(q: int, shape: tuple, rng: np.random.Generator) -> list[np.ndarray]:
    """Draw q i.i.d. standard-normal tensors followed by their negations.

    The returned list has length 2q with entry q+j the elementwise negation
    of entry j, so the noise set is symmetric by construction.
    """
    if int(q) != q or q < 1:
        raise ConfigError(f"q must be an integer >= 1, got {q}")
    base = [rng.standard_normal(shape) for _ in range(q)]
    return base + [-mu for mu in base]


def nes_gradient(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    q: int,
    eta: float,
    rng: np.random.Generator,
    f_batch: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Antithetic zero-order gradient estimate of f at x.

    Evaluates f at x + eta*mu and x - eta*mu for each of q Gaussian noise
    tensors mu and averages the paired-difference estimates

        g_j = (f(x + eta*mu_j) - f(x - eta*mu_j)) * mu_j / (2 * eta).

    The paired form is algebraically identical to summing all 2q single-sided
    terms but halves floating-point cancellation: a constant objective yields
    the exact zero tensor.  Returns the estimate and the sampled values in
    call order (plus, minus, pair by pair).
    """
    if eta <= 0.0:
        raise ConfigError(f"eta must be positive, got {eta}")
    noise = sample_noise(q, x.shape, rng)
    if f_batch is not None:
        points = np.stack(
            [x + eta * mu for mu in noise[:q]] + [x - eta * mu for mu in noise[:q]]
        )
        values = np.asarray(f_batch(points), dtype=np.float64)
        plus, minus = values[:q], values[q:]
    else:
        plus = np.array([f(x + eta * noise[j]) for j in range(q)], dtype=np.float64)
        minus = np.array([f(x - eta * noise[j]) for j in range(q)], dtype=np.float64)
    ghat = np.zeros_like(x, dtype=np.float64)
    for j in range(q):
        ghat += (plus[j] - minus[j]) * noise[j]
    ghat /= 2.0 * eta * q
    ordered = [v for j in range(q) for v in (float(plus[j]), float(minus[j]))]
    return ghat, ordered


def estimate_gradient(
    delta: Perturbation,
    image: ImageTensor,
    victim,
    objective: ObjectiveParams,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """One NES gradient estimate of the efficiency objective at delta.

    Every probed point is box-clamped onto valid pixels before the victim
    sees it, so the victim is only ever queried with realistic images.
    """

    def f(d: np.ndarray) -> float:
        probe = ImageTensor(apply_array(image.data, d))
        return total_objective(victim.query(probe, cfg.decode), objective)

    ghat, _ = nes_gradient(f, delta.data, cfg.pairs, cfg.eta, rng)
    return ghat


def _timed_query(victim, image: ImageTensor, decode: dict | None) -> tuple[GenerationResponse, float]:
    """Query a victim and report wall-clock latency in milliseconds.

    Prefers the client-recorded latency when the victim's transport supplies
    one; otherwise the call is timed here (in-process victims).
    """
    start = time.perf_counter()
    resp = victim.query(image, decode)
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    if resp.client_latency_ms is not None:
        return resp, float(resp.client_latency_ms)
    return resp, elapsed_ms


def attack(
    image: ImageTensor,
    victim,
    cfg: AttackConfig,
    trace_path: str | None = None,
) -> AttackResult:
    """Search for a budget-constrained perturbation maximizing the objective.

    Starting from the zero perturbation, each iteration draws all noise
    tensors up front (so concurrency or retries cannot disturb the random
    stream), makes 2*pairs victim queries on box-clamped probe images,
    forms the antithetic gradient estimate, steps by step_size along it, and
    projects back onto the L2 ball of radius eps.

    When trace_path is given, one JSON record per iteration is written with
    the iteration index, the sampled-objective mean, the perturbation norm,
    and the per-call latencies in milliseconds.
    """
    rng = np.random.default_rng(cfg.seed)
    shape = image.shape
    delta = np.zeros(shape, dtype=np.float64)
    trace: list[dict] = []
    query_count = 0

    def run_query(iteration: int, probe: ImageTensor) -> tuple[GenerationResponse, float]:
        nonlocal query_count
        try:
            resp, latency_ms = _timed_query(victim, probe, cfg.decode)
        except Exception as exc:
            raise AttackError(iteration, f"victim query failed: {exc}", trace) from exc
        query_count += 1
        return resp, latency_ms

    baseline_response, _ = run_query(0, image)

    for t in range(1, cfg.iterations + 1):
        noise = sample_noise(cfg.pairs, shape, rng)
        plus = np.empty(cfg.pairs)
        minus = np.empty(cfg.pairs)
        latencies: list[float] = []
        for j in range(cfg.pairs):
            for sign, store in ((1.0, plus), (-1.0, minus)):
                probe = ImageTensor(apply_array(image.data, delta + cfg.eta * sign * noise[j]))
                resp, latency_ms = run_query(t, probe)
                value = total_objective(resp, cfg.objective)
                if not math.isfinite(value):
                    raise AttackError(t, f"non-finite objective value {value!r}", trace)
                store[j] = value
                latencies.append(latency_ms)
        ghat = np.zeros(shape, dtype=np.float64)
        for j in range(cfg.pairs):
            ghat += (plus[j] - minus[j]) * noise[j]
        ghat /= 2.0 * cfg.eta * cfg.pairs
        delta = clip_l2_array(delta + cfg.step_size * ghat, cfg.eps)
        assert float(np.linalg.norm(delta.ravel())) <= cfg.eps + EPS_TOLERANCE
        sampled_mean = float((plus.sum() + minus.sum()) / (2 * cfg.pairs))
        trace.append(
            {
                "iteration": t,
                "objective": sampled_mean,
                "delta_l2": float(np.linalg.norm(delta.ravel())),
                "latencies_ms": latencies,
            }
        )

    final_response, _ = run_query(cfg.iterations + 1, ImageTensor(apply_array(image.data, delta)))

    if trace_path is not None:
        with open(trace_path, "w", encoding="utf-8") as fh:
            for record in trace:
                fh.write(json.dumps(record) + "\n")

    expected = 2 * cfg.pairs * cfg.iterations + 2
    assert query_count == expected, f"query budget violated: {query_count} != {expected}"
    return AttackResult(
        delta=Perturbation(delta),
        objective_trace=tuple(r["objective"] for r in trace),
        query_count=query_count,
        baseline_response=baseline_response,
        final_response=final_response,
    )


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a.ravel()))
    nb = float(np.linalg.norm(b.ravel()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.ravel(), b.ravel()) / (na * nb))


def estimator_check(
    victim,
    d: int,
    q: int,
    eta: float,
    zeta: float,
    trials: int,
    seed: int = 0,
    params: ObjectiveParams | None = None,
) -> EstimatorCheckReport:
    """Measure gradient-estimate quality against a closed-form oracle.

    Each trial draws a random interior point, forms the antithetic estimate
    of the objective's gradient there, and compares it with the victim's
    exact gradient: the squared-norm ratio must land in [1-zeta, 1+zeta] for
    the trial to count as a success.  The victim must expose ``value`` (or
    ``value_batch``) and ``grad_total``; victims lacking the gradient oracle
    are rejected.
    """
    if not hasattr(victim, "grad_total"):
        raise ConfigError("victim does not expose a gradient oracle (grad_total)")
    if not (0.0 < zeta < 1.0):
        raise ConfigError(f"zeta must be in (0, 1), got {zeta}")
    if int(trials) != trials or trials < 1:
        raise ConfigError(f"trials must be an integer >= 1, got {trials}")
    if params is None:
        params = ObjectiveParams(k=max(2, getattr(victim, "k", 2)))

    rng = np.random.default_rng(seed)
    batch = getattr(victim, "value_batch", None)
    f_batch = (lambda pts: batch(pts, params)) if batch is not None else None
    f = lambda x: victim.value(x, params)

    successes = 0
    cosines: list[float] = []
    ghat_sum = np.zeros(d, dtype=np.float64)
    grad_sum = np.zeros(d, dtype=np.float64)
    for _ in range(trials):
        # Interior points keep probes far from the pixel box walls, so the
        # smooth analytic maps are probed where they are actually smooth.
        x = rng.uniform(64.0, 192.0, size=d)
        ghat, _ = nes_gradient(f, x, q, eta, rng, f_batch=f_batch)
        grad = np.asarray(victim.grad_total(x, params), dtype=np.float64)
        sq_ratio_lo = (1.0 - zeta) * float(np.dot(grad, grad))
        sq_ratio_hi = (1.0 + zeta) * float(np.dot(grad, grad))
        sq = float(np.dot(ghat, ghat))
        if sq_ratio_lo <= sq <= sq_ratio_hi:
            successes += 1
        cosines.append(_cosine(ghat, grad))
        ghat_sum += ghat
        grad_sum += grad

    return EstimatorCheckReport(
        zeta=float(zeta),
        trials=int(trials),
        success_fraction=successes / trials,
        mean_cosine=float(np.mean(cosines)),
        mean_estimate_cosine=_cosine(ghat_sum / trials, grad_sum / trials),
    )
