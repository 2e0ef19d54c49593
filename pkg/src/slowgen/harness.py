"""Experiment orchestration: run attacks or baselines over an image set,
measure efficiency deltas, and emit machine-readable reports.

Per image the harness queries the original, runs the selected method, saves
the adversarial image as an 8-bit artifact, and recomputes every reported
metric from that saved file, so numbers always describe a deliverable image
rather than an in-memory float tensor.  When a defense is selected it is
applied to both the original and the adversarial image before their
measured queries, keeping the comparison symmetric.

The energy metric is a decoder-call proxy: generating N tokens costs N
decoder forward passes, so relative energy growth is reported as relative
length growth.  Reports are JSON lines per image plus one aggregate CSV.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import gaussian_baseline, quantize_defense
from .client import HttpVictim
from .errors import ConfigError
from .imageops import ImageTensor, apply, load_image, save_image
from .objectives import GenerationResponse, ObjectiveParams
from .optimizer import AttackConfig, attack
from .victims import VictimEndpoint, victim_from_spec

METHODS = ("attack", "gaussian", "none")


def _relative_pct(orig_value: float | None, adv_value: float | None) -> float | None:
    """Relative increase in percent; undefined (None) on a zero or missing base."""
    if orig_value is None or adv_value is None or orig_value <= 0:
        return None
    return (adv_value - orig_value) / orig_value * 100.0


def i_length(orig: GenerationResponse, adv: GenerationResponse) -> float | None:
    """Relative increase in generated length, percent."""
    return _relative_pct(orig.length, adv.length)


def i_latency(orig: GenerationResponse, adv: GenerationResponse) -> float | None:
    """Relative increase in client-measured latency, percent."""
    return _relative_pct(orig.client_latency_ms, adv.client_latency_ms)


def i_energy_proxy(orig: GenerationResponse, adv: GenerationResponse) -> float | None:
    """Relative increase in decoder calls, percent.

    One generated token costs one decoder call, so this equals the length
    metric by construction; it is reported separately to make the proxy
    explicit.
    """
    return _relative_pct(orig.length, adv.length)


def l2_distance(orig: ImageTensor, adv: ImageTensor) -> float:
    """Euclidean distance between two images in 0-255 pixel units."""
    if orig.shape != adv.shape:
        raise ValueError(f"shape mismatch: {orig.shape} vs {adv.shape}")
    return float(np.linalg.norm((orig.data - adv.data).ravel()))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: an image set, a victim, a method, and output paths.

    Exactly one of ``endpoint`` (remote victim URL) and ``victim_spec``
    (in-process victim description) must be set.  ``defense_bits`` of None
    means no defense.  ``latency_repeats`` defaults to 3 for remote victims
    (median latency is reported) and 1 in process.
    """

    images: tuple[str, ...]
    out_dir: str
    attack: AttackConfig = field(default_factory=AttackConfig)
    method: str = "attack"
    endpoint: str | None = None
    victim_spec: dict | None = None
    defense_bits: int | None = None
    sigma: float = 8.0
    topk_request: int | None = None
    latency_repeats: int | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.images:
            raise ConfigError("no input images given")
        if (self.endpoint is None) == (self.victim_spec is None):
            raise ConfigError("set exactly one of endpoint and victim_spec")
        if self.defense_bits is not None and not (1 <= int(self.defense_bits) <= 8):
            raise ConfigError(f"defense_bits must be in 1..8, got {self.defense_bits}")
        if self.sigma < 0.0:
            raise ConfigError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class EfficiencyReport:
    """Per-image records plus aggregates; ``partial`` marks skipped images."""

    per_image: tuple[dict, ...]
    aggregates: dict
    out_dir: str | None
    partial: bool


def build_victim(cfg: ExperimentConfig) -> VictimEndpoint:
    if cfg.endpoint is not None:
        k = cfg.topk_request or cfg.attack.objective.k
        return HttpVictim(cfg.endpoint, k=k, decode=cfg.attack.decode)
    return victim_from_spec(cfg.victim_spec)


def _measure(
    victim: VictimEndpoint,
    image: ImageTensor,
    decode: dict | None,
    repeats: int,
) -> tuple[GenerationResponse, float]:
    """Query ``repeats`` times; return the last payload with median latency."""
    latencies = []
    resp = None
    for _ in range(repeats):
        start = time.perf_counter()
        resp = victim.query(image, decode)
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        latencies.append(
            resp.client_latency_ms if resp.client_latency_ms is not None else elapsed_ms
        )
    return resp, float(statistics.median(latencies))


def _apply_defense(image: ImageTensor, bits: int | None) -> ImageTensor:
    return image if bits is None else quantize_defense(image, bits)


def evaluate_pair(
    victim: VictimEndpoint,
    orig: ImageTensor,
    adv: ImageTensor,
    decode: dict | None = None,
    defense_bits: int | None = None,
    repeats: int = 1,
) -> dict:
    """Measure one original/adversarial pair and build its metric record."""
    orig_resp, orig_ms = _measure(victim, _apply_defense(orig, defense_bits), decode, repeats)
    adv_resp, adv_ms = _measure(victim, _apply_defense(adv, defense_bits), decode, repeats)
    orig_resp = replace(orig_resp, client_latency_ms=orig_ms)
    adv_resp = replace(adv_resp, client_latency_ms=adv_ms)
    return {
        "length_orig": orig_resp.length,
        "length_adv": adv_resp.length,
        "latency_orig_ms": orig_ms,
        "latency_adv_ms": adv_ms,
        "energy_proxy_orig": orig_resp.length,
        "energy_proxy_adv": adv_resp.length,
        "l2_distance": l2_distance(orig, adv),
        "i_length_pct": i_length(orig_resp, adv_resp),
        "i_latency_pct": i_latency(orig_resp, adv_resp),
        "i_energy_pct": i_energy_proxy(orig_resp, adv_resp),
    }


def _craft_adversarial(
    cfg: ExperimentConfig,
    victim: VictimEndpoint,
    orig: ImageTensor,
    seed: int,
    trace_path: Path | None,
) -> tuple[ImageTensor, np.ndarray | None, int]:
    """Run the selected method; returns (adv image, delta or None, queries)."""
    if cfg.method == "attack":
        result = attack(
            orig,
            victim,
            replace(cfg.attack, seed=seed),
            trace_path=str(trace_path) if trace_path else None,
        )
        return apply(orig, result.delta), result.delta.data, result.query_count
    if cfg.method == "gaussian":
        rng = np.random.default_rng(seed)
        return gaussian_baseline(orig, cfg.sigma, cfg.attack.eps, rng), None, 0
    return orig, None, 0


def run_experiment(cfg: ExperimentConfig) -> EfficiencyReport:
    """Run the configured method over every image and write reports.

    Images run sequentially with per-image seeds derived as seed + index,
    so a batch is reproducible regardless of how it is later parallelized.
    Per-image failures are recorded and skipped; the report marks itself
    partial instead of aborting the batch.
    """
    started = time.perf_counter()
    victim = build_victim(cfg)
    remote = cfg.endpoint is not None
    repeats = cfg.latency_repeats if cfg.latency_repeats is not None else (3 if remote else 1)

    out_dir = Path(cfg.out_dir)
    adv_dir = out_dir / "adv"
    trace_dir = out_dir / "traces"
    adv_dir.mkdir(parents=True, exist_ok=True)
    if cfg.method == "attack":
        trace_dir.mkdir(parents=True, exist_ok=True)

    records: list[dict] = []
    failures = 0
    queries_total = 0
    for idx, path in enumerate(cfg.images):
        image_id = Path(path).stem
        record: dict = {"image": image_id, "image_path": str(path)}
        try:
            orig = load_image(str(path))
            seed = cfg.attack.seed + idx
            trace_path = trace_dir / f"{image_id}.jsonl" if cfg.method == "attack" else None
            adv_float, delta, crafting_queries = _craft_adversarial(
                cfg, victim, orig, seed, trace_path
            )

            adv_path = adv_dir / f"{image_id}.png"
            save_image(adv_float, str(adv_path))
            if delta is not None:
                np.save(adv_dir / f"{image_id}_delta.npy", delta)
            adv_saved = load_image(str(adv_path))

            record.update(
                evaluate_pair(
                    victim,
                    orig,
                    adv_saved,
                    decode=cfg.attack.decode,
                    defense_bits=cfg.defense_bits,
                    repeats=repeats,
                )
            )
            record["adv_path"] = str(adv_path)
            record["seed"] = seed
            queries = crafting_queries + 2 * repeats
            record["queries"] = queries
            queries_total += queries
            if delta is not None:
                record["delta_l2"] = float(np.linalg.norm(delta.ravel()))
        except Exception as exc:
            record["error"] = f"{type(exc).__name__}: {exc}"
            failures += 1
        records.append(record)

    aggregates = _aggregate(cfg, records, failures, queries_total, started)
    _write_reports(out_dir, records, aggregates)
    return EfficiencyReport(
        per_image=tuple(records),
        aggregates=aggregates,
        out_dir=str(out_dir),
        partial=failures > 0,
    )


def _aggregate(
    cfg: ExperimentConfig,
    records: list[dict],
    failures: int,
    queries_total: int,
    started: float,
) -> dict:
    aggregates: dict = {
        "method": cfg.method,
        "defense_bits": cfg.defense_bits,
        "images_total": len(records),
        "images_completed": len(records) - failures,
        "images_failed": failures,
        "queries_total": queries_total,
        "wall_time_s": time.perf_counter() - started,
    }
    for metric in ("i_length_pct", "i_latency_pct", "i_energy_pct"):
        values = [r[metric] for r in records if r.get(metric) is not None]
        aggregates[f"{metric}_mean"] = statistics.mean(values) if values else None
        aggregates[f"{metric}_median"] = statistics.median(values) if values else None
    return aggregates


def _write_reports(out_dir: Path, records: list[dict], aggregates: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    with open(out_dir / "aggregates.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(aggregates.keys()))
        writer.writeheader()
        writer.writerow(aggregates)


def attack_config_from_dict(raw: dict) -> AttackConfig:
    """Build an AttackConfig from parsed JSON, rejecting unknown keys."""
    known = {
        "iterations", "pairs", "eta", "step_size", "eps", "seed", "decode", "objective",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown attack config keys: {sorted(unknown)}")
    kwargs = {key: raw[key] for key in known & set(raw) if key != "objective"}
    if "objective" in raw:
        obj = raw["objective"]
        obj_known = {"omega", "alpha", "beta", "k"}
        obj_unknown = set(obj) - obj_known
        if obj_unknown:
            raise ConfigError(f"unknown objective config keys: {sorted(obj_unknown)}")
        kwargs["objective"] = ObjectiveParams(**obj)
    return AttackConfig(**kwargs)
