"""End-to-end acceptance checks, one test per shipping criterion.

Each test asserts its stated tolerance and prints one PASS/FAIL line with
the measured numbers, so running this file (with -s or -v) doubles as the
release checklist.  The expensive end-to-end batches come from session
fixtures in conftest and run once.
"""

from __future__ import annotations

import json
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from slowgen import (
    AnalyticVictim,
    AttackConfig,
    ExperimentConfig,
    ImageTensor,
    LinearVictim,
    MockVictimServer,
    ObjectiveParams,
    encode_request,
    eos_objective,
    estimator_check,
    evaluate_pair,
    load_image,
    nes_gradient,
    parse_response,
    run_experiment,
    total_objective,
    var_objective,
)
from slowgen.errors import MalformedResponseError
from slowgen.optimizer import sample_noise
from conftest import ATTACK_SEED, EPS, RULE_SPEC, frozen_rule_victim
from support import GOLDEN_IMAGE, GOLDEN_K, golden_victim, make_response, uniform_rows

FIXTURES = Path(__file__).resolve().parent / "fixtures"


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_objective_unit_fidelity():
    two = make_response([0.5, 0.5], uniform_rows(2, 4))
    three = make_response([0.1, 0.2, 0.3], uniform_rows(3, 4))
    peaked = make_response([0.1], np.array([[0.8, 0.2]]))
    errors = [
        abs(eos_objective(two, 0.1) - (-0.55)),
        abs(eos_objective(three, 0.1) - (-0.321)),
        abs(var_objective(peaked, 2) - (-0.19274475702175753)),
        abs(
            (10.0 + 0.5 * eos_objective(two, 0.1) + 0.1 * var_objective(peaked, 2))
            - 9.705725524297824
        ),
    ]
    worst = max(errors)
    _report(
        "objective unit fidelity",
        worst <= 1e-9,
        f"worst deviation from hand-derived values {worst:.3e} (tol 1e-9)",
    )


def test_estimator_exactness():
    ghat, _ = nes_gradient(lambda x: 3.5, np.zeros(7), 5, 0.1, np.random.default_rng(1))
    constant_exact = bool(np.array_equal(ghat, np.zeros(7)))

    a = np.array([1.5, -2.0, 0.25, 3.0, -0.5])
    q, seed = 4, 42
    noise = sample_noise(q, (5,), np.random.default_rng(seed))
    expected = sum(float(a @ noise[j]) * noise[j] for j in range(q)) / q
    got, _ = nes_gradient(
        lambda x: float(a @ x), np.zeros(5), q, 1e-3, np.random.default_rng(seed)
    )
    rel = float(np.linalg.norm(got - expected) / np.linalg.norm(expected))
    _report(
        "estimator exactness",
        constant_exact and rel <= 1e-9,
        f"constant objective exact zero: {constant_exact}; "
        f"linear closed-form relative error {rel:.3e} (tol 1e-9)",
    )


def test_estimator_unbiasedness():
    started = time.perf_counter()
    victim = LinearVictim.from_seed(100, seed=7)
    report = estimator_check(victim, d=100, q=50, eta=0.1, zeta=0.5, trials=200, seed=1)
    elapsed = time.perf_counter() - started
    _report(
        "estimator unbiasedness",
        report.mean_estimate_cosine >= 0.99 and elapsed < 30.0,
        f"mean-estimate cosine {report.mean_estimate_cosine:.4f} (need >= 0.99) "
        f"in {elapsed:.1f}s (limit 30s)",
    )


def test_smoothed_estimator_band():
    started = time.perf_counter()
    victim = AnalyticVictim.from_seed(64, positions=4, k=5, seed=0)
    report = estimator_check(victim, d=64, q=500, eta=1e-3, zeta=0.5, trials=100, seed=1)
    elapsed = time.perf_counter() - started
    _report(
        "smoothed-estimator concentration band",
        report.success_fraction >= 0.9 and report.mean_cosine >= 0.7 and elapsed < 120.0,
        f"success fraction {report.success_fraction:.2f} (need >= 0.9), "
        f"mean cosine {report.mean_cosine:.3f} (need >= 0.7) in {elapsed:.1f}s "
        f"(limit 120s)",
    )


def test_gradient_oracle_finite_differences():
    started = time.perf_counter()
    victim = AnalyticVictim.from_seed(27, positions=4, k=5, seed=2)
    params = ObjectiveParams(k=5)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(64.0, 192.0, 27)
        grad = victim.grad_total(x, params)
        fd = np.zeros_like(x)
        for i in range(x.size):
            step = np.zeros_like(x)
            step[i] = 1e-4
            fd[i] = (victim.value(x + step, params) - victim.value(x - step, params)) / 2e-4
        worst = max(worst, float(np.linalg.norm(grad - fd) / np.linalg.norm(grad)))
    elapsed = time.perf_counter() - started
    _report(
        "gradient oracle vs finite differences",
        worst <= 1e-4 and elapsed < 60.0,
        f"worst relative error over 20 points {worst:.3e} (tol 1e-4) "
        f"in {elapsed:.1f}s (limit 60s)",
    )


def test_end_to_end_attack(attack_batch):
    records = [r for r in attack_batch.per_image if "error" not in r]
    gains = [r["i_length_pct"] for r in records]
    wins = sum(1 for g in gains if g >= 50.0)
    budget_ok = all(r["delta_l2"] <= EPS + 1e-6 for r in records)
    pixels_ok = True
    for r in records:
        data = load_image(r["adv_path"]).data
        pixels_ok = pixels_ok and data.min() >= 0.0 and data.max() <= 255.0
    wall = attack_batch.aggregates["wall_time_s"]
    _report(
        "end-to-end attack on the rule victim",
        len(records) == 10 and wins >= 8 and budget_ok and pixels_ok and wall < 60.0,
        f"{wins}/10 images gained >= +50% length "
        f"(median {statistics.median(gains):.1f}%), perturbation norms within "
        f"{EPS} + 1e-6: {budget_ok}, saved pixels in [0,255]: {pixels_ok}, "
        f"batch wall time {wall:.1f}s (limit 60s)",
    )


def test_baseline_ordering(attack_batch, gaussian_batch):
    attack_median = attack_batch.aggregates["i_length_pct_median"]
    gaussian_median = gaussian_batch.aggregates["i_length_pct_median"]
    wall = gaussian_batch.aggregates["wall_time_s"]
    _report(
        "budget-matched Gaussian baseline ordering",
        gaussian_median < attack_median and wall < 30.0,
        f"gaussian median {gaussian_median:.1f}% < attack median "
        f"{attack_median:.1f}% (strict), baseline wall time {wall:.1f}s (limit 30s)",
    )


def test_determinism_over_mock(seed_images, tmp_path_factory):
    started = time.perf_counter()
    images = seed_images[:2]

    def run(out_dir: Path):
        with MockVictimServer(frozen_rule_victim()) as server:
            cfg = ExperimentConfig(
                images=images,
                out_dir=str(out_dir),
                attack=AttackConfig(iterations=25, eps=EPS, seed=ATTACK_SEED),
                method="attack",
                endpoint=server.endpoint,
                topk_request=RULE_SPEC["k"],
            )
            return run_experiment(cfg)

    base = tmp_path_factory.mktemp("determinism")
    first = run(base / "a")
    second = run(base / "b")
    deltas_equal = True
    for ra, rb in zip(first.per_image, second.per_image):
        da = (Path(ra["adv_path"]).parent / f"{ra['image']}_delta.npy").read_bytes()
        db = (Path(rb["adv_path"]).parent / f"{rb['image']}_delta.npy").read_bytes()
        deltas_equal = deltas_equal and da == db
    lengths_equal = all(
        ra["length_adv"] == rb["length_adv"] and ra["length_orig"] == rb["length_orig"]
        for ra, rb in zip(first.per_image, second.per_image)
    )
    elapsed = time.perf_counter() - started
    _report(
        "determinism across identical mock runs",
        deltas_equal and lengths_equal and elapsed < 30.0,
        f"final perturbations bit-identical: {deltas_equal}, report lengths "
        f"identical: {lengths_equal}, in {elapsed:.1f}s (limit 30s)",
    )


def test_defense_robustness_trend(attack_batch, rule_victim):
    started = time.perf_counter()
    records = [r for r in attack_batch.per_image if "error" not in r]
    undefended = statistics.median(r["i_length_pct"] for r in records)
    defended_gains = []
    for r in records:
        orig = load_image(r["image_path"])
        adv = load_image(r["adv_path"])
        defended = evaluate_pair(rule_victim, orig, adv, defense_bits=4, repeats=1)
        defended_gains.append(defended["i_length_pct"])
    defended_median = statistics.median(defended_gains)
    decrease_pct = (undefended - defended_median) / undefended * 100.0
    elapsed = time.perf_counter() - started
    _report(
        "4-bit quantization defense trend",
        decrease_pct < 20.0 and elapsed < 60.0,
        f"median gain {undefended:.1f}% -> {defended_median:.1f}% under defense "
        f"(decrease {decrease_pct:.1f}%, must stay < 20%) in {elapsed:.1f}s "
        f"(limit 60s)",
    )


def test_protocol_conformance():
    stored_request = (FIXTURES / "golden_request.json").read_bytes()
    stored_response = (FIXTURES / "golden_response.json").read_bytes()
    request_ok = encode_request(ImageTensor(GOLDEN_IMAGE), GOLDEN_K) == stored_request

    import requests

    with MockVictimServer(golden_victim()) as server:
        wire = requests.post(
            server.endpoint + "/v1/generate", data=stored_request, timeout=30
        ).content
    response_ok = wire == stored_response

    doc = json.loads(stored_response)
    doc["length"] = doc["length"] + 1
    mismatch_raises = False
    try:
        parse_response(json.dumps(doc).encode())
    except MalformedResponseError:
        mismatch_raises = True
    doc = json.loads(stored_response)
    doc["positions"][0]["eos_prob"] = 1.5
    range_raises = False
    try:
        parse_response(json.dumps(doc).encode())
    except MalformedResponseError:
        range_raises = True

    _report(
        "wire protocol conformance",
        request_ok and response_ok and mismatch_raises and range_raises,
        f"golden request bytes match: {request_ok}, live mock response bytes "
        f"match: {response_ok}, malformed responses rejected: "
        f"{mismatch_raises and range_raises}",
    )


def test_objective_trace_trend(attack_batch):
    # Statistical invariant of the search on the rule victim: the median
    # sampled objective across the batch does not decrease from the first
    # iteration to the last.
    trace_dir = Path(attack_batch.out_dir) / "traces"
    firsts, lasts = [], []
    for path in sorted(trace_dir.glob("*.jsonl")):
        records = [json.loads(line) for line in path.read_text().splitlines()]
        firsts.append(records[0]["objective"])
        lasts.append(records[-1]["objective"])
    assert len(firsts) == 10
    assert statistics.median(lasts) >= statistics.median(firsts)
