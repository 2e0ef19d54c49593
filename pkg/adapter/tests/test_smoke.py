"""End-to-end smoke: the attack toolkit against the served builtin model.

This is the slow test in the suite (several minutes): 100 iterations at
5 noise pairs is 1002 queries per image, times ten images, each query a
full greedy decode.  It asserts the one thing that matters: driven purely
over HTTP, the attack pipeline completes and lengthens decodes on the
median image.
"""

from __future__ import annotations

import statistics
import time
from pathlib import Path

from slowgen import AttackConfig, ExperimentConfig, ObjectiveParams, run_experiment

ITERATIONS = 100
PAIRS = 5
# Probes must survive the wire: images travel as uint8, so the search
# radius has to move pixels by whole levels or the victim cannot see it.
ETA = 4.0
EPS = 64.0


def test_attack_pipeline_on_served_model(tiny_server, seed_images, tmp_path):
    started = time.perf_counter()
    cfg = ExperimentConfig(
        images=seed_images,
        out_dir=str(tmp_path / "smoke"),
        attack=AttackConfig(
            iterations=ITERATIONS,
            pairs=PAIRS,
            eta=ETA,
            eps=EPS,
            seed=0,
            objective=ObjectiveParams(k=8),
        ),
        method="attack",
        endpoint=tiny_server.endpoint,
    )
    report = run_experiment(cfg)
    elapsed = time.perf_counter() - started

    completed = [r for r in report.per_image if "error" not in r]
    gains = [r["i_length_pct"] for r in completed]
    median = statistics.median(gains)
    out = Path(report.out_dir)
    files_ok = (out / "report.jsonl").exists() and (out / "aggregates.csv").exists()
    budget_ok = all(r["delta_l2"] <= EPS + 1e-6 for r in completed)

    verdict = "PASS" if (median > 0.0 and len(completed) == 10 and files_ok) else "FAIL"
    print(
        f"[{verdict}] attack on served model: median length gain {median:+.1f}% "
        f"(need > 0) over {len(completed)}/10 images, report files written: "
        f"{files_ok}, budgets kept: {budget_ok}, {elapsed:.0f}s"
    )
    assert len(completed) == 10, [r.get("error") for r in report.per_image]
    assert files_ok
    assert budget_ok
    assert median > 0.0
