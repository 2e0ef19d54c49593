"""Run the full attack loop on one image against the in-process rule victim.

The rule victim maps mean brightness to output length, so a successful
attack brightens the image within its L2 budget and the decode gets
longer.  The script prints the objective trace as the search runs and the
before/after lengths at the end.
"""

from __future__ import annotations

import argparse

import numpy as np

from slowgen import AttackConfig, ImageTensor, ObjectiveParams, RuleVictim, attack


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iterations", type=int, default=200)
    parser.add_argument("--pairs", type=int, default=5, help="noise pairs per step")
    parser.add_argument("--eps", type=float, default=64.0, help="L2 budget, 0-255 units")
    parser.add_argument("--max-length", type=int, default=8192)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    # A dim 3x3 image leaves plenty of headroom to brighten.  The large
    # max_length keeps the victim's length staircase fine enough for the
    # eta-sized probes to feel it.
    rng = np.random.default_rng(args.seed)
    image = ImageTensor(rng.integers(0, 17, size=(3, 3, 3)).astype(np.float64))
    victim = RuleVictim(max_length=args.max_length, k=8, sharpness=4.0, seed=11)

    cfg = AttackConfig(
        iterations=args.iterations,
        pairs=args.pairs,
        eps=args.eps,
        seed=args.seed,
        objective=ObjectiveParams(k=8),
    )
    baseline = victim.query(image)
    print(f"baseline decode length: {baseline.length} tokens")
    print(f"budget: ||delta||_2 <= {args.eps}, queries per step: {2 * args.pairs}")
    print()

    result = attack(image, victim, cfg)

    stride = max(1, args.iterations // 10)
    print("iteration  objective")
    for i, value in enumerate(result.objective_trace, start=1):
        if i == 1 or i % stride == 0 or i == args.iterations:
            print(f"{i:9d}  {value:10.3f}")
    print()

    norm = float(np.linalg.norm(result.delta.data.ravel()))
    gain = 100.0 * (result.final_response.length - baseline.length) / baseline.length
    print(f"queries spent: {result.query_count}")
    print(f"final ||delta||_2 = {norm:.2f} (budget {args.eps})")
    print(
        f"decode length {baseline.length} -> {result.final_response.length} "
        f"tokens ({gain:+.1f}%)"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
