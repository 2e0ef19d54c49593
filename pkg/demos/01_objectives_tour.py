"""Tour of the efficiency objectives on hand-built decoder outputs.

The attack never sees model internals.  Everything it optimizes is computed
from the per-position records a victim returns: an end-of-sequence
probability and the top-k next-token probabilities.  This script builds a
few tiny fake outputs and walks through the three objective terms and their
weighted sum.
"""

from __future__ import annotations

import argparse

import numpy as np

from slowgen import (
    GenerationResponse,
    ObjectiveParams,
    eos_objective,
    len_objective,
    total_objective,
    var_objective,
)


def fake_response(eos: list[float], rows: list[list[float]]) -> GenerationResponse:
    return GenerationResponse(
        length=len(eos),
        eos_probs=np.asarray(eos, dtype=np.float64),
        topk_probs=np.asarray(rows, dtype=np.float64),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--omega", type=float, default=0.1, help="EOS discount")
    args = parser.parse_args(argv)

    # Two decodes of the same nominal length.  The first is confident it is
    # done (high EOS probability late), the second wants to keep talking.
    eager = fake_response([0.1, 0.3, 0.9], [[0.7, 0.2, 0.1]] * 3)
    rambling = fake_response([0.1, 0.1, 0.1], [[0.4, 0.3, 0.3]] * 3)

    print("== length term ==")
    print(f"both decodes emit {len_objective(eager):.0f} tokens, so the length")
    print("term alone cannot tell them apart")
    print()

    print(f"== EOS term (omega = {args.omega}) ==")
    for name, resp in [("eager", eager), ("rambling", rambling)]:
        value = eos_objective(resp, args.omega)
        print(f"  {name:9s} {value:+.4f}")
    print("the term is a negated discounted sum, so the eager decode scores")
    print("lower: pushing it up means suppressing the stop signal, with the")
    print("final position weighted hardest")
    print()

    print("== output-diversity term (k = 3) ==")
    flat = fake_response([0.2], [[1 / 3, 1 / 3, 1 / 3]])
    peaked = fake_response([0.2], [[0.8, 0.15, 0.05]])
    for name, resp in [("uniform", flat), ("peaked", peaked)]:
        value = var_objective(resp, 3)
        print(f"  {name:9s} {value:+.6f}")
    print("uniform top-k sits exactly at zero, the maximum; any sharpness is")
    print("penalized through the KL divergence to uniform")
    print()

    params = ObjectiveParams(omega=args.omega, alpha=0.5, beta=0.1, k=3)
    print("== weighted total (alpha = 0.5, beta = 0.1) ==")
    for name, resp in [("eager", eager), ("rambling", rambling)]:
        print(f"  {name:9s} {total_objective(resp, params):+.4f}")
    print("maximizing the total trades off longer outputs, weaker stop")
    print("signals, and flatter next-token distributions")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
