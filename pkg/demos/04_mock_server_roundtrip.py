"""Exercise the JSON wire protocol against a local mock victim server.

A mock server wraps any in-process victim behind the real HTTP interface,
so the transport path can be tested without a deployed model.  This script
starts one, shows the request and response documents on the wire, and
checks that the HTTP client reproduces the in-process answer.
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from slowgen import (
    HttpVictim,
    ImageTensor,
    MockVictimServer,
    RuleVictim,
    encode_request,
    http_query,
)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--k", type=int, default=4, help="top-k rows to request")
    parser.add_argument("--delay-ms", type=float, default=0.0,
                        help="artificial per-token decode delay")
    args = parser.parse_args(argv)

    rng = np.random.default_rng(7)
    image = ImageTensor(rng.integers(0, 256, size=(2, 2, 3)).astype(np.float64))
    victim = RuleVictim(
        max_length=12, k=6, sharpness=2.0, seed=3,
        delay_ms_per_token=args.delay_ms,
    )

    body = encode_request(image, args.k)
    print("== request on the wire ==")
    doc = json.loads(body)
    pixels = doc.pop("image")
    print(json.dumps(doc, indent=2))
    print(f"(image field: {pixels['height']}x{pixels['width']}x"
          f"{pixels['channels']} pixels as {pixels['encoding']}, "
          f"{len(pixels['data'])} base64 chars)")
    print()

    with MockVictimServer(victim) as server:
        print(f"mock server listening at {server.endpoint}")
        resp = http_query(server.endpoint + "/v1/generate", body)
    print()

    print("== parsed response ==")
    print(f"decode length: {resp.length}")
    print(f"EOS probabilities: {np.round(resp.eos_probs, 4).tolist()}")
    print(f"top-k rows truncated to k = {args.k}: shape {resp.topk_probs.shape}")
    if resp.server_decode_ms is not None:
        print(f"server-reported decode time: {resp.server_decode_ms:.1f} ms")
    if resp.client_latency_ms is not None:
        print(f"client round-trip latency: {resp.client_latency_ms:.1f} ms")
    print()

    # The transport must be transparent: querying over HTTP and in process
    # gives the same payload apart from timing fields.
    direct = victim.query(image)
    with MockVictimServer(victim) as server:
        wired = HttpVictim(server.endpoint, k=victim.k).query(image)
    same = (
        wired.length == direct.length
        and np.array_equal(wired.eos_probs, direct.eos_probs)
        and np.array_equal(wired.topk_probs, direct.topk_probs)
    )
    print(f"HTTP payload matches the in-process victim: {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
