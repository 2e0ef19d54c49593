"""Command line for the adapter: load one model, serve it over HTTP.

Flags override config-file values.  Exit codes: 0 clean shutdown,
1 usage or configuration error (including an unloadable model).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import AdapterConfig, load_config
from .errors import AdapterConfigError
from .server import AdapterServer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="model-adapter", description=__doc__.split("\n")[0]
    )
    parser.add_argument("--config", help="adapter config JSON file")
    parser.add_argument("--model", help="model id, or builtin:tiny[?options]")
    parser.add_argument("--device", help="torch device, default cpu")
    parser.add_argument("--topk", type=int, help="widest top-k the server reports")
    parser.add_argument("--max-new-tokens", type=int, help="decode length ceiling")
    parser.add_argument("--bind", default="127.0.0.1:8080", help="host:port to bind")
    return parser


def resolve_config(args: argparse.Namespace) -> AdapterConfig:
    config = load_config(args.config) if args.config else AdapterConfig()
    overrides = {
        "model": args.model,
        "device": args.device,
        "k": args.topk,
        "max_new_tokens": args.max_new_tokens,
    }
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        print(f"--bind must look like host:port, got {args.bind!r}", file=sys.stderr)
        return 1
    try:
        config = resolve_config(args)
        server = AdapterServer(config, host=host, port=int(port))
    except AdapterConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    print(f"serving {config.model} on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
