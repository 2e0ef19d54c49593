"""Command-line entry point.

Subcommands: ``attack`` (perturbation search over an image batch),
``baseline`` (budget-matched Gaussian corruption), ``eval`` (metrics over a
saved original/adversarial pair), ``estimator-check`` (gradient-estimator
diagnostics against closed-form victims), and ``serve-mock`` (serve a
synthetic victim over the wire protocol).

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
The endpoint URL and output directory can also come from the environment
(SLOWGEN_ENDPOINT, SLOWGEN_OUT); explicit flags win over the environment,
which wins over the config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, SlowgenError
from .harness import (
    ExperimentConfig,
    attack_config_from_dict,
    build_victim,
    evaluate_pair,
    run_experiment,
)
from .imageops import load_image
from .mockserver import MockVictimServer
from .optimizer import estimator_check
from .victims import AnalyticVictim, LinearVictim, QuadraticVictim, victim_from_spec


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise _UsageError(message)


def _load_json(path: str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{what} {path} must contain a JSON object")
    return obj


def _resolve_images(conf: dict) -> tuple[str, ...]:
    if "images" in conf:
        images = conf["images"]
        if not isinstance(images, list) or not all(isinstance(p, str) for p in images):
            raise ConfigError("'images' must be a list of paths")
        return tuple(images)
    if "image_dir" in conf:
        directory = Path(conf["image_dir"])
        if not directory.is_dir():
            raise ConfigError(f"image_dir {directory} is not a directory")
        images = tuple(sorted(str(p) for p in directory.glob("*.png")))
        if not images:
            raise ConfigError(f"image_dir {directory} contains no .png files")
        return images
    raise ConfigError("config needs 'images' or 'image_dir'")


def _resolve_victim_spec(conf: dict) -> dict | None:
    spec = conf.get("victim_spec")
    if spec is None:
        return None
    if isinstance(spec, str):
        return _load_json(spec, "victim spec")
    if isinstance(spec, dict):
        return spec
    raise ConfigError("'victim_spec' must be a mapping or a path to a JSON file")


def _resolve_defense(conf: dict) -> int | None:
    defense = conf.get("defense")
    if defense is None:
        return None
    if not isinstance(defense, dict) or defense.get("kind") != "quantize":
        raise ConfigError("'defense' must be null or {\"kind\": \"quantize\", \"bits\": n}")
    return int(defense.get("bits", 4))


def _experiment_config(args: argparse.Namespace, method: str) -> ExperimentConfig:
    conf = _load_json(args.config, "config file")
    endpoint = args.endpoint or os.environ.get("SLOWGEN_ENDPOINT") or conf.get("endpoint")
    out_dir = args.out or os.environ.get("SLOWGEN_OUT") or conf.get("out_dir")
    if out_dir is None:
        raise ConfigError("no output directory: use --out, SLOWGEN_OUT, or 'out_dir'")
    attack_cfg = attack_config_from_dict(conf.get("attack", {}))
    if args.seed is not None:
        attack_cfg = replace(attack_cfg, seed=args.seed)
    sigma = conf.get("sigma", 8.0)
    if getattr(args, "sigma", None) is not None:
        sigma = args.sigma
    return ExperimentConfig(
        images=_resolve_images(conf),
        out_dir=str(out_dir),
        attack=attack_cfg,
        method=method,
        endpoint=endpoint,
        victim_spec=None if endpoint else _resolve_victim_spec(conf),
        defense_bits=_resolve_defense(conf),
        sigma=sigma,
        topk_request=conf.get("topk_request"),
        latency_repeats=conf.get("latency_repeats"),
    )


def _cmd_attack(args: argparse.Namespace) -> int:
    return _run_batch(args, "attack")


def _cmd_baseline(args: argparse.Namespace) -> int:
    return _run_batch(args, "gaussian")


def _run_batch(args: argparse.Namespace, method: str) -> int:
    report = run_experiment(_experiment_config(args, method))
    print(json.dumps(report.aggregates, indent=2))
    if report.aggregates["images_completed"] == 0:
        print("every image failed; see report.jsonl", file=sys.stderr)
        return 2
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    endpoint = args.endpoint or os.environ.get("SLOWGEN_ENDPOINT")
    if endpoint is None and args.victim_spec is None:
        raise ConfigError("eval needs --endpoint (or SLOWGEN_ENDPOINT) or --victim-spec")
    if endpoint is not None:
        cfg = ExperimentConfig(
            images=(args.orig,), out_dir=".", endpoint=endpoint, method="none"
        )
        victim = build_victim(cfg)
    else:
        victim = victim_from_spec(_load_json(args.victim_spec, "victim spec"))
    record = evaluate_pair(
        victim,
        load_image(args.orig),
        load_image(args.adv),
        defense_bits=args.defense_bits,
        repeats=args.repeats,
    )
    record["orig_path"] = args.orig
    record["adv_path"] = args.adv
    out = json.dumps(record, indent=2)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "eval.json").write_text(out + "\n", encoding="utf-8")
    print(out)
    return 0


_DIAGNOSTIC_VICTIMS = {
    "linear": LinearVictim.from_seed,
    "analytic": lambda d, seed: AnalyticVictim.from_seed(d, seed=seed),
    "quadratic": QuadraticVictim.from_seed,
}


def _cmd_estimator_check(args: argparse.Namespace) -> int:
    victim = _DIAGNOSTIC_VICTIMS[args.victim](args.d, seed=args.seed or 0)
    report = estimator_check(
        victim,
        d=args.d,
        q=args.q,
        eta=args.eta,
        zeta=args.zeta,
        trials=args.trials,
        seed=(args.seed or 0) + 1,
    )
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def _cmd_serve_mock(args: argparse.Namespace) -> int:
    victim = victim_from_spec(_load_json(args.spec, "victim spec"))
    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise ConfigError(f"--bind must look like host:port, got {args.bind!r}")
    server = MockVictimServer(victim, host=host, port=int(port))
    print(f"serving {victim.name} on {server.endpoint}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="slowgen", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--endpoint", help="victim endpoint URL")
        p.add_argument("--seed", type=int, help="override the attack seed")
        p.add_argument("--out", help="output directory")

    p_attack = sub.add_parser("attack", help="run the perturbation search over a batch")
    p_attack.add_argument("--config", required=True, help="experiment config JSON")
    common(p_attack)
    p_attack.set_defaults(func=_cmd_attack)

    p_base = sub.add_parser("baseline", help="run the Gaussian corruption baseline")
    p_base.add_argument("--config", required=True, help="experiment config JSON")
    p_base.add_argument("--sigma", type=float, help="noise standard deviation")
    common(p_base)
    p_base.set_defaults(func=_cmd_baseline)

    p_eval = sub.add_parser("eval", help="metrics over one saved image pair")
    p_eval.add_argument("--orig", required=True, help="original image (PNG)")
    p_eval.add_argument("--adv", required=True, help="adversarial image (PNG)")
    p_eval.add_argument("--victim-spec", help="in-process victim spec JSON")
    p_eval.add_argument("--defense-bits", type=int, help="quantize both images first")
    p_eval.add_argument("--repeats", type=int, default=3, help="measured queries per image")
    common(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_est = sub.add_parser("estimator-check", help="gradient estimator diagnostics")
    p_est.add_argument("--victim", choices=sorted(_DIAGNOSTIC_VICTIMS), default="analytic")
    p_est.add_argument("--d", type=int, default=64, help="input dimension")
    p_est.add_argument("--q", type=int, default=500, help="noise pairs per estimate")
    p_est.add_argument("--eta", type=float, default=1e-3, help="search radius")
    p_est.add_argument("--zeta", type=float, default=0.5, help="squared-norm tolerance")
    p_est.add_argument("--trials", type=int, default=100)
    p_est.add_argument("--seed", type=int, default=0)
    p_est.set_defaults(func=_cmd_estimator_check)

    p_mock = sub.add_parser("serve-mock", help="serve a synthetic victim over HTTP")
    p_mock.add_argument("--spec", required=True, help="victim spec JSON")
    p_mock.add_argument("--bind", default="127.0.0.1:8080", help="host:port to bind")
    p_mock.set_defaults(func=_cmd_serve_mock)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SlowgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
