"""``hawkes-field`` command line entry point.

Exit codes: 0 success, 1 operational error, 2 identity-suite failure,
3 statistical-acceptance failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..config import ConfigError, bundled_config, load_model_config
from ..core import SpaceTimeGrid
from .experiments import DEFAULT_PHIS, ExperimentConfig, resolve_workers, run_experiment

EXIT_OK, EXIT_ERROR, EXIT_IDENTITY, EXIT_STATISTICAL = 0, 1, 2, 3

_DEFAULTS = {
    "simulate": {"n_list": [256], "replicas": 1, "grid_time": 256},
    "nfe": {"n_list": [1], "replicas": 1, "grid_time": 256},
    "clt": {"n_list": [256, 1024], "replicas": 2000, "grid_time": 256},
    "snfe-converge": {"n_list": [4, 16, 64, 256], "replicas": 200, "grid_time": 256},
    "couple": {"n_list": [4, 16, 64, 256], "replicas": 200, "grid_time": 256},
    "identities": {"n_list": [8, 32], "replicas": 1, "grid_time": 256},
}


def _add_common(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None),
                   help="model TOML file or the name of a bundled config (default: sigmoid_mexican)")
    p.add_argument("--seed", type=int, default=d(0), help="master seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, default=d(1), help="worker processes (HF_WORKERS overrides)")
    p.add_argument("--out", type=Path, default=d(Path("hf-out")), help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=d("csv"), help="format of per-replica tables")


def _n_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hawkes-field", description="Hawkes neural field fluctuation experiments")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _DEFAULTS:
        p = sub.add_parser(name)
        _add_common(p, suppress=True)
        p.add_argument("--n-list", type=_n_list, default=None, help="comma-separated network sizes")
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--limit-replicas", type=int, default=2000, help="Gaussian-limit ensemble size (clt)")
        p.add_argument("--grid-space", type=int, default=64)
        p.add_argument("--grid-time", type=int, default=None)
        p.add_argument("--horizon", type=float, default=1.0)
        p.add_argument("--method", choices=("picard", "euler"), default="picard", help="NFE solver for u")
        p.add_argument("--phis", default=",".join(DEFAULT_PHIS), help="comma-separated test-function labels")
    return parser


def _load_model(ref):
    if ref is None:
        ref = "sigmoid_mexican"
    path = Path(ref)
    if not path.exists():
        path = bundled_config(ref)
    return load_model_config(path), str(ref)


def config_from_args(args) -> ExperimentConfig:
    model, name = _load_model(args.config)
    d = _DEFAULTS[args.command]
    return ExperimentConfig(
        kind=args.command,
        model=model,
        n_list=tuple(args.n_list or d["n_list"]),
        replicas=args.replicas if args.replicas is not None else d["replicas"],
        grid=SpaceTimeGrid(args.grid_space, args.grid_time or d["grid_time"], args.horizon),
        phis=tuple(p for p in args.phis.split(",") if p),
        seed=args.seed,
        limit_replicas=args.limit_replicas,
        method=args.method,
        config_name=name,
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run_experiment(cfg, resolve_workers(args.workers))
        paths = report.write(args.out, args.format)
    except (ConfigError, FileNotFoundError, KeyError, ValueError, OSError, RuntimeError, FloatingPointError) as exc:
        print(f"hawkes-field: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    status = "n/a" if report.passed is None else ("pass" if report.passed else "FAIL")
    print(json.dumps({"kind": report.kind, "config_hash": report.config_hash, "status": status,
                      "files": [str(p) for p in paths]}))
    if report.passed is False:
        return EXIT_IDENTITY if cfg.kind == "identities" else EXIT_STATISTICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
