"""Command-line front end: sweeps, diagnostics, quantiles, and dataset analysis.

Config files are flat ``key = value`` text (one pair per line, ``#`` comments);
command-line ``--set key=value`` overrides win.  Exit codes: 0 ok, 2 config
error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .estimators import DegenerateArmError, mple
from .harness import (
    SweepConfig,
    SweepError,
    berry_esseen_diagnostic,
    default_workers,
    records_to_csv,
    run_coverage_sweep,
    run_length_vs_n,
    write_manifest,
)
from .inference import BandwidthError, RankError, feasible_interval
from .ising import ConfigurationError, IsingParams, sample_treatments
from .laws import (
    LimitLawParams,
    hn_quantile,
    ln_quantile,
    mple_limit_quantile,
    wc_moment,
    wc_quantile,
)
from .network import load_edge_list
from .outcomes import load_dataset_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


_SWEEP_FIELDS = {
    "n_values": lambda s: tuple(int(v) for v in str(s).split()),
    "beta_values": lambda s: tuple(float(v) for v in str(s).split()),
    "reps": int,
    "rho": float,
    "kernel_value": float,
    "alpha1": float,
    "alpha2": float,
    "methods": lambda s: tuple(str(s).split()),
    "base_seed": int,
    "dgp": str,
    "inner_reps": int,
    "beta_grid_size": int,
}

PRESETS = {
    # benchmark coverage sweep: four methods across the interference grid
    "fig1": {
        "n_values": "500",
        "beta_values": "0 0.1 0.2 0.3 0.4 0.5 0.6 0.7 0.8 0.9 0.95 1.0",
        "reps": "5000",
        "methods": "conserv beta0 oracle onestep",
    },
    # benchmark length study: conservative interval across sample sizes
    "fig1-lengths": {
        "n_values": "250 500 1000 2000",
        "beta_values": "0",
        "reps": "5000",
        "methods": "conserv",
    },
}


def _parse_config_file(path: str) -> dict:
    raw = {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        raw[key] = value
    return raw


def _coerce_sweep_config(raw: dict) -> SweepConfig:
    kwargs = {}
    for key, value in raw.items():
        if key not in _SWEEP_FIELDS:
            raise ConfigError(f"unknown config field: {key!r}")
        try:
            kwargs[key] = _SWEEP_FIELDS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for field {key!r}: {value!r} ({exc})") from exc
    for required in ("n_values", "beta_values", "reps"):
        if required not in kwargs:
            raise ConfigError(f"missing required config field: {required!r}")
    try:
        return SweepConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _gather_config(args) -> SweepConfig:
    raw = {}
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset: {args.preset!r}")
        raw.update(PRESETS[args.preset])
    if getattr(args, "config", None):
        raw.update(_parse_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        raw[key] = value
    return _coerce_sweep_config(raw)


def _cmd_sweep(args) -> int:
    cfg = _gather_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    records = run_coverage_sweep(cfg, n_workers=args.workers)
    records_to_csv(records, out_dir / "sweep.csv")
    write_manifest(cfg, out_dir / "manifest.json", wall_time=time.time() - start)
    print(f"wrote {out_dir / 'sweep.csv'} ({len(records)} rows)")
    return EXIT_OK


def _cmd_length_vs_n(args) -> int:
    cfg = _gather_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.time()
    records, slopes = run_length_vs_n(cfg, n_workers=args.workers)
    records_to_csv(records, out_dir / "lengths.csv")
    write_manifest(cfg, out_dir / "manifest.json", wall_time=time.time() - start,
                   extra={"slopes": slopes})
    print(f"wrote {out_dir / 'lengths.csv'} ({len(records)} rows)")
    for method, s in slopes.items():
        print(f"{method}: slope {s['slope']:.4f} (se {s['se']:.4f})")
    return EXIT_OK


def _cmd_quantile(args) -> int:
    law = args.law
    if law == "wc":
        if args.moment is not None:
            value = wc_moment(args.c, args.moment)
        else:
            value = wc_quantile(args.c, args.p)
    elif law == "ln":
        params = LimitLawParams(kappa1=args.kappa1, kappa2=args.kappa2,
                                n=args.n, beta=args.beta)
        value = ln_quantile(args.p, params, regime=args.regime)
    elif law == "hn":
        params = LimitLawParams(kappa1=args.kappa1, kappa2=args.kappa2,
                                n=args.n, beta=args.beta)
        value = hn_quantile(args.p, params)
    elif law == "mple-limit":
        value = mple_limit_quantile(args.p, args.c, args.n)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown law {law!r}")
    print(f"{float(value):.10f}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    data_path = Path(args.dataset)
    edge_path = Path(args.edges)
    if not data_path.exists():
        raise ConfigError(f"dataset file not found: {data_path}")
    if not edge_path.exists():
        raise ConfigError(f"edge-list file not found: {edge_path}")
    with open(data_path) as fh:
        n = sum(1 for line in fh if line.strip()) - 1
    if n < 1:
        raise DataError("dataset CSV has no rows")
    try:
        graph = load_edge_list(edge_path, n)
        dataset = load_dataset_csv(data_path, graph)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    n_treated = int(dataset.draw.t.sum())
    if n_treated == 0 or n_treated == dataset.n:
        raise DataError("degenerate arm: dataset is all-treated or all-control")
    rng = np.random.default_rng(args.seed)
    try:
        interval = feasible_interval(dataset, args.alpha1, args.alpha2, rng)
    except (DegenerateArmError, BandwidthError, RankError) as exc:
        raise DataError(str(exc)) from exc
    payload = {
        "tau_hat": interval.tau_hat,
        "beta_hat": interval.beta_hat,
        "khat": interval.kn ** 2,
        "lo": interval.lo,
        "hi": interval.hi,
    }
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def _cmd_sample(args) -> int:
    rng = np.random.default_rng(args.seed)
    draw = sample_treatments(args.n, IsingParams(beta=args.beta, h=args.h), rng)
    line = ",".join(str(int(v)) for v in draw.t)
    if args.out:
        Path(args.out).write_text(line + "\n")
        print(f"wrote {args.out} (magnetization {draw.mag:.6f})")
    else:
        print(line)
    return EXIT_OK


def _cmd_diag_be(args) -> int:
    ks = berry_esseen_diagnostic(tuple(args.n), args.beta, args.reps, seed=args.seed,
                                 multiplier=args.multiplier)
    for n, value in ks.items():
        print(f"{n},{value:.10f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ising-interference",
        description="Coverage experiments and robust intervals for interference designs")
    parser.add_argument("--workers", type=int, default=default_workers(),
                        help="worker processes for sweeps (env ISING_INTERFERENCE_WORKERS)")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn in (("sweep", _cmd_sweep), ("length-vs-n", _cmd_length_vs_n)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="named base config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field")
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(fn=fn)

    p = sub.add_parser("quantile")
    p.add_argument("law", choices=("wc", "ln", "hn", "mple-limit"))
    p.add_argument("--c", type=float, default=0.0)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--moment", type=int, default=None)
    p.add_argument("--kappa1", type=float, default=1.0)
    p.add_argument("--kappa2", type=float, default=1.0)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--regime", choices=("high", "critical"), default="high")
    p.set_defaults(fn=_cmd_quantile)

    p = sub.add_parser("analyze")
    p.add_argument("dataset", help="dataset CSV (unit,U,T,Y,M,N)")
    p.add_argument("edges", help="edge-list file, one 'i j' pair per line")
    p.add_argument("--alpha1", type=float, default=0.05)
    p.add_argument("--alpha2", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("sample")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--h", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("diag-be")
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multiplier", choices=("one-plus-uniform", "constant"),
                   default="one-plus-uniform")
    p.set_defaults(fn=_cmd_diag_be)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DegenerateArmError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SweepError, ConfigurationError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
