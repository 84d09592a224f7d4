"""Command-line entry point.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 corrupt or
unreadable cache.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cache import cache_load, cache_store, cache_verify
from .config import load_config
from .errors import DephasingError, ValidationError
from .experiment import DESK_L_CAP, RECIPES, diagnose, figure, run
from .io import write_toy_series
from .model import compile_hamiltonian, preset_model
from .spectral import diagonalize
from .toy import (
    equilibration_time,
    sample_toy_ensemble,
    toy_deviation,
    toy_error_horizon,
    toy_sup_error,
)


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=repr))


def _manifest_summary(m) -> dict:
    return {
        "manifest": str(m.path),
        "files": len(m.files),
        "config_hash": m.config_hash,
        "warnings": m.warnings,
    }


def _cmd_run(args) -> int:
    _emit(_manifest_summary(run(load_config(args.config), workers=args.workers)))
    return 0


def _cmd_figure(args) -> int:
    m = figure(args.recipe, args.lmax, args.out, workers=args.workers)
    _emit(_manifest_summary(m))
    return 0


def _cmd_diagnose(args) -> int:
    _emit(_manifest_summary(diagnose(load_config(args.config), workers=args.workers)))
    return 0


def _cmd_toy(args) -> int:
    ens = sample_toy_ensemble(args.n, args.dmax, args.tau, args.seed)
    result = {
        "N": ens.N,
        "tau": ens.tau,
        "delta_max": ens.delta_max,
        "seed": ens.seed,
        "sup_error": toy_sup_error(ens),
        "equilibration_time": equilibration_time(ens),
    }
    if args.eps is not None:
        result["eps"] = args.eps
        result["horizon"] = toy_error_horizon(ens, args.eps)
    if args.out:
        series = toy_deviation(ens, np.linspace(0.0, 4.0 * ens.tau, 401))
        write_toy_series(args.out, series)
        result["series"] = args.out
    _emit(result)
    return 0


def _cmd_cache(args) -> int:
    if args.action == "store":
        if not args.config:
            raise ValidationError("cache store needs --config")
        cfg = load_config(args.config)
        L = args.L if args.L is not None else cfg.L[0]
        spec = preset_model(cfg.model, cfg.params, L)
        es = diagonalize(compile_hamiltonian(spec, max_sites=cfg.max_L))
        cache_store(es, args.path)
        _emit(cache_verify(args.path))
    elif args.action == "load":
        es = cache_load(args.path)
        _emit({"path": args.path, "L": es.L, "dim": es.dim, "shift": es.shift,
               "E_max": float(es.energies[-1]), "real_transform": bool(np.isrealobj(es.transform))})
    else:
        _emit(cache_verify(args.path))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dephasing",
        description="Gap-amplitude analysis of equilibration in small spin chains.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Run the full pipeline for a YAML config.")
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=int, default=None, help="worker processes over chain lengths")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("figure", help="Emit the CSV bundle of a figure recipe.")
    p.add_argument("recipe", type=str.upper, choices=RECIPES)
    p.add_argument("--lmax", type=int, default=DESK_L_CAP)
    p.add_argument("--out", type=Path, default=Path("figures"))
    p.add_argument("--workers", type=int, default=None, help="worker processes over chain lengths")
    p.set_defaults(func=_cmd_figure)

    p = sub.add_parser("toy", help="Random-gap toy model.")
    p.add_argument("--n", type=lambda s: int(float(s)), default=100_000)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--dmax", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=None, help="error bound for the horizon")
    p.add_argument("--out", default=None, help="optional CSV for the deviation series")
    p.set_defaults(func=_cmd_toy)

    p = sub.add_parser("diagnose", help="Spectral and state diagnostics for a YAML config.")
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=int, default=None, help="worker processes over chain lengths")
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("cache", help="Store, load or verify an eigensystem cache file.")
    p.add_argument("action", choices=("store", "load", "verify"))
    p.add_argument("path")
    p.add_argument("--config", type=Path, default=None, help="model to diagonalize (store only)")
    p.add_argument("--L", type=int, default=None, help="chain length (store only)")
    p.set_defaults(func=_cmd_cache)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DephasingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
