"""Command-line harness.

    incidental <experiment> [--config FILE] [--set key=value]... [--out DIR]
               [--workers N] [--seed S] [--emit csv,svg,final-matrix]

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 divergence.
"""
from __future__ import annotations

import argparse
import ast
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .experiments import DEFAULTS, run_collide, run_instance, run_noise_sweep, run_sparsify, run_split_probe
from .l1_model import DivergenceError

EXPERIMENTS = ("sparsify", "collide", "noise-sweep", "instance", "verify", "split-neuron")
EMIT = {"csv", "svg", "final-matrix"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    out: Path = Path("results")
    workers: int = 1
    emit: frozenset = frozenset({"csv", "svg"})


def parse_value(raw: str, like):
    """Convert ``raw`` to the type of the default value ``like``."""
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(float(raw)) if "e" in raw.lower() else int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, list):
            items = [s for s in raw.strip("[]").split(",") if s.strip()]
            if not items:
                raise ValueError("empty list")
            proto = like[0] if like else ""
            return [parse_value(s, proto) for s in items]
        if like is None:
            return ast.literal_eval(raw)
        return raw
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"cannot parse {raw!r} as {type(like).__name__}") from exc


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    pairs = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        pairs[key.strip()] = value.strip()
    return pairs


def resolve(experiment: str, file_pairs: dict, overrides: list[str], seed=None) -> dict:
    defaults = DEFAULTS.get(experiment, {})
    raw = dict(file_pairs)
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        raw[key.strip()] = value
    params = {}
    for key, value in raw.items():
        if key not in defaults:
            raise ConfigError(f"unknown parameter {key!r} for {experiment}; known: {sorted(defaults)}")
        params[key] = parse_value(value, defaults[key])
    if seed is not None and "seed" in defaults:
        params["seed"] = seed
    return params


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="incidental", description=__doc__.split("\n\n")[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="flat key = value file")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a parameter")
    ap.add_argument("--out", default="results", help="output directory (default: results)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--emit", default="csv,svg", help="comma list of csv, svg, final-matrix")
    ap.add_argument("--quick", action="store_true", help="verify: fast checks only")
    ap.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        emit = {e.strip() for e in args.emit.split(",") if e.strip()}
        if emit - EMIT:
            raise ConfigError(f"unknown --emit values {sorted(emit - EMIT)}")
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        file_pairs = read_config_file(args.config) if args.config else {}
        params = resolve(args.experiment, file_pairs, args.set, args.seed)
        cfg = ExperimentConfig(args.experiment, params, Path(args.out), args.workers, frozenset(emit))
        cfg.out.mkdir(parents=True, exist_ok=True)
        return _dispatch(cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    except (ValueError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


def _dispatch(cfg: ExperimentConfig, args) -> int:
    exp, p, out, emit = cfg.experiment, cfg.params, cfg.out, cfg.emit
    if exp == "verify":
        from .verify import run_verify

        ok, _ = run_verify(out, quick=args.quick, corrupt_gradient=args.corrupt_gradient)
        return 0 if ok else 1
    if exp == "sparsify":
        res = run_sparsify(p, out, emit)
        last = res["rows"][-1]
        print(f"t = {last[1]:g}: |W|_1 = {last[2]:.4g}, m' = {last[3]}")
    elif exp == "collide":
        res = run_collide(p, out, emit, cfg.workers)
        for m, mean, pred in zip(res["ms"], res["mean"], res["predicted"]):
            print(f"m = {m:5d}: mean polysemantic {mean:7.3f}   predicted {pred:7.3f}")
    elif exp == "noise-sweep":
        res = run_noise_sweep(p, out, emit, cfg.workers)
        for c in res["cells"]:
            flag = "  DIVERGED" if c["diverged"] else ""
            print(f"{c['variant']:9s} sigma={c['sigma']:<6g} final mean l4p4 {c['final_l4p4']:.4f}  "
                  f"mean |W_i|^2 {c['final_l2sq']:.4f}{flag}")
        print(f"reference 3/m = {res['reference']:.4f}")
    elif exp == "instance":
        res = run_instance(p, out, emit)
        print("final l4p4 per row:", np.array2string(res["final_l4p4"], precision=3))
        print("compromise rows:", res["compromise_rows"])
    elif exp == "split-neuron":
        res = run_split_probe(p, out, emit)
        print(f"separated fraction after split: {res['separated_fraction']:.3f} over {len(res['rows'])} runs")
    print(f"outputs under {out / exp}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
