"""Command-line entry point ``eoslab``.

Subcommands::

    eoslab run <config> [--strict] [--out DIR] [--seed N]
    eoslab orbit --mu M --eta E
    eoslab check-1d --fn quartic --mu M [--x-bar X] [--eps E]
    eoslab batch <dir> [--jobs N] [--out DIR] [--strict]

Seed precedence: ``--seed`` beats ``EOSLAB_SEED``, which beats the config's
``seed`` key.  Exit codes: 0 success, 1 a checked flag failed under
``--strict``, 2 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from eoslab import scalar1d
from eoslab.config import load_config
from eoslab.errors import ConfigError, EoslabError
from eoslab.runner import run

SEED_ENV = "EOSLAB_SEED"
EXIT_OK, EXIT_FLAGS, EXIT_CONFIG = 0, 1, 2


def resolve_seed(config_seed: int, cli_seed: int | None = None, env=None) -> int:
    env = os.environ if env is None else env
    if cli_seed is not None:
        return int(cli_seed)
    raw = env.get(SEED_ENV)
    if raw not in (None, ""):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
    return config_seed


def run_file(path, out=None, seed=None, strict=False) -> tuple[int, dict]:
    """Load, run and report one config; returns ``(exit_code, summary dict)``."""
    try:
        cfg = load_config(path)
        cfg = replace(cfg, seed=resolve_seed(cfg.seed, seed))
    except ConfigError as exc:
        return EXIT_CONFIG, {"config": str(path), "error": str(exc)}
    summary = run(cfg, out)
    report = {
        "config": str(path),
        "experiment": summary.experiment,
        "flags": summary.flags,
        "diverged": summary.diverged,
    }
    code = EXIT_FLAGS if strict and not summary.passed else EXIT_OK
    return code, report


def _batch_job(args):
    path, out, strict = args
    return run_file(path, out, None, strict)


def _cmd_run(a) -> int:
    code, report = run_file(a.config, a.out, a.seed, a.strict)
    stream = sys.stderr if code == EXIT_CONFIG else sys.stdout
    print(json.dumps(report, sort_keys=True), file=stream)
    return code


def _cmd_batch(a) -> int:
    root = Path(a.directory)
    files = sorted(p for p in root.iterdir() if p.suffix in (".ini", ".cfg", ".json"))
    if not files:
        print(f"no config files in {root}", file=sys.stderr)
        return EXIT_CONFIG
    out_root = Path(a.out) if a.out else Path("runs")
    jobs = [(str(f), str(out_root / f.stem), a.strict) for f in files]
    with ProcessPoolExecutor(max_workers=max(1, a.jobs)) as pool:
        results = list(pool.map(_batch_job, jobs))
    worst = EXIT_OK
    for code, report in results:
        print(json.dumps(report, sort_keys=True))
        worst = max(worst, code)
    return worst


def _cmd_orbit(a) -> int:
    try:
        pred = scalar1d.solve_period2(a.mu, a.eta)
    except EoslabError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    print(
        json.dumps(
            {"mu": a.mu, "eta": a.eta, "x_low": pred.x_low, "x_high": pred.x_high, "stability": pred.stability.value}
        )
    )
    return EXIT_OK


def _make_1d(a) -> tuple[scalar1d.ScalarFunction, float]:
    if a.fn == "quartic":
        return scalar1d.Quartic(a.mu), math.sqrt(a.mu)
    if a.fn == "sine":
        return scalar1d.ScaledSine(a.amplitude), -math.pi / 2
    return scalar1d.Quadratic(a.lam), 0.0


def _cmd_check(a) -> int:
    try:
        f, default_bar = _make_1d(a)
        x_bar = default_bar if a.x_bar is None else a.x_bar
        third = scalar1d.check_condition_third_order(f, x_bar)
    except EoslabError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    out = {"fn": a.fn, "x_bar": x_bar, "third_order": {"applicable": third.applicable, "margin": third.margin}}
    if abs(third.f3) <= scalar1d.ZERO_TOL * max(1.0, abs(third.f2)):
        hi = scalar1d.check_condition_higher_order(f, x_bar)
        out["higher_order"] = {"outcome": hi.outcome.value, "k": hi.k}
    try:
        win = scalar1d.eta_window(f, x_bar, a.eps)
        out["eta_window"] = {"lower": win.lower, "upper": win.upper, "validity": win.validity.value}
    except EoslabError as exc:
        out["eta_window"] = {"validity": "not_applicable", "reason": str(exc)}
    print(json.dumps(out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eoslab", description="GD beyond the edge of stability: simulations and orbit predictions.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("--strict", action="store_true", help="exit 1 if any checked flag fails")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=int, help="overrides EOSLAB_SEED and the config seed")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("batch", help="run every config in a directory in parallel")
    b.add_argument("directory")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", help="root for per-config output directories (default runs/)")
    b.add_argument("--strict", action="store_true")
    b.set_defaults(func=_cmd_batch)

    o = sub.add_parser("orbit", help="closed-form period-2 orbit of the quartic")
    o.add_argument("--mu", type=float, required=True)
    o.add_argument("--eta", type=float, required=True)
    o.set_defaults(func=_cmd_orbit)

    c = sub.add_parser("check-1d", help="stable-oscillation checks at a 1-D minimum")
    c.add_argument("--fn", choices=("quartic", "sine", "quadratic"), default="quartic")
    c.add_argument("--mu", type=float, default=1.0)
    c.add_argument("--amplitude", type=float, default=1.0)
    c.add_argument("--lam", type=float, default=1.0)
    c.add_argument("--x-bar", type=float, dest="x_bar")
    c.add_argument("--eps", type=float, default=0.01)
    c.set_defaults(func=_cmd_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
