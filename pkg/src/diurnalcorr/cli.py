"""
Command-line entry point.

    diurnalcorr simulate --a 0.8 --n 78 --T 21 --seed 7 --output panel.csv
    diurnalcorr estimate --input panel.csv --n 78 --kn 26 --output curves.csv
    diurnalcorr test --input panel.csv --kn 26 --alpha 0.1 --alpha 0.05 --output tests.jsonl
    diurnalcorr table --preset table2-panelB --reps 1000 --output table.csv
    diurnalcorr hedge --input minute_panel.csv --output hedge.csv

``--input`` takes either a panel CSV (as written by ``simulate``) or a JSON
manifest pointing at two tick files, which is resampled to ``--n``
intervals with the previous-tick rule. Options may also come from a JSON
file given with ``--config``; flags on the command line take precedence.
Every output starts with the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .diurnal import estimate_curves
from .experiments import (GRID_ALPHAS, PRESETS, McGrid, format_table, hedge_ratios,
                          hedge_variance_ratio, preset, rejection_table)
from .inference import DEFAULT_DRAWS, run_monthly, run_tests
from .longrun import HacConfig
from .market_data import (DataError, LogPricePanel, load_price_panel, log_increments,
                          previous_tick_resample, read_panel_csv, write_panel_csv)
from .simulation import SimConfig, simulate_paths
from .spot import BlockSpec, TruncationConfig, spot_covariance_panel

logger = logging.getLogger("diurnalcorr")

FIRST_DAY = "2024-01-02"


def _alpha(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1), got {text}")
    return value


def _pair(text: str) -> tuple[int, int]:
    try:
        n, kn = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N:KN, got {text!r}") from None
    return n, kn


def _add_sampling(p: argparse.ArgumentParser, n_default: int | None = 78) -> None:
    p.add_argument("--n", type=int, default=n_default, help="intervals per day (default %(default)s)")


def _add_estimation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kn", type=int, default=26, help="increments per block (default %(default)s)")
    p.add_argument("--q", type=float, default=5.0, help="truncation multiple (default %(default)s)")
    p.add_argument("--varpi", type=float, default=0.49, help="truncation rate (default %(default)s)")
    p.add_argument("--threshold-mode", choices=("sqrt", "linear"), default="sqrt")


def _add_hac(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", choices=("parzen", "bartlett"), default="parzen")
    p.add_argument("--lags", type=int, default=None, help="HAC lag length (default floor(T^(1/3)))")


def _add_testing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=_alpha, action="append", default=None,
                   help="significance level, repeatable (default 0.05)")
    p.add_argument("--draws", type=int, default=DEFAULT_DRAWS, help="null-distribution draws")
    p.add_argument("--pivotal-variance", choices=("pointwise", "kernel"), default="pointwise")
    p.add_argument("--deflate", action="store_true",
                   help="deflate the pointwise long-run covariance by the average covariances")


def build_parser() -> argparse.ArgumentParser:
    return _build()[0]


def _build():
    parser = argparse.ArgumentParser(prog="diurnalcorr", description="Diurnal correlation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with option defaults")
    common.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", parents=[common], help="simulate a price panel")
    _add_sampling(p)
    p.add_argument("--T", type=int, default=21, help="days (default %(default)s)")
    p.add_argument("--a", type=float, default=1.0, help="diurnal correlation intercept")
    p.add_argument("--steps", type=int, default=23_400, help="Euler steps per day")
    p.add_argument("--no-jumps", action="store_true")
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--latent-output", type=Path,
                   help="also write latent volatilities and correlations at the grid points")

    p = sub.add_parser("estimate", parents=[common], help="estimate diurnal curves")
    p.add_argument("--input", type=Path, required=True)
    _add_sampling(p, None)
    _add_estimation(p)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--blocks-output", type=Path, help="also write the per-day block estimates")

    p = sub.add_parser("test", parents=[common], help="test for diurnal correlation")
    p.add_argument("--input", type=Path, required=True)
    _add_sampling(p, None)
    _add_estimation(p)
    _add_hac(p)
    _add_testing(p)
    p.add_argument("--method", action="append", default=None,
                   choices=("pivotal", "nonpivotal", "univariate-X", "univariate-Y"),
                   help="repeatable (default pivotal and nonpivotal)")
    p.add_argument("--monthly", action="store_true", help="test each calendar month separately")
    p.add_argument("--bonferroni", action="store_true", help="divide levels by the number of months")
    p.add_argument("--min-days", type=int, default=5)
    p.add_argument("--output", type=Path, required=True)

    p = sub.add_parser("table", parents=[common], help="Monte Carlo rejection table")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--pair", type=_pair, action="append", default=None, metavar="N:KN",
                   help="(n, k_n) cell, repeatable")
    p.add_argument("--T", type=int, action="append", default=None)
    p.add_argument("--a", type=float, action="append", default=None)
    p.add_argument("--test", action="append", choices=("pivotal", "nonpivotal"), default=None)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--steps", type=int, default=23_400, help="Euler steps per day")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--q", type=float, default=5.0)
    p.add_argument("--varpi", type=float, default=0.49)
    _add_hac(p)
    _add_testing(p)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--text-output", type=Path, help="aligned-text rendering of the table")

    p = sub.add_parser("hedge", parents=[common], help="intraday minimum variance hedge ratios")
    p.add_argument("--input", type=Path, required=True)
    _add_sampling(p, None)
    p.add_argument("--bins", type=int, default=78, help="hedging intervals per day")
    p.add_argument("--output", type=Path, required=True)
    return parser, sub.choices


def parse_args(argv=None) -> argparse.Namespace:
    """Parse, letting a ``--config`` JSON file supply defaults for any option."""
    parser, commands = _build()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is not None:
        args = _apply_config(parser, commands[args.command], args, argv)
    if args.seed is None:
        # tables default to the fixed grid seed; elsewhere record fresh
        # entropy so the run can be repeated
        args.seed = McGrid.seed if args.command == "table" else int(np.random.SeedSequence().entropy % 2**32)
    return args


def _apply_config(parser, sub, args, argv) -> argparse.Namespace:
    try:
        values = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    known = set(vars(args))
    unknown = sorted(set(k.replace("-", "_") for k in values) - known)
    if unknown:
        parser.error(f"unknown config key(s): {', '.join(unknown)}")
    sub.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})
    return parser.parse_args(argv)


def _resolved(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("verbose", "config", "output", "text_output", "blocks_output", "latent_output"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, list):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        out[key] = value
    out["version"] = __version__
    return out


def _header(config: dict) -> str:
    return "config " + json.dumps(config, sort_keys=True)


def _load_panel(path: Path, n: int | None) -> LogPricePanel:
    if path.suffix.lower() == ".json":
        if n is None:
            raise DataError("--n is required to resample tick data")
        return previous_tick_resample(load_price_panel(path), n)
    panel = read_panel_csv(path)
    if n is not None and panel.n != n:
        raise DataError(f"{path}: panel has n={panel.n}, but --n={n}")
    return panel


def _write_frame(frame: pd.DataFrame, path: Path, config: dict) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_header(config)}\n")
        frame.to_csv(fh, index=False, lineterminator="\n")


def cmd_simulate(args) -> None:
    cfg = SimConfig(n=args.n, T=args.T, steps_per_day=args.steps, a=args.a, seed=args.seed)
    if args.no_jumps:
        cfg = cfg.without_jumps()
    out = simulate_paths(cfg, np.random.default_rng(args.seed), record_latent=args.latent_output is not None)
    days = tuple(d.strftime("%Y-%m-%d") for d in pd.bdate_range(FIRST_DAY, periods=cfg.T))
    panel = LogPricePanel(out.panel.x, out.panel.y, days)
    config = _resolved(args)
    write_panel_csv(panel, args.output, _header(config))
    if args.latent_output:
        step = cfg.steps_per_day // cfg.n
        frame = pd.DataFrame({
            "day": np.repeat(np.asarray(days, dtype=object), cfg.n),
            "i": np.tile(np.arange(cfg.n), cfg.T),
            **{name: getattr(out, name)[:, ::step].ravel()
               for name in ("sigma_x", "sigma_y", "rho", "rho_sc")},
        })
        _write_frame(frame, args.latent_output, config)


def _specs(args) -> tuple[BlockSpec, TruncationConfig]:
    return BlockSpec(args.n, args.kn), TruncationConfig(args.q, args.varpi, args.threshold_mode)


def cmd_estimate(args) -> None:
    panel = _load_panel(args.input, args.n)
    args.n = panel.n
    spec, trunc = _specs(args)
    blocks = spot_covariance_panel(log_increments(panel), spec, trunc)
    curves = estimate_curves(blocks)
    config = _resolved(args)
    config.update(T=panel.T, m=spec.m, c_bar=curves.c_bar.tolist(), rho_bar=curves.rho_bar)
    _write_frame(curves.to_frame(), args.output, config)
    if args.blocks_output:
        frame = blocks.to_frame()
        frame.insert(0, "day", np.repeat(np.asarray(panel.days, dtype=object), spec.m))
        _write_frame(frame, args.blocks_output, config)


def cmd_test(args) -> None:
    panel = _load_panel(args.input, args.n)
    args.n = panel.n
    args.alpha = args.alpha or [0.05]
    args.method = args.method or ["pivotal", "nonpivotal"]
    spec, trunc = _specs(args)
    hac = HacConfig(args.kernel, args.lags)
    inc = log_increments(panel)
    kwargs = dict(trunc=trunc, hac=hac, alphas=tuple(args.alpha), methods=tuple(args.method),
                  draws=args.draws, seed=args.seed, pivotal_variance=args.pivotal_variance,
                  deflate=args.deflate)
    if args.monthly:
        reports = run_monthly(inc, spec, bonferroni=args.bonferroni, min_days=args.min_days, **kwargs)
    else:
        reports = run_tests(inc, spec, **kwargs)
    config = _resolved(args)
    with open(args.output, "w") as fh:
        fh.write(json.dumps({"config": config}, sort_keys=True) + "\n")
        for rep in reports:
            fh.write(rep.to_json() + "\n")
    for rep in reports:
        month = rep.tuning.get("month")
        tag = f" {month}" if month else ""
        print(f"{rep.method}{tag} alpha={rep.alpha:g} stat={rep.statistic:.4f} "
              f"crit={rep.critical_value:.4f} p={rep.p_value:.4f} reject={rep.reject}")


def cmd_table(args) -> None:
    overrides = {}
    if args.pair:
        overrides["pairs"] = tuple(args.pair)
    if args.T:
        overrides["T_values"] = tuple(args.T)
    if args.a:
        overrides["a_values"] = tuple(args.a)
    if args.test:
        overrides["tests"] = tuple(args.test)
    overrides.update(
        alphas=tuple(args.alpha or GRID_ALPHAS), reps=args.reps, draws=args.draws,
        steps_per_day=args.steps, trunc=TruncationConfig(args.q, args.varpi),
        hac=HacConfig(args.kernel, args.lags), pivotal_variance=args.pivotal_variance,
        deflate=args.deflate,
    )
    overrides["seed"] = args.seed
    grid = preset(args.preset, **overrides) if args.preset else replace(McGrid(), **overrides)
    table = rejection_table(grid, workers=args.workers)
    config = _resolved(args)
    config["grid"] = grid.to_dict()
    _write_frame(table, args.output, config)
    text = format_table(table)
    if args.text_output:
        args.text_output.write_text(f"# {_header(config)}\n{text}")
    print(text, end="")


def cmd_hedge(args) -> None:
    panel = _load_panel(args.input, args.n)
    series = hedge_ratios(panel, args.bins)
    ratio = hedge_variance_ratio(series)
    config = _resolved(args)
    config["variance_ratio"] = ratio
    frame = series.to_frame()
    frame.insert(0, "date", np.repeat(np.asarray(panel.days, dtype=object), args.bins))
    _write_frame(frame, args.output, config)
    print(f"variance ratio {ratio:.6f}")


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "test": cmd_test,
            "table": cmd_table, "hedge": cmd_hedge}


def run(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValueError, ZeroDivisionError, OSError, KeyError) as exc:
        print(f"diurnalcorr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
