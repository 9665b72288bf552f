"""
Monte Carlo rejection tables and the intraday hedging study.

Every replication draws its own generator from ``(seed, T, r)``, so a cell's
result does not depend on which other cells are run, on the order they run
in, or on how replications are split across worker processes. Panels with
the same ``T`` and replication index share their random numbers across
``n`` and ``a`` (common random numbers), which keeps rejection rates
comparable along a table row.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd

from .inference import (DEFAULT_DRAWS, estimate, nonpivotal_from_estimates,
                        pivotal_from_estimates)
from .longrun import HacConfig
from .market_data import IncrementPanel, LogPricePanel, log_increments
from .simulation import SimConfig, replication_rng, simulate_paths
from .spot import BlockSpec, TruncationConfig

logger = logging.getLogger(__name__)

GRID_PAIRS = ((26, 13), (39, 13), (78, 26), (390, 130), (780, 195), (1560, 390), (4680, 936))
GRID_A = (1.0, 0.95, 0.9, 0.85, 0.8)
GRID_ALPHAS = (0.10, 0.05, 0.01)
PANEL_T = {"A": 5, "B": 21, "C": 66}
TESTS = ("pivotal", "nonpivotal")


@dataclass(frozen=True)
class McGrid:
    pairs: tuple = ((78, 26),)
    T_values: tuple = (21,)
    a_values: tuple = (1.0,)
    alphas: tuple = GRID_ALPHAS
    reps: int = 1000
    seed: int = 2024
    tests: tuple = TESTS
    draws: int = DEFAULT_DRAWS
    steps_per_day: int = 23_400
    brownian_substeps: int = 1
    trunc: TruncationConfig = field(default_factory=TruncationConfig)
    hac: HacConfig = field(default_factory=HacConfig)
    pivotal_variance: str = "pointwise"
    deflate: bool = False

    def __post_init__(self):
        for n, kn in self.pairs:
            BlockSpec(n, kn)
        for a in self.a_values:
            if not 0 < a <= 1:
                raise ValueError(f"intercept a={a} outside (0, 1]")
        for alpha in self.alphas:
            if not 0 < alpha < 1:
                raise ValueError("alpha must lie in (0, 1)")
        if self.reps < 1:
            raise ValueError("need at least one replication")
        bad = set(self.tests) - set(TESTS)
        if bad:
            raise ValueError(f"unknown test(s) {sorted(bad)}")

    def steps_for(self, n: int) -> int:
        """Fine steps per day for sampling frequency ``n`` (a multiple of ``n``)."""
        steps = max(self.steps_per_day, n)
        if steps % n:
            raise ValueError(f"steps per day {steps} is not a multiple of n={n}")
        return steps

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pairs"] = [list(p) for p in self.pairs]
        return out


def preset(name: str, **overrides) -> McGrid:
    """Standard rejection-table grids.

    ``table1-panelB`` is the nonpivotal test at ``T=21`` over the full
    ``(n, k_n)`` menu; ``table2-*`` is the pivotal test. Panels A, B and C
    correspond to ``T = 5, 21, 66``.
    """
    try:
        table, panel = name.lower().split("-panel")
        test = {"table1": "nonpivotal", "table2": "pivotal"}[table]
        T = PANEL_T[panel.upper()]
    except (ValueError, KeyError):
        raise ValueError(f"unknown preset {name!r}") from None
    grid = McGrid(pairs=GRID_PAIRS, T_values=(T,), a_values=GRID_A, tests=(test,))
    return replace(grid, **overrides)


PRESETS = tuple(f"table{k}-panel{p}" for k in (1, 2) for p in "ABC")


def _one_replication(args):
    grid, n, kn, T, a, r = args
    cfg = SimConfig(n=n, T=T, steps_per_day=grid.steps_for(n), a=a,
                    brownian_substeps=grid.brownian_substeps)
    rng = replication_rng(grid.seed, T, r)
    est = estimate(simulate_paths(cfg, rng).increments, BlockSpec(n, kn), grid.trunc)
    out = {}
    if "pivotal" in grid.tests:
        reps = pivotal_from_estimates(est, grid.alphas, grid.hac, grid.pivotal_variance, grid.deflate)
        out["pivotal"] = [rep.reject for rep in reps]
    if "nonpivotal" in grid.tests:
        reps = nonpivotal_from_estimates(est, grid.alphas, grid.hac, grid.draws, rng=rng)
        out["nonpivotal"] = [rep.reject for rep in reps]
    return out


def cell_rejections(grid: McGrid, n: int, kn: int, T: int, a: float,
                    workers: int = 1) -> dict[str, np.ndarray]:
    """Rejection indicators, one ``(reps, len(alphas))`` array per test."""
    jobs = [(grid, n, kn, T, a, r) for r in range(grid.reps)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_one_replication(job) for job in jobs]
    return {t: np.array([res[t] for res in results], dtype=bool) for t in grid.tests}


def rejection_table(grid: McGrid, workers: int = 1) -> pd.DataFrame:
    """Rejection rates and Monte Carlo standard errors in long format."""
    rows = []
    for T in grid.T_values:
        for n, kn in grid.pairs:
            for a in grid.a_values:
                logger.info("cell T=%d n=%d kn=%d a=%.3f", T, n, kn, a)
                rej = cell_rejections(grid, n, kn, T, a, workers)
                for test, ind in rej.items():
                    for i, alpha in enumerate(grid.alphas):
                        p = float(ind[:, i].mean())
                        rows.append(dict(test=test, T=T, n=n, kn=kn, a=a, alpha=alpha, rate=p,
                                         mc_se=float(np.sqrt(p * (1 - p) / grid.reps)),
                                         reps=grid.reps))
    return pd.DataFrame(rows)


def format_table(df: pd.DataFrame) -> str:
    """Aligned text with one block per (test, T), levels side by side."""
    buf = io.StringIO()
    for (test, T), block in df.groupby(["test", "T"], sort=False):
        buf.write(f"{test}  T = {T}\n")
        wide = block.pivot_table(index=["n", "kn"], columns=["alpha", "a"], values="rate", sort=False)
        wide = wide.sort_index(axis=1, level=["alpha", "a"], ascending=False)
        wide.columns = [f"{alpha:.0%} a={a:.3f}" for alpha, a in wide.columns]
        buf.write(wide.to_string(float_format=lambda v: f"{v:.3f}"))
        buf.write("\n\n")
    return buf.getvalue()


# --- hedging -------------------------------------------------------------------

@dataclass(frozen=True)
class HedgeSeries:
    """Per-interval hedge ratios, shape ``(T, bins)``; NaN marks undefined bins."""

    phi: np.ndarray
    phi_bar: np.ndarray
    rho: np.ndarray
    rho_sc: np.ndarray
    ret_x: np.ndarray
    ret_y: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.phi) & np.isfinite(self.phi_bar)

    @property
    def rho_u(self) -> np.ndarray:
        return self.rho / self.rho_sc[:, None]

    @property
    def hedged(self) -> np.ndarray:
        return self.ret_x - self.phi * self.ret_y

    @property
    def hedged_bar(self) -> np.ndarray:
        return self.ret_x - self.phi_bar * self.ret_y

    def to_frame(self) -> pd.DataFrame:
        T, bins = self.phi.shape
        return pd.DataFrame({
            "day": np.repeat(np.arange(1, T + 1), bins),
            "bin": np.tile(np.arange(1, bins + 1), T),
            "phi": self.phi.ravel(), "phi_bar": self.phi_bar.ravel(),
            "rho": self.rho.ravel(), "rho_sc": np.repeat(self.rho_sc, bins),
            "ret_x": self.ret_x.ravel(), "ret_y": self.ret_y.ravel(),
            "hedged": self.hedged.ravel(), "hedged_bar": self.hedged_bar.ravel(),
        })


def hedge_ratios(data: LogPricePanel | IncrementPanel, bins: int = 78) -> HedgeSeries:
    """Ex-post minimum variance hedge ratios of X against Y per intraday bin.

    Realized (uncentered) variances and covariance are taken over the fine
    increments inside each bin. The daily stochastic correlation is the mean
    of the bin correlations over the day's defined bins.
    """
    inc = log_increments(data) if isinstance(data, LogPricePanel) else data
    T, n = inc.dx.shape
    if n % bins:
        raise ValueError(f"n={n} is not divisible into {bins} bins")
    dx = inc.dx.reshape(T, bins, n // bins)
    dy = inc.dy.reshape(T, bins, n // bins)
    vx = np.sum(dx * dx, axis=-1)
    vy = np.sum(dy * dy, axis=-1)
    cxy = np.sum(dx * dy, axis=-1)
    ok = (vy > 0) & (vx > 0)
    if not ok.any():
        raise ValueError("no bin has positive variance in both assets")
    with np.errstate(divide="ignore", invalid="ignore"):
        sx, sy = np.sqrt(vx), np.sqrt(vy)
        rho = np.where(ok, cxy / (sx * sy), np.nan)
        ratio = np.where(ok, sx / sy, np.nan)
    counts = ok.sum(axis=1)
    rho_sc = np.full(T, np.nan)
    rho_sc[counts > 0] = np.nanmean(rho[counts > 0], axis=1)
    phi = rho * ratio
    phi_bar = rho_sc[:, None] * ratio
    return HedgeSeries(phi, phi_bar, rho, rho_sc, dx.sum(axis=-1), dy.sum(axis=-1))


def hedge_variance_ratio(series: HedgeSeries) -> float:
    """Variance of the locally hedged portfolio relative to the day-average hedge."""
    ok = series.valid
    den = float(np.var(series.hedged_bar[ok]))
    if den == 0:
        raise ZeroDivisionError("hedged portfolio under the average ratio has zero variance")
    return float(np.var(series.hedged[ok])) / den


def simulated_hedge_ratio(seed: int, a: float = 0.6, T: int = 21, n: int = 390,
                          steps_per_day: int = 4680) -> float:
    """Variance ratio on one simulated panel sampled every minute."""
    cfg = SimConfig(n=n, T=T, steps_per_day=steps_per_day, a=a)
    out = simulate_paths(cfg, np.random.default_rng(seed))
    return hedge_variance_ratio(hedge_ratios(out.increments))
