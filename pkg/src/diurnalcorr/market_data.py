"""
Tick ingestion, previous-tick resampling and log-return panels.

Raw input is one CSV per asset with a (date, seconds-of-day, price) row per
transaction. A small JSON manifest pairs the two assets and fixes the trading
session. Days that are not present for both assets are dropped, as are days
without a tick at or before the session open.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

# 09:30 to 16:00 exchange time, in seconds after midnight.
DEFAULT_SESSION = (34_200.0, 57_600.0)


class DataError(ValueError):
    """Raised when input price data cannot be turned into a panel."""


@dataclass(frozen=True)
class ColumnSchema:
    day: str = "date"
    time: str = "seconds"
    price: str = "price"


@dataclass(frozen=True)
class AssetTicks:
    """Ticks of one asset grouped by day label, each day sorted in time."""

    days: tuple[str, ...]
    times: tuple[np.ndarray, ...]
    prices: tuple[np.ndarray, ...]
    dropped_rows: int = 0
    bad_price_rows: int = 0

    @property
    def n_ticks(self) -> int:
        return int(sum(len(t) for t in self.times))

    def day(self, label: str) -> tuple[np.ndarray, np.ndarray]:
        i = self.days.index(label)
        return self.times[i], self.prices[i]


@dataclass(frozen=True)
class TickSeries:
    """A synchronized pair of tick series on common trading days."""

    x: AssetTicks
    y: AssetTicks
    session: tuple[float, float] = DEFAULT_SESSION
    dropped_days: tuple[str, ...] = ()

    @property
    def days(self) -> tuple[str, ...]:
        return self.x.days


@dataclass(frozen=True)
class LogPricePanel:
    """Log prices of two assets on the grid ``t - 1 + i/n``, ``i = 0..n``.

    ``x`` and ``y`` have shape ``(T, n + 1)``.
    """

    x: np.ndarray
    y: np.ndarray
    days: tuple[str, ...] = ()
    dropped_days: tuple[str, ...] = ()

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or x.shape != y.shape:
            raise DataError(f"panels must be 2-d with equal shape, got {x.shape} and {y.shape}")
        if x.shape[1] < 2:
            raise DataError("need at least one intraday interval")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("log-price panel contains non-finite entries")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if not self.days:
            object.__setattr__(self, "days", tuple(str(t + 1) for t in range(x.shape[0])))
        elif len(self.days) != x.shape[0]:
            raise DataError("day labels do not match the number of panel rows")

    @property
    def T(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1] - 1


@dataclass(frozen=True)
class IncrementPanel:
    """Intraday log-returns, ``dx`` and ``dy`` of shape ``(T, n)``."""

    dx: np.ndarray
    dy: np.ndarray
    days: tuple[str, ...] = field(default=())

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=float)
        dy = np.asarray(self.dy, dtype=float)
        if dx.ndim != 2 or dx.shape != dy.shape:
            raise DataError(f"increment arrays must be 2-d with equal shape, got {dx.shape} and {dy.shape}")
        dx.setflags(write=False)
        dy.setflags(write=False)
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "dy", dy)
        if not self.days:
            object.__setattr__(self, "days", tuple(str(t + 1) for t in range(dx.shape[0])))

    @property
    def T(self) -> int:
        return self.dx.shape[0]

    @property
    def n(self) -> int:
        return self.dx.shape[1]

    def select(self, rows) -> "IncrementPanel":
        rows = np.asarray(rows)
        return IncrementPanel(self.dx[rows], self.dy[rows], tuple(self.days[i] for i in rows))


def read_asset_csv(path, schema: ColumnSchema | None = None,
                   max_bad_price_fraction: float = 0.05) -> AssetTicks:
    """Read one asset's ticks from a CSV file.

    Rows with a non-positive price are discarded; if they make up more than
    ``max_bad_price_fraction`` of the file a :class:`DataError` is raised.
    Within each day, a row whose timestamp does not strictly exceed the last
    kept timestamp is dropped and counted in ``dropped_rows``.
    """
    schema = schema or ColumnSchema()
    path = Path(path)
    try:
        frame = pd.read_csv(path, comment="#", dtype={schema.day: str})
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: no valid rows") from None
    except OSError as exc:
        raise DataError(f"{path}: cannot read file ({exc})") from exc

    missing = {schema.day, schema.time, schema.price} - set(frame.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    frame = frame[[schema.day, schema.time, schema.price]].dropna()
    if frame.empty:
        raise DataError(f"{path}: no valid rows")

    times = pd.to_numeric(frame[schema.time], errors="coerce").to_numpy(dtype=float)
    prices = pd.to_numeric(frame[schema.price], errors="coerce").to_numpy(dtype=float)
    labels = frame[schema.day].astype(str).to_numpy()
    parsed = np.isfinite(times) & np.isfinite(prices)
    bad_price = parsed & (prices <= 0)
    n_bad = int(bad_price.sum())
    if n_bad > max_bad_price_fraction * len(frame):
        raise DataError(f"{path}: {n_bad} of {len(frame)} rows have non-positive prices")
    keep = parsed & ~bad_price
    if not keep.any():
        raise DataError(f"{path}: no valid rows")

    days: list[str] = []
    day_times: list[np.ndarray] = []
    day_prices: list[np.ndarray] = []
    dropped = int((~parsed).sum())
    # file order is preserved; monotonicity is enforced within each day
    for label in dict.fromkeys(labels[keep]):
        sel = keep & (labels == label)
        t, p = times[sel], prices[sel]
        running = np.maximum.accumulate(t)
        ok = np.ones(len(t), dtype=bool)
        ok[1:] = t[1:] > running[:-1]
        dropped += int((~ok).sum())
        days.append(str(label))
        day_times.append(t[ok])
        day_prices.append(p[ok])

    if dropped:
        logger.info("%s: dropped %d out-of-order or unparseable rows", path, dropped)
    return AssetTicks(tuple(days), tuple(day_times), tuple(day_prices), dropped, n_bad)


def load_price_panel(path, schema: ColumnSchema | None = None,
                     max_bad_price_fraction: float = 0.05) -> TickSeries:
    """Load a manifest JSON pairing two asset CSVs into a :class:`TickSeries`.

    The manifest looks like::

        {"x": "aapl.csv", "y": "spy.csv", "session": [34200, 57600],
         "columns": {"day": "date", "time": "seconds", "price": "price"}}

    Relative paths are resolved against the manifest's directory. A schema
    passed explicitly takes precedence over the manifest's ``columns``.
    """
    path = Path(path)
    try:
        manifest = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed manifest ({exc})") from exc
    if schema is None:
        schema = ColumnSchema(**manifest.get("columns", {}))
    base = path.parent
    x = read_asset_csv(base / manifest["x"], schema, max_bad_price_fraction)
    y = read_asset_csv(base / manifest["y"], schema, max_bad_price_fraction)
    session = tuple(float(s) for s in manifest.get("session", DEFAULT_SESSION))
    return pair_ticks(x, y, session)


def pair_ticks(x: AssetTicks, y: AssetTicks, session=DEFAULT_SESSION) -> TickSeries:
    """Restrict two assets to their common days (in x's order)."""
    common = [d for d in x.days if d in set(y.days)]
    dropped = tuple(sorted(set(x.days).symmetric_difference(y.days)))
    if not common:
        raise DataError("the two assets share no trading days")

    def restrict(a: AssetTicks) -> AssetTicks:
        idx = [a.days.index(d) for d in common]
        return AssetTicks(tuple(common), tuple(a.times[i] for i in idx),
                          tuple(a.prices[i] for i in idx), a.dropped_rows, a.bad_price_rows)

    return TickSeries(restrict(x), restrict(y), tuple(session), dropped)


def _previous_tick(times: np.ndarray, prices: np.ndarray, grid: np.ndarray) -> np.ndarray | None:
    pos = np.searchsorted(times, grid, side="right") - 1
    if pos[0] < 0:
        return None
    return prices[pos]


def previous_tick_resample(ticks: TickSeries, n: int) -> LogPricePanel:
    """Sample both assets on an equidistant grid of ``n`` intervals per session.

    Each grid point takes the log of the last price recorded at or before it.
    Days lacking a tick at or before the session open (for either asset) are
    dropped and listed in ``dropped_days`` of the result.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    start, end = ticks.session
    grid = start + (end - start) * np.arange(n + 1) / n
    rows_x, rows_y, kept = [], [], []
    dropped = list(ticks.dropped_days)
    for i, label in enumerate(ticks.days):
        px = _previous_tick(ticks.x.times[i], ticks.x.prices[i], grid)
        py = _previous_tick(ticks.y.times[i], ticks.y.prices[i], grid)
        if px is None or py is None:
            dropped.append(label)
            continue
        rows_x.append(np.log(px))
        rows_y.append(np.log(py))
        kept.append(label)
    if not kept:
        raise DataError("no day has a tick at or before the session open")
    if len(dropped) > len(ticks.dropped_days):
        logger.info("dropped %d days without an opening tick", len(dropped) - len(ticks.dropped_days))
    return LogPricePanel(np.array(rows_x), np.array(rows_y), tuple(kept), tuple(dropped))


def log_increments(panel: LogPricePanel) -> IncrementPanel:
    return IncrementPanel(np.diff(panel.x, axis=1), np.diff(panel.y, axis=1), panel.days)


def panel_to_frame(panel: LogPricePanel) -> pd.DataFrame:
    T, n1 = panel.x.shape
    return pd.DataFrame({
        "day": np.repeat(np.asarray(panel.days, dtype=object), n1),
        "i": np.tile(np.arange(n1), T),
        "x": panel.x.ravel(),
        "y": panel.y.ravel(),
    })


def panel_from_frame(frame: pd.DataFrame) -> LogPricePanel:
    """Inverse of :func:`panel_to_frame`; rows must be complete per day."""
    frame = frame.astype({"day": str})
    days = tuple(dict.fromkeys(frame["day"]))
    x_rows, y_rows = [], []
    width = None
    for label, sub in frame.groupby("day", sort=False):
        sub = sub.sort_values("i")
        if width is None:
            width = len(sub)
        if len(sub) != width or not np.array_equal(sub["i"].to_numpy(), np.arange(width)):
            raise DataError(f"day {label}: incomplete grid")
        x_rows.append(sub["x"].to_numpy(dtype=float))
        y_rows.append(sub["y"].to_numpy(dtype=float))
    return LogPricePanel(np.array(x_rows), np.array(y_rows), days)


def write_panel_csv(panel: LogPricePanel, path, header: str | None = None) -> None:
    """Write a panel as flat CSV; ``header`` becomes a leading ``#`` comment line."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        panel_to_frame(panel).to_csv(fh, index=False, lineterminator="\n")


def read_panel_csv(path) -> LogPricePanel:
    return panel_from_frame(pd.read_csv(path, comment="#", dtype={"day": str}, float_precision="round_trip"))
