"""
Jump-truncated block realized covariance.

A trading day of ``n`` increments is split into ``m = n / k_n`` blocks. On
each block the bipower variation of each asset sets a truncation threshold,
and the realized covariance is computed from the increment pairs that pass
both thresholds jointly, scaled by ``n / k_n`` to a spot (per unit time)
estimate.

Thresholds are stored on the scale of ``sqrt(n) * increment``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import pandas as pd

from .market_data import IncrementPanel

ThresholdMode = Literal["sqrt", "linear"]


@dataclass(frozen=True)
class BlockSpec:
    n: int
    kn: int

    def __post_init__(self):
        if self.kn < 2:
            raise ValueError("k_n must be at least 2 for bipower variation")
        if self.n % self.kn:
            raise ValueError(f"k_n={self.kn} does not divide n={self.n}")
        if self.n // self.kn < 2:
            raise ValueError("need at least two blocks per day")

    @property
    def m(self) -> int:
        return self.n // self.kn

    @property
    def tau(self) -> np.ndarray:
        """Left block boundaries ``(j - 1) / m``."""
        return np.arange(self.m) / self.m

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) / self.m


@dataclass(frozen=True)
class TruncationConfig:
    """Truncation threshold settings.

    With ``mode="sqrt"`` an increment ``r`` is discarded when
    ``|sqrt(n) r| > q * sqrt(BV) * n**(0.5 - varpi)``, i.e. about ``q`` local
    standard deviations. ``mode="linear"`` uses ``q * BV * n**(-varpi)`` on
    the raw increment instead.
    """

    q: float = 5.0
    varpi: float = 0.49
    mode: ThresholdMode = "sqrt"

    def __post_init__(self):
        if not 0.0 < self.varpi < 0.5:
            raise ValueError("varpi must lie in (0, 0.5)")
        if self.q <= 0:
            raise ValueError("q must be positive")
        if self.mode not in ("sqrt", "linear"):
            raise ValueError(f"unknown threshold mode {self.mode!r}")


@dataclass(frozen=True)
class SpotCovariancePanel:
    """Per-day, per-block truncated covariance estimates, each of shape ``(T, m)``.

    ``vx`` and ``vy`` are the thresholds (on the sqrt(n)-scaled return scale);
    ``cut_x`` / ``cut_y`` count increments exceeding their own threshold and
    ``cut_joint`` counts increment pairs removed by the joint indicator.
    """

    cx: np.ndarray
    cxy: np.ndarray
    cy: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    cut_x: np.ndarray
    cut_y: np.ndarray
    cut_joint: np.ndarray
    spec: BlockSpec
    cfg: TruncationConfig

    @property
    def T(self) -> int:
        return self.cx.shape[0]

    @property
    def m(self) -> int:
        return self.cx.shape[1]

    def matrices(self) -> np.ndarray:
        """Stack into an array of 2x2 matrices with shape ``(T, m, 2, 2)``."""
        out = np.empty(self.cx.shape + (2, 2))
        out[..., 0, 0] = self.cx
        out[..., 0, 1] = out[..., 1, 0] = self.cxy
        out[..., 1, 1] = self.cy
        return out

    def to_frame(self) -> pd.DataFrame:
        T, m = self.cx.shape
        return pd.DataFrame({
            "t": np.repeat(np.arange(1, T + 1), m),
            "j": np.tile(np.arange(1, m + 1), T),
            "cX": self.cx.ravel(), "cXY": self.cxy.ravel(), "cY": self.cy.ravel(),
            "vX": self.vx.ravel(), "vY": self.vy.ravel(),
            "cutX": self.cut_x.ravel(), "cutY": self.cut_y.ravel(), "cutXY": self.cut_joint.ravel(),
        })


def block_bipower(returns, n: int) -> float:
    """Localized bipower variation of one block of raw returns."""
    r = np.sqrt(n) * np.abs(np.asarray(returns, dtype=float))
    k = r.shape[-1]
    if k < 2:
        raise ValueError("bipower variation needs at least two returns")
    return float(np.pi / 2 * np.sum(r[1:] * r[:-1]) / (k - 1))


def block_threshold(bv, cfg: TruncationConfig, n: int):
    """Threshold for ``|sqrt(n) r|`` given the block's bipower variation."""
    bv = np.asarray(bv, dtype=float)
    if cfg.mode == "sqrt":
        out = cfg.q * np.sqrt(bv) * n ** (0.5 - cfg.varpi)
    else:
        out = cfg.q * bv * n ** (0.5 - cfg.varpi)
    return float(out) if out.ndim == 0 else out


def block_truncated_covariance(block_x, block_y, vx: float, vy: float, n: int) -> np.ndarray:
    """Truncated realized covariance of one block, scaled to a spot estimate.

    A single joint indicator gates each outer product: the pair is kept only
    if both ``|sqrt(n) dX| <= vx`` and ``|sqrt(n) dY| <= vy``.
    """
    bx = np.asarray(block_x, dtype=float)
    by = np.asarray(block_y, dtype=float)
    if bx.shape != by.shape:
        raise ValueError("blocks must have equal length")
    root_n = np.sqrt(n)
    keep = (root_n * np.abs(bx) <= vx) & (root_n * np.abs(by) <= vy)
    zx, zy = bx * keep, by * keep
    scale = n / len(bx)
    return scale * np.array([[zx @ zx, zx @ zy], [zx @ zy, zy @ zy]])


def _bipower_panel(blocks: np.ndarray, n: int) -> np.ndarray:
    # blocks: (T, m, kn) raw returns
    r = np.sqrt(n) * np.abs(blocks)
    kn = blocks.shape[-1]
    return np.pi / 2 * np.sum(r[..., 1:] * r[..., :-1], axis=-1) / (kn - 1)


def spot_covariance_panel(inc: IncrementPanel, spec: BlockSpec,
                          cfg: TruncationConfig | None = None) -> SpotCovariancePanel:
    """Compute truncated block covariance matrices for every day and block."""
    cfg = cfg or TruncationConfig()
    if inc.n != spec.n:
        raise ValueError(f"increment panel has n={inc.n}, block spec expects n={spec.n}")
    T, m, kn, n = inc.T, spec.m, spec.kn, spec.n
    bx = inc.dx.reshape(T, m, kn)
    by = inc.dy.reshape(T, m, kn)
    vx = block_threshold(_bipower_panel(bx, n), cfg, n)
    vy = block_threshold(_bipower_panel(by, n), cfg, n)
    root_n = np.sqrt(n)
    ok_x = root_n * np.abs(bx) <= vx[..., None]
    ok_y = root_n * np.abs(by) <= vy[..., None]
    joint = ok_x & ok_y
    zx, zy = bx * joint, by * joint
    scale = n / kn
    return SpotCovariancePanel(
        cx=scale * np.sum(zx * zx, axis=-1),
        cxy=scale * np.sum(zx * zy, axis=-1),
        cy=scale * np.sum(zy * zy, axis=-1),
        vx=vx, vy=vy,
        cut_x=np.sum(~ok_x, axis=-1),
        cut_y=np.sum(~ok_y, axis=-1),
        cut_joint=np.sum(~joint, axis=-1),
        spec=spec, cfg=cfg,
    )


def daily_truncated_rv(inc: IncrementPanel, panel: SpotCovariancePanel):
    """Daily truncated realized measures, each an array of length ``T``.

    ``RV^X`` keeps increments passing X's own block threshold, ``RV^Y``
    likewise, and the cross term uses the joint indicator.
    """
    spec = panel.spec
    T, m, kn = inc.T, spec.m, spec.kn
    bx = inc.dx.reshape(T, m, kn)
    by = inc.dy.reshape(T, m, kn)
    root_n = np.sqrt(spec.n)
    ok_x = root_n * np.abs(bx) <= panel.vx[..., None]
    ok_y = root_n * np.abs(by) <= panel.vy[..., None]
    rv_x = np.sum(bx * bx * ok_x, axis=(1, 2))
    rv_y = np.sum(by * by * ok_y, axis=(1, 2))
    rcv = np.sum(bx * by * (ok_x & ok_y), axis=(1, 2))
    return rv_x, rcv, rv_y
