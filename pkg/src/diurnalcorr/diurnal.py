"""
Diurnal covariance and correlation curves.

The block panel is averaged over days to a time-of-day curve, which is then
divided entrywise by its own average over the day so that each of the X, XY
and Y curves integrates to one. The diurnal correlation is the correlation
transform of the normalized curve; it equals the raw curve's correlation
deflated by the average daily correlation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .spot import BlockSpec, SpotCovariancePanel

logger = logging.getLogger(__name__)

ENTRIES = ("X", "XY", "Y")


@dataclass(frozen=True)
class DiurnalCurves:
    """Diurnal estimates on the block grid.

    Curves are arrays of shape ``(3, m)`` ordered (X, XY, Y); ``c_bar`` has
    shape ``(3,)``. Blocks where ``valid`` is false (nonpositive diagonal)
    carry NaN in the normalized curves and correlations.
    """

    c_tilde: np.ndarray
    c_hat: np.ndarray
    c_bar: np.ndarray
    rho_tilde: np.ndarray
    rho_hat: np.ndarray
    rho_bar: float
    valid: np.ndarray
    spec: BlockSpec
    T: int

    @property
    def m(self) -> int:
        return int(self.valid.sum())

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "tau": self.spec.tau,
            "midpoint": self.spec.midpoints,
            "cXu": self.c_hat[0], "cXYu": self.c_hat[1], "cYu": self.c_hat[2],
            "rho_u": self.rho_hat,
            "cX_tilde": self.c_tilde[0], "cXY_tilde": self.c_tilde[1], "cY_tilde": self.c_tilde[2],
            "rho_tilde": self.rho_tilde,
            "valid": self.valid,
        })


def time_average_curve(panel: SpotCovariancePanel) -> np.ndarray:
    if panel.T < 1:
        raise ValueError("need at least one day")
    return np.stack([panel.cx.mean(axis=0), panel.cxy.mean(axis=0), panel.cy.mean(axis=0)])


def grand_average(curve: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Average a ``(3, m)`` curve over the (valid) blocks."""
    curve = np.asarray(curve, dtype=float)
    if valid is None:
        return curve.mean(axis=-1)
    if not np.any(valid):
        raise ValueError("no valid blocks to average over")
    return curve[..., valid].mean(axis=-1)


def diurnal_covariance(c_tilde: np.ndarray, c_bar: np.ndarray) -> np.ndarray:
    c_tilde = np.asarray(c_tilde, dtype=float)
    c_bar = np.asarray(c_bar, dtype=float)
    for name, value in zip(ENTRIES, c_bar):
        if value == 0:
            raise ZeroDivisionError(f"average spot covariance entry {name} is zero")
    return c_tilde / c_bar[:, None]


def _corr(c: np.ndarray):
    return c[1] / np.sqrt(c[0] * c[2])


def diurnal_correlation(c_hat: np.ndarray) -> np.ndarray:
    c_hat = np.asarray(c_hat, dtype=float)
    if np.any(c_hat[0] <= 0) or np.any(c_hat[2] <= 0):
        raise ValueError("diurnal variance curves must be strictly positive")
    return _corr(c_hat)


def estimate_curves(panel: SpotCovariancePanel) -> DiurnalCurves:
    """Full diurnal estimation from a block panel.

    Blocks whose average X or Y variance is not strictly positive (every
    increment truncated, or no price movement) are excluded and the
    normalization is taken over the surviving blocks.
    """
    c_tilde = time_average_curve(panel)
    valid = (c_tilde[0] > 0) & (c_tilde[2] > 0)
    if not valid.all():
        logger.warning("excluding %d block(s) with zero variance", int((~valid).sum()))
    c_bar = grand_average(c_tilde, valid)
    if c_bar[0] <= 0 or c_bar[2] <= 0:
        raise ValueError("average variance must be positive")
    c_hat = np.full_like(c_tilde, np.nan)
    c_hat[:, valid] = diurnal_covariance(c_tilde[:, valid], c_bar)
    rho_tilde = np.full(c_tilde.shape[1], np.nan)
    rho_hat = np.full(c_tilde.shape[1], np.nan)
    rho_tilde[valid] = _corr(c_tilde[:, valid])
    rho_hat[valid] = diurnal_correlation(c_hat[:, valid])
    rho_bar = float(c_bar[1] / np.sqrt(c_bar[0] * c_bar[2]))
    return DiurnalCurves(c_tilde, c_hat, c_bar, rho_tilde, rho_hat, rho_bar, valid,
                         panel.spec, panel.T)
