"""
Kernel-weighted (HAC) long-run covariance estimators.

Two flavours are needed by the tests:

* a pointwise 3x3 long-run covariance of the daily (X, XY, Y) block
  estimates at one time of day, and
* the cross-grid kernel between every pair of times of day, built from the
  delta-method residual series ``A[t, j] = c[t, j] - c_u[j] * RV[t]``, which
  is then mapped through the gradient of the correlation transform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

KernelKind = Literal["parzen", "bartlett"]


def cube_root_floor(T: int) -> int:
    h = int(round(T ** (1.0 / 3.0)))
    while h ** 3 > T:
        h -= 1
    while (h + 1) ** 3 <= T:
        h += 1
    return h


@dataclass(frozen=True)
class HacConfig:
    kernel: KernelKind = "parzen"
    lags: int | None = None  # None means floor(T ** (1/3))

    def __post_init__(self):
        if self.kernel not in ("parzen", "bartlett"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.lags is not None and self.lags < 0:
            raise ValueError("lag length must be nonnegative")

    def lag_length(self, T: int) -> int:
        return cube_root_floor(T) if self.lags is None else self.lags


@dataclass(frozen=True)
class LongRunMatrix:
    """3x3 long-run covariance over components ordered (X, XY, Y)."""

    matrix: np.ndarray
    index: tuple = ()
    eigenvalues: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "eigenvalues", np.linalg.eigvalsh((m + m.T) / 2))


def kernel_weight(kind: KernelKind, x):
    """Parzen or Bartlett lag weight at lag fraction ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("lag fraction must be nonnegative")
    if kind == "parzen":
        w = np.where(x <= 0.5, 1 - 6 * x**2 + 6 * x**3, 2 * (1 - x) ** 3)
        w = np.where(x > 1, 0.0, w)
    elif kind == "bartlett":
        w = np.maximum(0.0, 1 - x)
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    return float(w) if w.ndim == 0 else w


def hac_longrun(u: np.ndarray, lags: int, kernel: KernelKind = "parzen",
                center: bool = True) -> np.ndarray:
    """Long-run covariance of the rows of ``u`` (shape ``(T, d)``).

    Autocovariances at lag ``h`` are summed over ``T - h`` products but
    divided by ``T``.
    """
    u = np.asarray(u, dtype=float)
    T = u.shape[0]
    if lags >= T:
        raise ValueError(f"lag length {lags} must be smaller than T={T}")
    if center:
        u = u - u.mean(axis=0)
    out = u.T @ u / T
    for h in range(1, lags + 1):
        w = kernel_weight(kernel, h / lags)
        if w == 0:
            continue
        nu = u[:-h].T @ u[h:] / T
        out = out + w * (nu + nu.T)
    return out


def hac_longrun_pointwise(cx, cxy, cy, curve: np.ndarray, j: int,
                          cfg: HacConfig | None = None) -> LongRunMatrix:
    """Long-run covariance of the daily block triples at block ``j``.

    ``cx``, ``cxy``, ``cy`` are ``(T, m)`` arrays and ``curve`` is the
    ``(3, m)`` time-average curve used for centering.
    """
    cfg = cfg or HacConfig()
    triples = np.column_stack([cx[:, j], cxy[:, j], cy[:, j]]) - curve[:, j]
    T = triples.shape[0]
    mat = hac_longrun(triples, cfg.lag_length(T), cfg.kernel, center=False)
    return LongRunMatrix(mat, (j,))


def deflation_matrix(c_bar) -> np.ndarray:
    c_bar = np.asarray(c_bar, dtype=float)
    return 1.0 / np.outer(c_bar, c_bar)


def correlation_gradient(c_u) -> np.ndarray:
    """Direction ``(c_XY/c_X, -2, c_XY/c_Y)``; ``c_u`` has shape ``(3,)`` or ``(3, m)``."""
    c_u = np.asarray(c_u, dtype=float)
    if np.any(c_u[0] <= 0) or np.any(c_u[2] <= 0):
        raise ValueError("diurnal variances must be strictly positive")
    return np.stack([c_u[1] / c_u[0], np.full_like(c_u[1], -2.0), c_u[1] / c_u[2]])


def gamma_hat(gamma, c_u, c_bar=None, clamp_tol: float = 1e-8) -> float:
    """Asymptotic variance of the diurnal correlation at one block.

    ``gamma`` is a 3x3 long-run covariance (or a :class:`LongRunMatrix`).
    When ``c_bar`` is given, ``gamma`` is first divided entrywise by
    ``c_bar[a] * c_bar[b]`` to move it to the scale of the normalized curve.
    Small negative results (above ``-clamp_tol`` in relative terms) are set to
    zero.
    """
    mat = gamma.matrix if isinstance(gamma, LongRunMatrix) else np.asarray(gamma, dtype=float)
    if c_bar is not None:
        mat = mat * deflation_matrix(c_bar)
    c_u = np.asarray(c_u, dtype=float)
    g = correlation_gradient(c_u)
    value = float(g @ mat @ g / (4 * c_u[0] * c_u[2]))
    if value < 0:
        scale = float(np.abs(g) @ np.abs(mat) @ np.abs(g) / (4 * c_u[0] * c_u[2]))
        if value < -clamp_tol * max(scale, 1.0):
            warnings.warn(f"negative correlation variance {value:.3g} clamped to zero",
                          RuntimeWarning, stacklevel=2)
        value = 0.0
    return value


def a_hat_series(cx, cxy, cy, rv, c_hat) -> np.ndarray:
    """Residual series with shape ``(T, m, 3)``.

    ``rv`` is the daily truncated triple ``(RV^X, RCV^XY, RV^Y)``, each of
    length ``T``; ``c_hat`` is the ``(3, m)`` normalized diurnal curve.
    """
    blocks = np.stack([cx, cxy, cy], axis=-1)               # (T, m, 3)
    daily = np.stack(rv, axis=-1)[:, None, :]               # (T, 1, 3)
    return blocks - np.asarray(c_hat).T[None, :, :] * daily


def covariance_kernel_matrix(a_hat: np.ndarray, c_bar, c_hat,
                             cfg: HacConfig | None = None, return_gamma: bool = False):
    """Estimate the ``m x m`` covariance kernel of the scaled correlation errors.

    The ``3m x 3m`` long-run covariance of the stacked residuals is computed
    without centering (the residuals have mean zero by construction), with
    negative lags contributing the transposed autocovariance. Each 3x3
    sub-block is deflated by the average covariances and contracted with the
    correlation gradient at both grid points.
    """
    cfg = cfg or HacConfig()
    a_hat = np.asarray(a_hat, dtype=float)
    T, m, _ = a_hat.shape
    flat = a_hat.reshape(T, 3 * m)
    big = hac_longrun(flat, cfg.lag_length(T), cfg.kernel, center=False)
    gamma = big.reshape(m, 3, m, 3).transpose(0, 2, 1, 3)   # (m, m, 3, 3)
    gamma = gamma * deflation_matrix(c_bar)
    c_hat = np.asarray(c_hat, dtype=float)
    g = correlation_gradient(c_hat)                          # (3, m)
    scale = 0.25 / np.sqrt(np.outer(c_hat[0] * c_hat[2], c_hat[0] * c_hat[2]))
    C = scale * np.einsum("ai,ijab,bj->ij", g, gamma, g)
    C = (C + C.T) / 2
    if return_gamma:
        return C, gamma
    return C
