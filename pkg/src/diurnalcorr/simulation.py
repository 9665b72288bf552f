"""
Bivariate jump-diffusion with diurnal volatility and correlation.

Each asset's variance is ``sigma_u(tau)**2 * c_sv`` with ``c_sv`` a Heston
square-root process (leverage correlation with the asset's own Brownian
driver), and the spot correlation is ``rho_u(tau) * rho_sc`` with ``rho_sc`` a
Jacobi-type diffusion on (-1, 1). Compound Poisson jumps with Gaussian sizes
are added to both log prices. Time is measured in trading days, ``tau`` is
the time of day in [0, 1).

The Euler recursion runs in a numba kernel; random numbers come from a numpy
``Generator`` so a replication is fully determined by its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy import stats

from .market_data import IncrementPanel, LogPricePanel

RHO_CLIP = 1.0 - 1e-8


@dataclass(frozen=True)
class SimConfig:
    n: int = 78
    T: int = 21
    steps_per_day: int = 23_400
    # Heston variance
    mean_reversion: float = 0.05
    long_run_var: float = 1.0
    vol_of_vol: float = 0.2
    leverage: float = -math.sqrt(0.5)
    # diurnal volatility sqrt(C + A |tau - 0.5|)
    vol_level: float = 0.5
    vol_slope: float = 2.0
    # diurnal correlation a + 2 (1 - a) tau
    a: float = 1.0
    # stochastic correlation
    corr_kappa: float = 1.5
    corr_mean: float = 0.6
    corr_vol: float = 0.3
    # jumps
    jump_intensity: float = 0.2
    jump_share: float = 0.1
    jump_anchor: float = 1.0
    # draw Brownian increments on a grid this many times finer and sum them,
    # so runs with different step sizes can share one Brownian path
    brownian_substeps: int = 1
    seed: int | None = None

    def __post_init__(self):
        if not 0 < self.a <= 1:
            raise ValueError("diurnal correlation intercept a must lie in (0, 1]")
        if self.steps_per_day % self.n:
            raise ValueError(f"n={self.n} must divide steps_per_day={self.steps_per_day}")
        check_feller(self.corr_kappa, self.corr_mean, self.corr_vol)
        if self.vol_level <= 0 or self.vol_slope < 0:
            raise ValueError("diurnal volatility needs C > 0 and A >= 0")
        if not 0 <= self.jump_share < 1:
            raise ValueError("jump_share must lie in [0, 1)")
        if self.brownian_substeps < 1:
            raise ValueError("brownian_substeps must be a positive integer")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_day

    @property
    def jump_sd(self) -> float:
        if self.jump_intensity <= 0:
            return 0.0
        return math.sqrt(self.jump_share / (1 - self.jump_share) * self.jump_anchor / self.jump_intensity)

    def without_jumps(self) -> "SimConfig":
        return replace(self, jump_intensity=0.0)


@dataclass(frozen=True)
class SimOutput:
    """Simulated coarse panel plus latent paths.

    ``increments`` are the coarse returns (exact sums of fine returns) and
    ``panel`` the corresponding log prices. ``integrated`` holds each day's
    integrated variance of X, covariance and variance of Y of the continuous
    part. Latent arrays have shape ``(T, steps_per_day)``, are evaluated at
    the left end of each fine step and are only present when requested.
    Jumps are ``(time, size)`` arrays per asset, times in days from the start.
    """

    panel: LogPricePanel
    increments: IncrementPanel
    cfg: SimConfig
    integrated: np.ndarray
    fine_dx: np.ndarray | None = None
    fine_dy: np.ndarray | None = None
    sigma_x: np.ndarray | None = None
    sigma_y: np.ndarray | None = None
    rho: np.ndarray | None = None
    rho_sc: np.ndarray | None = None
    jumps_x: tuple = field(default=(np.empty(0), np.empty(0)))
    jumps_y: tuple = field(default=(np.empty(0), np.empty(0)))


def check_feller(kappa: float, rho: float, sigma: float) -> None:
    """Raise unless ``kappa > sigma**2 / (1 - rho)`` and ``kappa > sigma**2 / (1 + rho)``."""
    if not -1 < rho < 1:
        raise ValueError("correlation mean must lie in (-1, 1)")
    bound = sigma**2 / (1 - abs(rho))
    if not kappa > bound:
        raise ValueError(f"Feller-type condition violated: kappa={kappa} <= {bound:.4g}")


def diurnal_vol(tau, C: float = 0.5, A: float = 2.0):
    tau = np.asarray(tau, dtype=float)
    out = np.sqrt(C + A * np.abs(tau - 0.5))
    return float(out) if out.ndim == 0 else out


def diurnal_corr_fn(tau, a: float = 1.0):
    tau = np.asarray(tau, dtype=float)
    out = a + 2 * (1 - a) * tau
    return float(out) if out.ndim == 0 else out


def stationary_exponents(kappa: float, rho: float, sigma: float):
    """Exponents ``(p, q)`` of the density ``(1+x)^(p+q) (1-x)^(p-q)``."""
    s2 = sigma**2
    return (kappa - 2 * s2) / s2, kappa * rho / s2


def stationary_density(x, kappa: float = 1.5, rho: float = 0.6, sigma: float = 0.3):
    """Normalized stationary density of the stochastic correlation on (-1, 1).

    Under ``x = 2u - 1`` the density is a Beta(p + q + 1, p - q + 1) law, which
    supplies the normalizing constant.
    """
    p, q = stationary_exponents(kappa, rho, sigma)
    x = np.asarray(x, dtype=float)
    return stats.beta.pdf((x + 1) / 2, p + q + 1, p - q + 1) / 2


def sample_stationary_correlation(kappa: float, rho: float, sigma: float,
                                  rng: np.random.Generator, size=None):
    """Exact draws from the stationary law via its Beta representation."""
    check_feller(kappa, rho, sigma)
    if sigma == 0:
        # no noise: the process sits at its mean
        return np.full(size, rho) if size is not None else rho
    p, q = stationary_exponents(kappa, rho, sigma)
    return 2 * rng.beta(p + q + 1, p - q + 1, size) - 1


@numba.njit(cache=True)
def _euler_day(z, vol_u, corr_u, state, params, dx, dy, iv, lat_sx, lat_sy, lat_rho, lat_rsc, record):
    # z: (5, steps) standard normals [W_X, W_Y, B_X', B_Y', B_rho]
    # state: [c_x, c_y, rho_sc], updated in place
    # iv: integrated [var_x, cov_xy, var_y] over the day, overwritten
    lam, c0, xi, lev, kappa, rbar, sig, dt = (params[0], params[1], params[2], params[3],
                                              params[4], params[5], params[6], params[7])
    sdt = math.sqrt(dt)
    lev_c = math.sqrt(1.0 - lev * lev)
    cx, cy, rsc = state[0], state[1], state[2]
    ivx = 0.0
    ivxy = 0.0
    ivy = 0.0
    for k in range(z.shape[1]):
        cxp = cx if cx > 0.0 else 0.0
        cyp = cy if cy > 0.0 else 0.0
        sx = vol_u[k] * math.sqrt(cxp)
        sy = vol_u[k] * math.sqrt(cyp)
        r = corr_u[k] * rsc
        if r > RHO_CLIP:
            r = RHO_CLIP
        elif r < -RHO_CLIP:
            r = -RHO_CLIP
        wx = z[0, k] * sdt
        wy = z[1, k] * sdt
        dx[k] = sx * wx
        dy[k] = sy * (r * wx + math.sqrt(1.0 - r * r) * wy)
        ivx += sx * sx * dt
        ivxy += sx * sy * r * dt
        ivy += sy * sy * dt
        if record:
            lat_sx[k] = sx
            lat_sy[k] = sy
            lat_rho[k] = r
            lat_rsc[k] = rsc
        bx = lev * z[0, k] + lev_c * z[2, k]
        by = lev * z[1, k] + lev_c * z[3, k]
        cx = cx + lam * (c0 - cxp) * dt + xi * math.sqrt(cxp) * sdt * bx
        cy = cy + lam * (c0 - cyp) * dt + xi * math.sqrt(cyp) * sdt * by
        rsc = rsc + (1.0 - rsc * rsc) * (kappa * (rbar - rsc) * dt + sig * sdt * z[4, k])
        if rsc > RHO_CLIP:
            rsc = RHO_CLIP
        elif rsc < -RHO_CLIP:
            rsc = -RHO_CLIP
    state[0] = cx
    state[1] = cy
    state[2] = rsc
    iv[0] = ivx
    iv[1] = ivxy
    iv[2] = ivy


def _draw_jumps(rng: np.random.Generator, cfg: SimConfig):
    """Day index, time of day and size of every jump of one asset."""
    if cfg.jump_intensity > 0:
        counts = rng.poisson(cfg.jump_intensity, cfg.T)
    else:
        counts = np.zeros(cfg.T, dtype=int)
    total = int(counts.sum())
    u = rng.random(total)
    sizes = rng.normal(0.0, cfg.jump_sd, total)
    return np.repeat(np.arange(cfg.T), counts), u, sizes


def simulate_paths(cfg: SimConfig, rng: np.random.Generator | None = None,
                   record_latent: bool = False, keep_fine: bool = False) -> SimOutput:
    """Simulate ``cfg.T`` days and sample log prices on the ``cfg.n`` grid.

    Both log prices start at zero and each day opens at the previous close.
    The variance processes start at their long-run mean and ``rho_sc`` at a
    draw from its stationary law. Coarse increments are sums of the fine
    Euler increments (jumps included) over each coarse interval.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    steps, T, n, sub = cfg.steps_per_day, cfg.T, cfg.n, cfg.brownian_substeps
    tau = np.arange(steps) / steps
    vol_u = diurnal_vol(tau, cfg.vol_level, cfg.vol_slope)
    corr_u = diurnal_corr_fn(tau, cfg.a)
    params = np.array([cfg.mean_reversion, cfg.long_run_var, cfg.vol_of_vol, cfg.leverage,
                       cfg.corr_kappa, cfg.corr_mean, cfg.corr_vol, cfg.dt])

    rho0 = float(sample_stationary_correlation(cfg.corr_kappa, cfg.corr_mean, cfg.corr_vol, rng))
    state = np.array([cfg.long_run_var, cfg.long_run_var, rho0])
    jx = _draw_jumps(rng, cfg)
    jy = _draw_jumps(rng, cfg)
    jx_idx = np.minimum((jx[1] * steps).astype(np.int64), steps - 1)
    jy_idx = np.minimum((jy[1] * steps).astype(np.int64), steps - 1)

    lat_shape = (T, steps) if record_latent else (1, 1)
    latent = [np.empty(lat_shape) for _ in range(4)]
    fine_dx = np.empty((T, steps)) if keep_fine else None
    fine_dy = np.empty((T, steps)) if keep_fine else None
    coarse_dx = np.empty((T, n))
    coarse_dy = np.empty((T, n))
    integrated = np.empty((T, 3))
    day_dx = np.empty(steps)
    day_dy = np.empty(steps)
    for t in range(T):
        z = rng.standard_normal((5, steps * sub))
        if sub > 1:
            z = z.reshape(5, steps, sub).sum(axis=2) / math.sqrt(sub)
        row = t if record_latent else 0
        _euler_day(z, vol_u, corr_u, state, params, day_dx, day_dy, integrated[t],
                   latent[0][row], latent[1][row], latent[2][row], latent[3][row], record_latent)
        np.add.at(day_dx, jx_idx[jx[0] == t], jx[2][jx[0] == t])
        np.add.at(day_dy, jy_idx[jy[0] == t], jy[2][jy[0] == t])
        coarse_dx[t] = day_dx.reshape(n, steps // n).sum(axis=1)
        coarse_dy[t] = day_dy.reshape(n, steps // n).sum(axis=1)
        if keep_fine:
            fine_dx[t] = day_dx
            fine_dy[t] = day_dy

    lat = dict(zip(("sigma_x", "sigma_y", "rho", "rho_sc"), latent)) if record_latent else {}
    return SimOutput(
        panel=_panel_from_increments(coarse_dx, coarse_dy),
        increments=IncrementPanel(coarse_dx, coarse_dy),
        cfg=cfg,
        integrated=integrated,
        fine_dx=fine_dx, fine_dy=fine_dy,
        jumps_x=(jx[0] + jx[1], jx[2]),
        jumps_y=(jy[0] + jy[1], jy[2]),
        **lat,
    )


def _panel_from_increments(dx: np.ndarray, dy: np.ndarray) -> LogPricePanel:
    """Chain daily increments into log prices, each day opening at the previous close."""
    T, n = dx.shape
    flat_x = np.concatenate([[0.0], np.cumsum(dx.ravel())])
    flat_y = np.concatenate([[0.0], np.cumsum(dy.ravel())])
    idx = np.arange(T)[:, None] * n + np.arange(n + 1)[None, :]
    return LogPricePanel(flat_x[idx], flat_y[idx])


def replication_rng(base_seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator: the stream depends only on ``(base_seed, *key)``."""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=tuple(key)))
