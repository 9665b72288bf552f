"""
Tests for deterministic diurnal variation in correlation.

``pivotal`` standardizes each block's deviation of the diurnal correlation
from one by a pointwise HAC variance and compares the centered sum of squares
to a standard normal. ``nonpivotal`` uses the plain mean squared deviation and
simulates its null law as a weighted sum of chi-square(1) variables, with
weights given by the eigenvalues of the estimated covariance kernel.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy import stats

from .diurnal import DiurnalCurves, estimate_curves
from .longrun import (HacConfig, a_hat_series, covariance_kernel_matrix, gamma_hat,
                      hac_longrun_pointwise)
from .market_data import IncrementPanel
from .spot import BlockSpec, SpotCovariancePanel, TruncationConfig, daily_truncated_rv, spot_covariance_panel

logger = logging.getLogger(__name__)

Method = Literal["pivotal", "nonpivotal", "univariate-X", "univariate-Y"]

EIGEN_CUTOFF = 1e-10
DEFAULT_DRAWS = 9_999


@dataclass
class TestReport:
    __test__ = False  # not a pytest class

    method: str
    statistic: float
    alpha: float
    critical_value: float
    p_value: float
    reject: bool
    tuning: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass(frozen=True)
class NullDistribution:
    eigenvalues: np.ndarray
    draws: int
    seed: int | None
    sample: np.ndarray
    m: int

    @property
    def degenerate(self) -> bool:
        return self.eigenvalues.size == 0


def pivotal_statistic(rho_hat, gammas, T: int):
    """Return the pivotal statistic and the per-block t-ratios."""
    rho_hat = np.asarray(rho_hat, dtype=float)
    gammas = np.asarray(gammas, dtype=float)
    m = rho_hat.size
    if m < 2:
        raise ValueError("need at least two blocks")
    dev = rho_hat - 1
    # a block sitting exactly on the null contributes a zero ratio even when
    # its variance vanishes (a duplicated asset, for instance)
    if np.any((gammas <= 0) & (dev != 0)):
        raise ValueError("correlation variance is zero on a retained block")
    with np.errstate(divide="ignore", invalid="ignore"):
        t_bar = np.where(dev == 0, 0.0, np.sqrt(T) * dev / np.sqrt(np.maximum(gammas, 0)))
    P = float(np.sum(t_bar**2 - 1) / np.sqrt(2 * m))
    return P, t_bar


def pivotal_test(P: float, alpha: float = 0.05, tuning: dict | None = None,
                 method: str = "pivotal", details: dict | None = None) -> TestReport:
    """One-sided normal test: reject when ``P`` strictly exceeds ``z_{1-alpha}``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    crit = float(stats.norm.ppf(1 - alpha))
    return TestReport(method, float(P), alpha, crit, float(stats.norm.sf(P)),
                      bool(P > crit), dict(tuning or {}), dict(details or {}))


def nonpivotal_statistic(rho_hat, T: int, m: int | None = None) -> float:
    rho_hat = np.asarray(rho_hat, dtype=float)
    m = rho_hat.size if m is None else m
    if m < 1:
        raise ValueError("need at least one block")
    return float(T / m * np.sum((rho_hat - 1) ** 2))


def retained_eigenvalues(C: np.ndarray, cutoff: float = EIGEN_CUTOFF) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if not np.allclose(C, C.T, atol=1e-10 * max(1.0, np.abs(C).max())):
        raise ValueError("covariance kernel must be symmetric")
    lam = np.linalg.eigvalsh((C + C.T) / 2)
    top = np.abs(lam).max() if lam.size else 0.0
    return lam[lam > cutoff * top] if top > 0 else lam[:0]


def simulate_null_distribution(C: np.ndarray, draws: int = DEFAULT_DRAWS, seed=None,
                               rng: np.random.Generator | None = None) -> NullDistribution:
    """Simulate ``(1/m) sum_j lambda_j chi2_j`` over the positive eigenvalues of ``C``."""
    if draws < 1:
        raise ValueError("need at least one draw")
    C = np.asarray(C, dtype=float)
    m = C.shape[0]
    lam = retained_eigenvalues(C)
    if lam.size == 0:
        logger.warning("covariance kernel has no positive eigenvalue; null law is degenerate at zero")
        return NullDistribution(lam, draws, seed, np.zeros(draws), m)
    rng = rng if rng is not None else np.random.default_rng(seed)
    z = rng.standard_normal((draws, lam.size))
    sample = np.sort((z**2) @ lam / m)
    return NullDistribution(lam, draws, seed, sample, m)


def nonpivotal_test(N: float, null: NullDistribution, alpha: float = 0.05,
                    tuning: dict | None = None, details: dict | None = None) -> TestReport:
    """Compare ``N`` with the empirical ``1 - alpha`` quantile of the simulated null."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    crit = float(np.quantile(null.sample, 1 - alpha))
    exceed = null.draws - np.searchsorted(null.sample, N, side="left")
    p = (1 + exceed) / (null.draws + 1)
    return TestReport("nonpivotal", float(N), alpha, crit, float(p), bool(N > crit),
                      dict(tuning or {}), dict(details or {}))


# --- pipelines ------------------------------------------------------------------

@dataclass(frozen=True)
class Estimates:
    """Everything the tests need, computed once from an increment panel."""

    panel: SpotCovariancePanel
    curves: DiurnalCurves
    rv: tuple

    @property
    def T(self) -> int:
        return self.panel.T


def estimate(inc: IncrementPanel, spec: BlockSpec, trunc: TruncationConfig | None = None) -> Estimates:
    panel = spot_covariance_panel(inc, spec, trunc)
    return Estimates(panel, estimate_curves(panel), daily_truncated_rv(inc, panel))


def _tuning(est: Estimates, hac: HacConfig, **extra) -> dict:
    spec, cfg = est.panel.spec, est.panel.cfg
    out = dict(n=spec.n, kn=spec.kn, m=est.curves.m, T=est.T, H_T=hac.lag_length(est.T),
               kernel=hac.kernel, q=cfg.q, varpi=cfg.varpi, threshold_mode=cfg.mode)
    out.update(extra)
    return out


PivotalVariance = Literal["pointwise", "kernel"]


def pivotal_gammas(est: Estimates, hac: HacConfig | None = None,
                   variance: PivotalVariance = "pointwise", deflate: bool = False) -> np.ndarray:
    """Per-block variances of the diurnal correlation on the valid blocks.

    ``variance="pointwise"`` is the plug-in sandwich on the HAC covariance of
    the daily block triples centered at the time-average curve. ``deflate``
    divides that covariance entrywise by the products of average covariances
    before the contraction. ``variance="kernel"`` instead takes the diagonal
    of the covariance kernel used by the nonpivotal test, whose residuals
    also absorb the randomness of the daily normalization.
    """
    hac = hac or HacConfig()
    if variance == "kernel":
        return np.diag(kernel_from_estimates(est, hac)).copy()
    if variance != "pointwise":
        raise ValueError(f"unknown pivotal variance {variance!r}")
    p, c = est.panel, est.curves
    out = []
    for j in np.flatnonzero(c.valid):
        lr = hac_longrun_pointwise(p.cx, p.cxy, p.cy, c.c_tilde, j, hac)
        out.append(gamma_hat(lr, c.c_hat[:, j], c.c_bar if deflate else None))
    return np.array(out)


def pivotal_from_estimates(est: Estimates, alphas=(0.05,), hac: HacConfig | None = None,
                           variance: PivotalVariance = "pointwise",
                           deflate: bool = False) -> list[TestReport]:
    hac = hac or HacConfig()
    c = est.curves
    gammas = pivotal_gammas(est, hac, variance, deflate)
    P, t_bar = pivotal_statistic(c.rho_hat[c.valid], gammas, est.T)
    details = dict(t_bar=t_bar, gamma=gammas, rho_u=c.rho_hat[c.valid])
    tuning = _tuning(est, hac, variance=variance, deflate=deflate)
    return [pivotal_test(P, a, tuning, details=details) for a in alphas]


def kernel_from_estimates(est: Estimates, hac: HacConfig | None = None) -> np.ndarray:
    c = est.curves
    v = c.valid
    a_hat = a_hat_series(est.panel.cx[:, v], est.panel.cxy[:, v], est.panel.cy[:, v],
                         est.rv, c.c_hat[:, v])
    return covariance_kernel_matrix(a_hat, c.c_bar, c.c_hat[:, v], hac)


def nonpivotal_from_estimates(est: Estimates, alphas=(0.05,), hac: HacConfig | None = None,
                              draws: int = DEFAULT_DRAWS, seed=None,
                              rng: np.random.Generator | None = None) -> list[TestReport]:
    hac = hac or HacConfig()
    c = est.curves
    N = nonpivotal_statistic(c.rho_hat[c.valid], est.T)
    C = kernel_from_estimates(est, hac)
    null = simulate_null_distribution(C, draws, seed, rng)
    tuning = _tuning(est, hac, draws=draws, seed=seed)
    details = dict(eigenvalues=null.eigenvalues, rho_u=c.rho_hat[c.valid])
    return [nonpivotal_test(N, null, a, tuning, details) for a in alphas]


def univariate_from_estimates(est: Estimates, asset: str = "X", alphas=(0.05,),
                              hac: HacConfig | None = None) -> list[TestReport]:
    """Test for diurnal variation in one asset's volatility."""
    hac = hac or HacConfig()
    idx = {"X": 0, "Y": 2}[asset]
    p, c = est.panel, est.curves
    blocks = np.flatnonzero(c.valid)
    var = []
    for j in blocks:
        lr = hac_longrun_pointwise(p.cx, p.cxy, p.cy, c.c_tilde, j, hac)
        var.append(lr.matrix[idx, idx] / c.c_bar[idx] ** 2)
    P, t_bar = pivotal_statistic(c.c_hat[idx, blocks], np.array(var), est.T)
    tuning = _tuning(est, hac)
    return [pivotal_test(P, a, tuning, method=f"univariate-{asset}", details=dict(t_bar=t_bar))
            for a in alphas]


def univariate_test(inc: IncrementPanel, spec: BlockSpec, trunc: TruncationConfig | None = None,
                    hac: HacConfig | None = None, alpha: float = 0.05, asset: str = "X") -> TestReport:
    return univariate_from_estimates(estimate(inc, spec, trunc), asset, (alpha,), hac)[0]


def run_tests(inc: IncrementPanel, spec: BlockSpec, trunc: TruncationConfig | None = None,
              hac: HacConfig | None = None, alphas=(0.05,), methods=("pivotal", "nonpivotal"),
              draws: int = DEFAULT_DRAWS, seed=None, pivotal_variance: PivotalVariance = "pointwise",
              deflate: bool = False) -> list[TestReport]:
    est = estimate(inc, spec, trunc)
    out: list[TestReport] = []
    for method in methods:
        if method == "pivotal":
            out += pivotal_from_estimates(est, alphas, hac, pivotal_variance, deflate)
        elif method == "nonpivotal":
            out += nonpivotal_from_estimates(est, alphas, hac, draws, seed)
        elif method in ("univariate-X", "univariate-Y"):
            out += univariate_from_estimates(est, method[-1], alphas, hac)
        else:
            raise ValueError(f"unknown method {method!r}")
    return out


def month_of(day: str) -> str:
    """Month key of an ISO-like day label (``YYYY-MM-DD`` or ``YYYYMMDD``)."""
    s = day.replace("-", "")
    return f"{s[:4]}-{s[4:6]}" if len(s) >= 6 and s[:6].isdigit() else day


def run_monthly(inc: IncrementPanel, spec: BlockSpec, trunc: TruncationConfig | None = None,
                hac: HacConfig | None = None, alphas=(0.05,), methods=("pivotal", "nonpivotal"),
                draws: int = DEFAULT_DRAWS, seed=None, bonferroni: bool = False,
                min_days: int = 5, pivotal_variance: PivotalVariance = "pointwise",
                deflate: bool = False) -> list[TestReport]:
    """Run the tests separately on each calendar month of the panel.

    With ``bonferroni=True`` every level is divided by the number of months
    tested, controlling the family-wise error rate.
    """
    groups: dict[str, list[int]] = {}
    for i, d in enumerate(inc.days):
        groups.setdefault(month_of(d), []).append(i)
    months = [(k, v) for k, v in groups.items() if len(v) >= min_days]
    if not months:
        raise ValueError("no month has enough days")
    family = len(months)
    levels = tuple(a / family for a in alphas) if bonferroni else tuple(alphas)
    seeds = np.random.SeedSequence(seed).spawn(family)
    out = []
    for (month, rows), ss in zip(months, seeds):
        sub_seed = int(ss.generate_state(1)[0])
        for rep in run_tests(inc.select(rows), spec, trunc, hac, levels, methods, draws, sub_seed,
                             pivotal_variance, deflate):
            rep.tuning["month"] = month
            rep.tuning["bonferroni_family"] = family if bonferroni else 1
            out.append(rep)
    return out
