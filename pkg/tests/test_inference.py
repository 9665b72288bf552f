import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from diurnalcorr.inference import (NullDistribution, estimate, month_of, nonpivotal_from_estimates,
                                   nonpivotal_statistic, nonpivotal_test, pivotal_from_estimates,
                                   pivotal_gammas, pivotal_statistic, pivotal_test,
                                   retained_eigenvalues, run_monthly, run_tests,
                                   simulate_null_distribution, univariate_test)
from diurnalcorr.longrun import HacConfig
from diurnalcorr.market_data import IncrementPanel
from diurnalcorr.simulation import SimConfig, replication_rng, simulate_paths
from diurnalcorr.spot import BlockSpec


def _sim(a=1.0, T=21, seed=0, n=78, steps=780, **kw):
    return simulate_paths(SimConfig(n=n, T=T, steps_per_day=steps, a=a, **kw),
                          replication_rng(seed, T)).increments


def test_pivotal_all_unit_ratios():
    T = 16
    rho = 1 + np.array([1.0, -1.0, 1.0]) / math.sqrt(T)
    P, t_bar = pivotal_statistic(rho, np.ones(3), T)
    assert_allclose(t_bar**2, 1.0)
    assert P == pytest.approx(0.0, abs=1e-14)


def test_pivotal_by_hand():
    P, _ = pivotal_statistic(1 + np.array([0.0, 2.0]) / 2, np.ones(2), 4)
    assert P == pytest.approx(1.0)


def test_pivotal_on_null_curve():
    P, t_bar = pivotal_statistic(np.ones(4), np.zeros(4), 21)
    assert_array_equal(t_bar, 0.0)
    assert P == pytest.approx(-math.sqrt(2), abs=1e-15)
    with pytest.raises(ValueError):
        pivotal_statistic([1.0, 1.1], [1.0, 0.0], 21)


def test_pivotal_decision_rule():
    rep = pivotal_test(0.0, 0.05)
    assert not rep.reject and rep.p_value == pytest.approx(0.5)
    crit = pivotal_test(1.6449, 0.05).critical_value
    assert crit == pytest.approx(1.644854, abs=1e-6)
    assert not pivotal_test(crit, 0.05).reject  # strict inequality at the boundary
    assert pivotal_test(3.0, 0.01).reject
    with pytest.raises(ValueError):
        pivotal_test(1.0, 1.5)


def test_nonpivotal_statistic():
    assert nonpivotal_statistic(np.ones(5), 21) == 0.0
    assert nonpivotal_statistic([0.9, 1.1], 4) == pytest.approx(0.04)


def test_true_curve_limit():
    tau = (np.arange(100_000) + 0.5) / 100_000
    assert nonpivotal_statistic(0.8 + 0.4 * tau, 1) == pytest.approx(0.16 / 12, rel=1e-6)


def test_retention_rule():
    assert_allclose(retained_eigenvalues(np.diag([1.0, -1.0])), [1.0])
    assert retained_eigenvalues(np.zeros((3, 3))).size == 0
    assert_allclose(retained_eigenvalues(np.diag([1.0, 1e-12, 2.0])), [1.0, 2.0])
    with pytest.raises(ValueError):
        retained_eigenvalues(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_degenerate_null():
    null = simulate_null_distribution(np.zeros((3, 3)), draws=99, seed=1)
    assert null.degenerate
    assert_array_equal(null.sample, 0.0)
    assert nonpivotal_test(1e-9, null).reject
    assert not nonpivotal_test(0.0, null).reject


def test_identity_null_quantile():
    null = simulate_null_distribution(np.eye(3), seed=7)
    assert null.draws == 9_999
    oracle = stats.chi2.ppf(0.95, 3) / 3
    assert oracle == pytest.approx(2.6049, abs=1e-4)
    assert np.quantile(null.sample, 0.95) == pytest.approx(oracle, abs=0.08)
    assert nonpivotal_test(2.7, null, 0.05).reject


def test_single_retained_eigenvalue_law():
    null = simulate_null_distribution(np.diag([1.0, -1.0]), draws=20_000, seed=2)
    # chi2(1)/2 has mean 1/2 and 95% quantile 3.8415/2
    assert null.sample.mean() == pytest.approx(0.5, abs=0.03)
    assert np.quantile(null.sample, 0.95) == pytest.approx(stats.chi2.ppf(0.95, 1) / 2, rel=0.05)


def test_tail_p_value():
    null = simulate_null_distribution(np.eye(2), draws=999, seed=3)
    top = nonpivotal_test(null.sample.max() + 1, null, 0.001)
    assert top.reject and top.p_value == pytest.approx(1 / 1000)
    assert not nonpivotal_test(0.0, null, 0.5).reject
    assert nonpivotal_test(0.0, null).p_value == 1.0


def test_null_reproducible():
    a = simulate_null_distribution(np.eye(3), draws=500, seed=11)
    b = simulate_null_distribution(np.eye(3), draws=500, seed=11)
    assert_array_equal(a.sample, b.sample)


def test_duplicated_asset_pipeline():
    inc = _sim(seed=1)
    same = IncrementPanel(inc.dx, inc.dx)
    reps = run_tests(same, BlockSpec(78, 13), alphas=(0.05,), methods=("pivotal", "nonpivotal"), seed=0)
    piv, nonpiv = reps
    assert piv.statistic == pytest.approx(-math.sqrt(3), abs=1e-12)
    assert not piv.reject
    assert nonpiv.statistic == 0.0 and not nonpiv.reject


def test_reports_are_deterministic():
    inc = _sim(a=0.8, seed=2)
    one = run_tests(inc, BlockSpec(78, 26), alphas=(0.1, 0.05), draws=999, seed=5)
    two = run_tests(inc, BlockSpec(78, 26), alphas=(0.1, 0.05), draws=999, seed=5)
    assert [r.to_json() for r in one] == [r.to_json() for r in two]
    assert one[0].tuning["H_T"] == 2 and one[0].tuning["m"] == 3


def test_strong_alternative_rejects():
    est = estimate(_sim(a=0.5, T=66, seed=3), BlockSpec(78, 26))
    assert pivotal_from_estimates(est, (0.05,))[0].reject
    assert nonpivotal_from_estimates(est, (0.05,), draws=999, seed=1)[0].reject


def test_pivotal_variance_variants():
    est = estimate(_sim(seed=4), BlockSpec(78, 26))
    point = pivotal_gammas(est)
    deflated = pivotal_gammas(est, deflate=True)
    kernel = pivotal_gammas(est, variance="kernel")
    assert point.shape == deflated.shape == kernel.shape == (3,)
    assert np.all(point > 0) and np.all(kernel > 0)
    assert not np.allclose(deflated, point)
    with pytest.raises(ValueError):
        pivotal_gammas(est, variance="bootstrap")


def test_flat_volatility_curve_gives_floor_statistic():
    T, n = 10, 12
    x = np.tile(np.array([1, -1] * 6, float) / np.sqrt(n), (T, 1)) * np.arange(1, T + 1)[:, None]
    rep = univariate_test(IncrementPanel(x, x[::-1]), BlockSpec(n, 4), hac=HacConfig(lags=1))
    assert rep.statistic == pytest.approx(-math.sqrt(3 / 2))
    assert not rep.reject


def test_univariate_detects_v_shape():
    rep = univariate_test(_sim(T=66, seed=5, n=390, steps=1560), BlockSpec(390, 130))
    assert rep.reject


def test_month_keys():
    assert month_of("2024-01-15") == "2024-01"
    assert month_of("20240115") == "2024-01"
    assert month_of("d1") == "d1"


def test_monthly_protocol():
    inc = _sim(seed=6, T=40)
    days = tuple(f"2024-01-{d:02d}" for d in range(1, 21)) + tuple(f"2024-02-{d:02d}" for d in range(1, 21))
    inc = IncrementPanel(inc.dx, inc.dy, days)
    reps = run_monthly(inc, BlockSpec(78, 26), alphas=(0.1,), methods=("pivotal",), bonferroni=True)
    assert [r.tuning["month"] for r in reps] == ["2024-01", "2024-02"]
    assert all(r.alpha == pytest.approx(0.05) for r in reps)
    with pytest.raises(ValueError):
        run_monthly(inc, BlockSpec(78, 26), min_days=30)


def test_null_distribution_record():
    null = simulate_null_distribution(np.eye(2), draws=10, seed=0)
    assert isinstance(null, NullDistribution) and null.m == 2 and null.sample.size == 10
