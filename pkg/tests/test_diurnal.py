import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from diurnalcorr.diurnal import (diurnal_correlation, diurnal_covariance, estimate_curves,
                                 grand_average, time_average_curve)
from diurnalcorr.market_data import IncrementPanel
from diurnalcorr.simulation import SimConfig, replication_rng, simulate_paths
from diurnalcorr.spot import BlockSpec, SpotCovariancePanel, TruncationConfig, spot_covariance_panel


def _panel(cx, cxy, cy):
    cx, cxy, cy = (np.atleast_2d(np.asarray(a, float)) for a in (cx, cxy, cy))
    T, m = cx.shape
    zeros = np.zeros((T, m))
    return SpotCovariancePanel(cx, cxy, cy, zeros, zeros, zeros, zeros, zeros,
                               BlockSpec(2 * m, 2), TruncationConfig())


def _random_inc(T=10, n=78, seed=0):
    rng = np.random.default_rng(seed)
    scale = np.sqrt(0.5 + 2 * np.abs(np.arange(n) / n - 0.5)) / np.sqrt(n)
    zx, zy = rng.standard_normal((2, T, n)) * scale
    return IncrementPanel(zx, 0.6 * zx + 0.8 * zy)


def test_single_day_curve():
    p = _panel([[1.0, 2.0]], [[0.5, 0.7]], [[3.0, 4.0]])
    assert_array_equal(time_average_curve(p), [[1, 2], [0.5, 0.7], [3, 4]])


def test_identical_days():
    p = _panel([[1.0, 2.0]] * 3, [[0.5, 0.7]] * 3, [[3.0, 4.0]] * 3)
    assert_allclose(time_average_curve(p), [[1, 2], [0.5, 0.7], [3, 4]])


def test_two_day_average():
    p = _panel([[1.0, 1.0], [3.0, 3.0]], [[1.0, 1.0], [3.0, 3.0]], [[1.0, 1.0], [3.0, 3.0]])
    assert_allclose(time_average_curve(p), 2.0)


def test_grand_average():
    assert_allclose(grand_average(np.array([[1.0, 3.0]] * 3)), [2.0, 2.0, 2.0])
    assert_allclose(grand_average(np.full((3, 4), 0.7)), 0.7)


def test_diurnal_covariance_by_hand():
    c = diurnal_covariance(np.array([[1, 1], [2, 4], [1, 1]], float), np.array([1, 3, 1.0]))
    assert_allclose(c[1], [2 / 3, 4 / 3])
    assert_allclose(diurnal_covariance(np.full((3, 5), 2.5), np.full(3, 2.5)), 1.0)


def test_diurnal_covariance_zero_entry():
    with pytest.raises(ZeroDivisionError, match="XY"):
        diurnal_covariance(np.ones((3, 2)), np.array([1.0, 0.0, 1.0]))


def test_correlation_requires_positive_variances():
    with pytest.raises(ValueError):
        diurnal_correlation(np.array([[1.0, 0.0], [0.5, 0.5], [1.0, 1.0]]))


def test_correlation_can_exceed_one():
    p = _panel([[1.0, 3.0]], [[0.9, 0.9]], [[1.0, 3.0]])
    curves = estimate_curves(p)
    assert_allclose(curves.rho_tilde, [0.9, 0.3])
    assert curves.rho_bar == pytest.approx(0.45)
    assert_allclose(curves.rho_hat, [2.0, 2 / 3])


def test_exact_normalization_and_factorization():
    curves = estimate_curves(spot_covariance_panel(_random_inc(seed=1), BlockSpec(78, 13)))
    assert np.max(np.abs(curves.c_hat.mean(axis=1) - 1)) < 1e-12
    assert np.max(np.abs(curves.rho_hat * curves.rho_bar - curves.rho_tilde)) < 1e-12
    assert curves.m == 6


def test_duplicated_asset_gives_unit_curve():
    inc = _random_inc(seed=2)
    curves = estimate_curves(spot_covariance_panel(IncrementPanel(inc.dx, inc.dx), BlockSpec(78, 26)))
    assert_allclose(curves.rho_hat, 1.0, rtol=0, atol=1e-15)
    assert curves.c_bar[0] == curves.c_bar[1] == curves.c_bar[2]


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_scale_invariance(lam, seed):
    inc = _random_inc(T=3, seed=seed)
    spec = BlockSpec(78, 26)
    base = estimate_curves(spot_covariance_panel(inc, spec))
    scaled = estimate_curves(spot_covariance_panel(IncrementPanel(lam * inc.dx, inc.dy), spec))
    assert_allclose(scaled.rho_hat, base.rho_hat, rtol=1e-12)
    assert_allclose(scaled.rho_tilde, base.rho_tilde, rtol=1e-12)
    assert scaled.rho_bar == pytest.approx(base.rho_bar, rel=1e-12)


def test_empty_block_is_excluded():
    p = _panel([[1.0, 0.0, 3.0]], [[0.5, 0.0, 0.5]], [[1.0, 0.0, 3.0]])
    curves = estimate_curves(p)
    assert_array_equal(curves.valid, [True, False, True])
    assert curves.m == 2
    assert_allclose(curves.c_bar, [2.0, 0.5, 2.0])
    assert np.isnan(curves.rho_hat[1])
    assert_allclose(np.nanmean(curves.c_hat, axis=1), 1.0)


def test_recovers_known_curve():
    cfg = SimConfig(n=78, T=300, steps_per_day=780, a=0.8)
    curves = estimate_curves(spot_covariance_panel(simulate_paths(cfg, replication_rng(5, 0)).increments,
                                                   BlockSpec(78, 26)))
    truth = 0.8 + 0.4 * BlockSpec(78, 26).midpoints
    assert_allclose(curves.rho_hat, truth, atol=0.06)


def test_error_shrinks_with_T():
    spec = BlockSpec(78, 26)
    truth = 0.8 + 0.4 * spec.midpoints

    def err(T, s):
        out = simulate_paths(SimConfig(n=78, T=T, steps_per_day=780, a=0.8), replication_rng(9, T, s))
        return np.max(np.abs(estimate_curves(spot_covariance_panel(out.increments, spec)).rho_hat - truth))

    short = np.median([err(25, s) for s in range(9)])
    long = np.median([err(250, s) for s in range(9)])
    assert long < short


def test_frame_export():
    curves = estimate_curves(spot_covariance_panel(_random_inc(), BlockSpec(78, 26)))
    frame = curves.to_frame()
    assert {"tau", "cXu", "cXYu", "cYu", "rho_u"} <= set(frame.columns)
    assert_allclose(frame["tau"], [0, 1 / 3, 2 / 3])
