import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from diurnalcorr.market_data import IncrementPanel
from diurnalcorr.simulation import SimConfig, simulate_paths
from diurnalcorr.spot import (BlockSpec, TruncationConfig, block_bipower, block_threshold,
                              block_truncated_covariance, daily_truncated_rv,
                              spot_covariance_panel)


def _gaussian_panel(T=4, n=78, seed=0, rho=0.5):
    rng = np.random.default_rng(seed)
    zx, zy = rng.standard_normal((2, T, n)) / np.sqrt(n)
    return IncrementPanel(zx, rho * zx + np.sqrt(1 - rho**2) * zy)


def test_block_spec():
    spec = BlockSpec(78, 26)
    assert spec.m == 3
    assert_allclose(spec.tau, [0, 1 / 3, 2 / 3])
    assert_allclose(spec.midpoints, [1 / 6, 0.5, 5 / 6])
    for n, kn in [(78, 25), (78, 1), (78, 78)]:
        with pytest.raises(ValueError):
            BlockSpec(n, kn)


def test_truncation_config_validation():
    with pytest.raises(ValueError):
        TruncationConfig(varpi=0.5)
    with pytest.raises(ValueError):
        TruncationConfig(q=0)
    with pytest.raises(ValueError):
        TruncationConfig(mode="cubic")


def test_bipower_by_hand():
    assert block_bipower([0.0, 0.0, 0.0], 10) == 0.0
    assert block_bipower([1.0, 2.0], 2) == pytest.approx(2 * math.pi, rel=1e-15)
    with pytest.raises(ValueError):
        block_bipower([1.0], 2)


def test_bipower_gaussian_oracle():
    rng = np.random.default_rng(11)
    n, sigma2 = 390, 2.0
    r = rng.normal(0, np.sqrt(sigma2 / n), size=(10_000, 130))
    bv = np.mean([block_bipower(b, n) for b in r])
    assert bv == pytest.approx(sigma2, rel=0.01)


def test_threshold():
    cfg = TruncationConfig(5.0, 0.49)
    assert block_threshold(0.0, cfg, 390) == 0.0
    assert block_threshold(1.0, cfg, 390) == pytest.approx(5 * 390**0.01, rel=1e-14)
    assert block_threshold(1.0, cfg, 390) == pytest.approx(5.30739, abs=1e-5)
    assert block_threshold(2.0, cfg, 390) == pytest.approx(math.sqrt(2) * block_threshold(1.0, cfg, 390))
    lin = TruncationConfig(5.0, 0.49, "linear")
    assert block_threshold(2.0, lin, 390) == pytest.approx(2 * block_threshold(1.0, lin, 390))


def test_truncated_covariance_by_hand():
    c = block_truncated_covariance([0.1, -0.1], [0.1, 0.1], np.inf, np.inf, 2)
    assert_allclose(c, [[0.02, 0.0], [0.0, 0.02]], atol=1e-17)
    assert_array_equal(block_truncated_covariance([0, 0], [0, 0], 1.0, 1.0, 2), np.zeros((2, 2)))


def test_joint_indicator_removes_whole_pair():
    # second X return exceeds its threshold: the pair is dropped from every entry
    c = block_truncated_covariance([0.1, 5.0], [0.1, 0.2], 1.0, 1.0, 1)
    assert_allclose(c, 0.5 * np.array([[0.01, 0.01], [0.01, 0.01]]))


def test_infinite_threshold_is_plain_covariance():
    rng = np.random.default_rng(3)
    bx, by = rng.normal(size=(2, 13))
    plain = 78 / 13 * np.array([[bx @ bx, bx @ by], [bx @ by, by @ by]])
    assert_array_equal(block_truncated_covariance(bx, by, np.inf, np.inf, 78), plain)


def test_panel_matches_single_block_function():
    inc = _gaussian_panel(T=3, seed=4)
    spec = BlockSpec(78, 26)
    panel = spot_covariance_panel(inc, spec)
    for t in range(3):
        for j in range(3):
            sl = slice(26 * j, 26 * (j + 1))
            c = block_truncated_covariance(inc.dx[t, sl], inc.dy[t, sl],
                                           panel.vx[t, j], panel.vy[t, j], 78)
            assert_allclose(panel.matrices()[t, j], c, rtol=1e-14)


def test_duplicated_asset():
    inc = _gaussian_panel(seed=5)
    same = IncrementPanel(inc.dx, inc.dx)
    panel = spot_covariance_panel(same, BlockSpec(78, 26))
    assert_array_equal(panel.cx, panel.cxy)
    assert_array_equal(panel.cx, panel.cy)


def test_blocks_are_psd():
    panel = spot_covariance_panel(_gaussian_panel(T=20, seed=6, rho=-0.9), BlockSpec(78, 13))
    eig = np.linalg.eigvalsh(panel.matrices())
    assert eig.min() >= -1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_scaling_both_assets(lam, seed):
    inc = _gaussian_panel(T=2, seed=seed)
    spec = BlockSpec(78, 26)
    base = spot_covariance_panel(inc, spec)
    scaled = spot_covariance_panel(IncrementPanel(lam * inc.dx, lam * inc.dy), spec)
    assert_allclose(scaled.matrices(), lam**2 * base.matrices(), rtol=1e-12)
    assert_array_equal(scaled.cut_joint, base.cut_joint)


def test_spec_mismatch():
    with pytest.raises(ValueError, match="n=78"):
        spot_covariance_panel(_gaussian_panel(n=78), BlockSpec(80, 20))


def test_jump_is_truncated_and_nothing_else():
    inc = _gaussian_panel(T=1, seed=7)
    dx = inc.dx.copy()
    dx[0, 40] += 2.0  # a jump of many local standard deviations
    spec = BlockSpec(78, 26)
    clean = spot_covariance_panel(inc, spec)
    jumped = spot_covariance_panel(IncrementPanel(dx, inc.dy), spec)
    assert clean.cut_joint.sum() == 0
    assert jumped.cut_x[0, 1] == 1 and jumped.cut_joint.sum() == 1
    keep = np.ones(26, bool)
    keep[40 - 26] = False
    bx, by = inc.dx[0, 26:52][keep], inc.dy[0, 26:52][keep]
    assert_allclose(jumped.cx[0, 1], 3 * bx @ bx, rtol=1e-14)
    assert_allclose(jumped.cxy[0, 1], 3 * bx @ by, rtol=1e-14)
    assert_array_equal(jumped.matrices()[:, [0, 2]], clean.matrices()[:, [0, 2]])


def test_daily_rv_identity_without_truncation():
    inc = _gaussian_panel(T=5, seed=8)
    spec = BlockSpec(78, 26)
    panel = spot_covariance_panel(inc, spec)
    assert panel.cut_x.sum() == 0 and panel.cut_y.sum() == 0
    rv = np.stack(daily_truncated_rv(inc, panel), axis=1)
    blocks = np.stack([panel.cx, panel.cxy, panel.cy], axis=-1).sum(axis=1) * spec.kn / spec.n
    assert_allclose(rv, blocks, rtol=1e-13)


def test_daily_rv_x_only_jump():
    inc = _gaussian_panel(T=1, seed=9)
    dx = inc.dx.copy()
    dx[0, 5] += 2.0
    jumped = IncrementPanel(dx, inc.dy)
    spec = BlockSpec(78, 26)
    rx, rxy, ry = daily_truncated_rv(jumped, spot_covariance_panel(jumped, spec))
    keep = np.ones(78, bool)
    keep[5] = False
    assert_allclose(rx, np.sum(inc.dx[0, keep] ** 2), rtol=1e-13)
    assert_allclose(rxy, np.sum(inc.dx[0, keep] * inc.dy[0, keep]), rtol=1e-13)
    assert_allclose(ry, np.sum(inc.dy[0] ** 2), rtol=1e-13)


def test_zero_increments():
    inc = IncrementPanel(np.zeros((2, 78)), np.zeros((2, 78)))
    panel = spot_covariance_panel(inc, BlockSpec(78, 26))
    assert_array_equal(panel.matrices(), 0.0)
    assert_array_equal(np.stack(daily_truncated_rv(inc, panel)), 0.0)


def test_blocks_track_latent_covariance():
    cfg = SimConfig(n=390, T=100, steps_per_day=4680, a=0.8).without_jumps()
    out = simulate_paths(cfg, np.random.default_rng(12), record_latent=True)
    spec = BlockSpec(390, 130)
    panel = spot_covariance_panel(out.increments, spec)
    sx, sy, rho = (a.reshape(100, 3, -1) for a in (out.sigma_x, out.sigma_y, out.rho))
    truth = np.stack([(sx**2).mean(-1), (sx * sy * rho).mean(-1), (sy**2).mean(-1)])
    est = np.stack([panel.cx, panel.cxy, panel.cy])
    ratio = est.sum(axis=1) / truth.sum(axis=1)
    assert_allclose(ratio, 1.0, atol=0.05)


def test_frame_export():
    panel = spot_covariance_panel(_gaussian_panel(T=2), BlockSpec(78, 26))
    frame = panel.to_frame()
    assert list(frame.columns[:5]) == ["t", "j", "cX", "cXY", "cY"]
    assert len(frame) == 6
