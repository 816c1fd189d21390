import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smfdroplet.dynamics import EvolutionConfig
from smfdroplet.errors import FitError
from smfdroplet.sensing import InsufficientBaseline, assess, fit_trajectory, sense
from smfdroplet.tracking import TrajectoryRecord

OMEGA = 1.14e-5


def record(t, x, widths=None):
    t = np.asarray(t, dtype=float)
    w = np.full(t.size, 0.56) if widths is None else widths
    return TrajectoryRecord(t, x, w, np.ones(t.size))


def test_exact_parabola(ref_params):
    t = np.linspace(0, 3e5, 301)
    est = fit_trajectory(record(t, OMEGA * 1e-5 * t**2), ref_params)
    assert est.a_bar_hat == pytest.approx(1e-5, rel=1e-10)
    assert abs(est.velocity_term) * 3e5 < 1e-9
    assert est.gradient == pytest.approx(OMEGA * 1e-5 / (2 * math.pi), rel=1e-10)
    assert est.rms_residual < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-1e-5, 1e-5), st.floats(-1e-4, 1e-4))
def test_recovers_any_quadratic(c0, c1, a_bar):
    from smfdroplet import SystemParams
    params = SystemParams(OMEGA, 100, -1e4, 0.99, 2.28e-6)
    t = np.linspace(0, 2e5, 50)
    est = fit_trajectory(record(t, c0 + c1 * t + OMEGA * a_bar * t**2), params)
    assert est.a_bar_hat == pytest.approx(a_bar, abs=1e-12)
    assert est.velocity_term == pytest.approx(c1, abs=1e-12)
    assert est.rms_residual >= 0
    assert np.allclose(est.covariance, est.covariance.T)
    assert np.all(np.linalg.eigvalsh(est.covariance) >= -1e-12 * np.abs(est.covariance).max() - 1e-300)


def test_noise_sets_uncertainty(ref_params, rng):
    t = np.linspace(0, 3e5, 301)
    x = OMEGA * 1e-5 * t**2 + rng.normal(0, 0.01, t.size)
    est = fit_trajectory(record(t, x), ref_params)
    assert abs(est.a_bar_hat - 1e-5) < 4 * est.a_bar_sigma
    assert est.a_bar_sigma > 0


def test_needs_samples(ref_params):
    with pytest.raises(FitError, match="at least"):
        fit_trajectory(record(np.arange(5.0), np.zeros(5)), ref_params)


def test_rank_deficient(ref_params):
    with pytest.raises(FitError, match="rank-deficient"):
        fit_trajectory(record(np.full(20, 7.0), np.zeros(20)), ref_params)


def test_nan_samples_ignored(ref_params):
    t = np.linspace(0, 3e5, 31)
    x = OMEGA * 1e-5 * t**2
    x[[3, 9]] = np.nan
    assert fit_trajectory(record(t, x), ref_params).n_samples == 29


def test_insufficient_baseline(ref_params):
    t = np.linspace(0, 1e4, 20)
    rec = record(t, OMEGA * 1e-5 * t**2)
    est = fit_trajectory(rec, ref_params, resolution=0.06)
    assert not est.baseline_resolved
    assert est.a_bar_min == pytest.approx(0.06 / (OMEGA * 1e8))
    with pytest.raises(InsufficientBaseline) as info:
        fit_trajectory(rec, ref_params, resolution=0.06, require_baseline=True)
    assert info.value.a_bar_min == pytest.approx(est.a_bar_min)


def test_assess_flags_spreading(ref_params, ref_grid):
    t = np.linspace(0, 1e5, 20)
    rec = record(t, np.zeros(20), widths=np.linspace(0.56, 1.5, 20))
    est = fit_trajectory(rec, ref_params)
    assert any("width" in i for i in assess(rec, est, ref_grid))


def test_short_sensing_run(droplet, ref_params, ref_grid):
    cfg = EvolutionConfig(1.0, 1e5, snapshot_stride=2000)
    res = sense(ref_params.with_(a_bar=1e-5), ref_grid, cfg, initial=droplet, keep_snapshots=False)
    assert res.reliable, res.issues
    assert res.estimate.a_bar_hat == pytest.approx(1e-5, rel=0.03)
