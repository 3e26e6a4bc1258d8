from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from boundary_rds.cocycle_solver import linear_cocycle_apply
from boundary_rds.errors import HorizonError
from boundary_rds.noise_shift import (
    coarsen,
    load_path,
    ou_eval,
    ou_series,
    required_window,
    sample_path,
    save_path,
    shift,
    spawn_seeds,
    stationarity_bound,
    stationarity_residual,
    wiener_value,
    zero_path,
)
from boundary_rds.spectral_core import build_model


@pytest.fixture(scope="module")
def model():
    return build_model(6, -0.5, 0.5, 1.0)


def test_same_seed_bit_identical(model):
    a = sample_path(model, 0.01, -5.0, 5.0, [1.0, 0.5], 11)
    b = sample_path(model, 0.01, -5.0, 5.0, [1.0, 0.5], 11)
    assert a.increments.tobytes() == b.increments.tobytes()


def test_zero_intensity_gives_zero_path(model):
    p = sample_path(model, 0.01, -1.0, 1.0, 0.0, 3)
    assert not np.any(p.increments)


def test_increment_variance(model):
    q = np.array([1.0, 0.25])
    p = sample_path(model, 0.01, -1000.0, 9000.0, q, 5)
    assert p.n_steps == 10**6
    var = p.increments.var(axis=0)
    assert np.all(np.abs(var / (q * 0.01) - 1) < 0.01)


def test_non_finite_parameters_rejected(model):
    with pytest.raises(ValueError):
        sample_path(model, float("nan"), -1.0, 1.0, 1.0, 0)
    with pytest.raises(ValueError):
        sample_path(model, 0.01, -1.0, 1.0, [np.inf, 1.0], 0)


def test_shift_zero_is_identity(model):
    p = sample_path(model, 0.01, -2.0, 2.0, 1.0, 1)
    v = shift(p, 0.0)
    assert np.array_equal(v.increments, p.increments)
    assert np.array_equal(ou_eval(model, v, 0.5).coeffs, ou_eval(model, p, 0.5).coeffs)


def test_shift_group_property(model):
    p = sample_path(model, 0.01, -5.0, 5.0, 1.0, 2)
    a, b = shift(shift(p, 0.5), 0.25), shift(p, 0.75)
    assert a.offset_steps == b.offset_steps
    for t in (-1.0, 0.0, 1.3):
        assert np.array_equal(wiener_value(a, t), wiener_value(b, t))
        assert np.array_equal(ou_eval(model, a, t).coeffs, ou_eval(model, b, t).coeffs)


def test_shift_rejects_off_grid_and_out_of_horizon(model):
    p = sample_path(model, 0.01, -1.0, 1.0, 1.0, 2)
    with pytest.raises(HorizonError):
        shift(p, 0.005)
    with pytest.raises(HorizonError):
        shift(p, 1.5)


def test_wiener_shift_identity_at_random_times(model):
    p = sample_path(model, 0.01, -10.0, 10.0, 1.0, 4)
    rng = np.random.default_rng(0)
    for _ in range(100):
        t, s = (rng.integers(-400, 400, size=2) * 0.01).round(2)
        lhs = wiener_value(shift(p, t), s)
        rhs = wiener_value(p, t + s) - wiener_value(p, t)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_zero_path_gives_zero_ou(model):
    p = zero_path(model, 0.01, -3.0, 3.0)
    assert not np.any(ou_series(model, p, -1.0, 2.0))


def test_ou_long_run_variance(model):
    dt = 0.01
    q = np.array([1.0, 0.5])
    p = sample_path(model, dt, -50.0, 10000.0, q, 9)
    y = ou_series(model, p, 0.0, 10000.0)
    a = model.drift
    cpl = model.boundary_coupling
    sigma2 = (cpl**2) @ q
    expected = sigma2 / (-2.0 * a)
    for k in range(3):
        assert abs(y[:, k].var() / expected[k] - 1) < 0.03


def test_ou_shift_identity_exact(model):
    p = sample_path(model, 0.01, -60.0, 20.0, 1.0, 8)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        t = round(float(rng.integers(-300, 800)) * 0.01, 2)
        s = round(float(rng.integers(-300, 800)) * 0.01, 2)
        worst = max(worst, stationarity_residual(model, p, s, t))
    assert worst == 0.0


def test_stationarity_residual_edge_cases(model):
    p = sample_path(model, 0.01, -60.0, 20.0, 1.0, 8)
    assert stationarity_residual(model, p, 0.0, 0.0) == 0.0
    w = required_window(model)
    w = round(w / 0.01) * 0.01
    res = stationarity_residual(model, p, 0.5, 1.0, window=w)
    assert res <= stationarity_bound(model, p, 0.5, 1.0, w)


def test_mismatched_window_within_bound(model):
    p = sample_path(model, 0.01, -60.0, 20.0, 1.0, 8)
    for w in (2.0, 5.0, 10.0):
        assert stationarity_residual(model, p, 0.3, 2.0, window=w) <= stationarity_bound(model, p, 0.3, 2.0, w)


def test_ou_outside_horizon(model):
    p = sample_path(model, 0.01, -1.0, 1.0, 1.0, 8)
    with pytest.raises(HorizonError):
        ou_eval(model, p, 2.0)


def test_linear_cocycle_stationary_law(model):
    """phi^t(0) at large t against the closed-form stationary OU law (KS, 5%)."""
    dt, t = 0.05, 30.0
    w = round(required_window(model) / dt) * dt
    seeds = spawn_seeds(123, 10_000)
    samples = np.array([linear_cocycle_apply(model, sample_path(model, dt, -w, t, 1.0, s), t, np.zeros(6)).coeffs[:2] for s in seeds])
    sd = np.sqrt(((model.boundary_coupling**2) @ np.ones(2)) / (-2.0 * model.drift))
    for k in range(2):
        assert stats.kstest(samples[:, k] / sd[k], "norm").pvalue > 0.05


def test_coarsen_sums_increments(model):
    p = sample_path(model, 0.01, -1.0, 1.0, 1.0, 3)
    c = coarsen(p, 4)
    assert c.dt == pytest.approx(0.04)
    assert np.allclose(c.increments.sum(axis=0), p.increments.sum(axis=0))


def test_save_load_roundtrip(model, tmp_path):
    p = sample_path(model, 0.01, -1.0, 1.0, [1.0, 2.0], 3)
    save_path(p, tmp_path / "p.bin")
    r = load_path(tmp_path / "p.bin")
    assert r.increments.tobytes() == p.increments.tobytes() and r.seed == p.seed
