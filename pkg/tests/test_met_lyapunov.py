from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from boundary_rds import nonlinearity as nl
from boundary_rds.errors import EnsembleTooSmall, NonStationaryError, SpectralGapError
from boundary_rds.met_lyapunov import (
    backward_unstable_rate,
    classify,
    equivariance_angles,
    integrability_estimate,
    lyapunov_spectrum,
    oseledets_splitting,
    required_span,
)
from boundary_rds.noise_shift import sample_path, spawn_seeds, zero_path
from boundary_rds.spectral_core import build_model
from boundary_rds.stationary_manifolds import stationary_point


@pytest.fixture(scope="module")
def linear_spectrum():
    m = build_model(4, 0.5, 0.5, 1.0)
    p = zero_path(m, 0.01, -250.0, 1050.0)
    return m, p, lyapunov_spectrum(m, p, nl.zero(), None, 0.1, 10_000)


def test_linear_exponents(linear_spectrum):
    m, _, spec = linear_spectrum
    assert np.allclose(spec.exponents, [0.5, -0.5, -3.5, -8.5], rtol=0.02)
    assert spec.multiplicities == [1, 1, 1, 1]


def test_linear_shift_by_c(linear_spectrum):
    m, p, spec = linear_spectrum
    shifted = lyapunov_spectrum(m, p, nl.linear(0.2), None, 0.1, 10_000)
    assert np.allclose(shifted.exponents - spec.exponents, 0.2, atol=0.01)


def test_t0_independence():
    m = build_model(4, 0.5, 0.5, 1.0)
    g = nl.scaled_tanh(0.1)
    n = 2000
    estimates = []
    for t0 in (0.05, 0.1, 0.2):
        lo, hi = required_span(t0, n)
        p = sample_path(m, 0.01, lo - 80.0, hi + 80.0, 1.0, 17)
        Z = stationary_point(m, p, g, span=(lo, hi), allow_dichotomy=True)
        s = lyapunov_spectrum(m, p, g, Z, t0, n)
        estimates.append((s.directional, s.directional_ci))
    for k in range(4):
        for (a, ca) in estimates:
            for (b, cb) in estimates:
                assert abs(a[k] - b[k]) <= ca[k] + cb[k] + 1e-12


def test_splitting_by_sign(linear_spectrum):
    _, _, spec = linear_spectrum
    S, U, C, proj = oseledets_splitting(spec)
    assert U.shape == (4, 1) and abs(abs(U[0, 0]) - 1) < 1e-12
    assert S.shape == (4, 3) and np.allclose(S[0], 0.0, atol=1e-12)
    assert C.shape == (4, 0)
    assert classify(spec)["U_dirs"] == [0]


def test_projections_complete(linear_spectrum):
    _, _, spec = linear_spectrum
    P = spec.projections()
    assert np.allclose(P["S"] + P["C"] + P["U"], np.eye(4), atol=1e-12)
    assert np.abs(P["S"] @ P["U"]).max() < 1e-12


def test_tuned_center_direction():
    m = build_model(4, 1.0, 0.5, 1.0)
    p = zero_path(m, 0.01, -250.0, 1050.0)
    spec = lyapunov_spectrum(m, p, nl.zero(), None, 0.1, 10_000)
    S, U, C, _ = oseledets_splitting(spec)
    assert C.shape == (4, 1) and abs(abs(C[1, 0]) - 1) < 1e-12


@pytest.fixture(scope="module")
def tanh_spectrum():
    m = build_model(4, 0.5, 0.5, 1.0)
    g = nl.scaled_tanh(0.1)
    lo, hi = required_span(0.1, 2000)
    p = sample_path(m, 0.01, lo - 80.0, hi + 80.0, 1.0, 3)
    Z = stationary_point(m, p, g, span=(lo, hi), allow_dichotomy=True)
    return m, p, g, Z, lyapunov_spectrum(m, p, g, Z, 0.1, 2000)


def test_equivariance_after_transient(tanh_spectrum):
    assert equivariance_angles(tanh_spectrum[-1]).max() < 1e-3


def test_backward_unstable_rate(linear_spectrum):
    _, _, spec = linear_spectrum
    r = backward_unstable_rate(spec)
    assert r["rate"] == pytest.approx(-0.5, abs=1e-6)


def test_no_gap_refused(tanh_spectrum):
    spec = tanh_spectrum[-1]
    top, ci = spec.exponents[0], spec.ci[0]
    assert ci > 0
    # a center band whose edge falls inside the confidence interval of the top exponent
    with pytest.raises(SpectralGapError):
        oseledets_splitting(spec, threshold=abs(top) - 0.5 * ci)


def test_non_stationary_base_rejected(tanh_spectrum):
    m, p, g, Z, _ = tanh_spectrum
    with pytest.raises(NonStationaryError):
        lyapunov_spectrum(m, p, g, replace(Z, residual=1e-3), 0.1, 2000)


def test_integrability_linear_deterministic():
    m = build_model(4, 0.5, 0.5, 1.0)
    paths = [zero_path(m, 0.01, -1.0, 1.0)] * 100
    r = integrability_estimate(m, paths, nl.zero(), None, 0.1)
    assert r["forward"]["mean"] == pytest.approx(math.log(math.exp(0.5 * 0.1)), rel=1e-12)
    assert r["forward"]["ci"][0] == r["forward"]["ci"][1]


def test_integrability_bounded_g():
    m = build_model(4, -0.5, 0.5, 1.0)
    g = nl.scaled_tanh(0.1)
    paths, Zs = [], []
    for s in spawn_seeds(7, 100):
        p = sample_path(m, 0.01, -80.0, 1.0, 1.0, s)
        paths.append(p)
        Zs.append(stationary_point(m, p, g, span=(0.0, 0.1)))
    r = integrability_estimate(m, paths, g, Zs, 0.1)
    for side in ("forward", "backward"):
        assert r[side]["finite"]
        lo, hi = r[side]["ci"]
        assert lo <= r[side]["mean"] <= hi
        assert not r[side]["heavy_tail_alarm"]


def test_ensemble_too_small():
    m = build_model(4, -0.5, 0.5, 1.0)
    with pytest.raises(EnsembleTooSmall):
        integrability_estimate(m, [zero_path(m, 0.01, -1.0, 1.0)] * 10, nl.zero(), None, 0.1)
