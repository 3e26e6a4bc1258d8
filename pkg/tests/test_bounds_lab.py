from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.special import erfc

from boundary_rds import nonlinearity as nl
from boundary_rds.bounds_lab import (
    GronwallInstance,
    apriori_bound_check,
    canonical_spectrum,
    certify_ensemble,
    derivative_growth_bound,
    difference_bound_check,
    divergence_trend,
    holder_derivative_check,
    kernel_integrability_check,
    log_powered_gronwall_bound,
    mittag_leffler,
    planar_spectrum,
    powered_gronwall_bound,
    r_alpha,
    series_r_grid,
    series_sum,
    trace_class_diagnostic,
)
from boundary_rds.errors import DivergentIntegral
from boundary_rds.noise_shift import sample_path, zero_path
from boundary_rds.spectral_core import build_model, semigroup_norm
from oracles import volterra_product_trapezoid


def _graded(n, T=1.0):
    return T * (np.arange(n + 1) / n) ** 2


def random_instance(rng, n=40):
    """Nondecreasing kappa and piecewise-linear non-negative g on a graded grid."""
    beta = rng.uniform(0.3, 0.7)
    t = _graded(n)
    k0, k1 = rng.uniform(0.1, 1.0), rng.uniform(0.0, 0.5)
    kappa = lambda s: k0 + k1 * s  # noqa: E731
    gv = np.abs(rng.normal(size=t.size)).cumsum() * rng.uniform(0.1, 1.0) / n + rng.uniform(0.0, 1.0)
    g = lambda s: float(np.interp(s, t, gv))  # noqa: E731
    return beta, t, kappa, g, gv


# ---------------------------------------------------------------------------
# powered Gronwall bound


def test_volterra_oracle_against_closed_form():
    t = _graded(100)
    u = volterra_product_trapezoid(lambda s: 1.0, lambda s: 1.0, 0.5, t, refine=40)
    exact = np.exp(np.pi * t) * erfc(-np.sqrt(np.pi * t))
    assert np.abs(u / exact - 1).max() < 1e-6


def test_bound_zero_forcing():
    t = _graded(20)
    b = powered_gronwall_bound(GronwallInstance(0.5, np.ones(21), np.zeros(21), t))
    assert not np.any(b)


def test_bound_matches_volterra_oracle_unit_case():
    t = _graded(100)
    b = powered_gronwall_bound(GronwallInstance(0.5, np.ones(t.size), np.ones(t.size), t))
    u = volterra_product_trapezoid(lambda s: 1.0, lambda s: 1.0, 0.5, t, refine=40)
    assert np.abs(b / u - 1).max() < 1e-6


def test_bound_dominates_oracle_on_random_instances():
    rng = np.random.default_rng(2024)
    violations = 0
    for _ in range(100):
        beta, t, kappa, g, gv = random_instance(rng)
        u = volterra_product_trapezoid(kappa, g, beta, t, refine=16)
        b = powered_gronwall_bound(GronwallInstance(beta, np.array([kappa(s) for s in t]), gv, t))
        violations += int(np.any(u > b))
    assert violations == 0


def test_bound_monotone_in_g_and_kappa():
    t = _graded(30)
    base = powered_gronwall_bound(GronwallInstance(0.5, np.ones(31), np.ones(31), t))
    more_g = powered_gronwall_bound(GronwallInstance(0.5, np.ones(31), 1.5 * np.ones(31), t))
    more_k = powered_gronwall_bound(GronwallInstance(0.5, 1.5 * np.ones(31), np.ones(31), t))
    assert np.all(more_g >= base) and np.all(more_k >= base)
    assert more_g[-1] > base[-1] and more_k[-1] > base[-1]


def test_huge_kappa_uses_log_path():
    # kappa Gamma(1/2) T^{1/2} ~ 71: the bound is ~ e^{5000}, far beyond double range
    t = _graded(10, 4.0)
    logb = log_powered_gronwall_bound(GronwallInstance(0.5, np.full(11, 20.0), np.ones(11), t))
    assert np.all(np.isfinite(logb)) and logb[-1] > 1000.0


def test_instance_validation():
    t = _graded(5)
    with pytest.raises(ValueError):
        GronwallInstance(0.5, np.linspace(2.0, 1.0, 6), np.ones(6), t)
    with pytest.raises(ValueError):
        GronwallInstance(1.2, np.ones(6), np.ones(6), t)


# ---------------------------------------------------------------------------
# the series and R(alpha)


def test_series_closed_form_at_half():
    # sum 1/Gamma(n/2) = 1/sqrt(pi) + e erfc(-1)
    assert series_sum(1.0, 0.5) == pytest.approx(1 / math.sqrt(math.pi) + math.e * erfc(-1.0), rel=1e-13)
    assert r_alpha(1.0, 0.5) == pytest.approx(3 + 2 * math.e, rel=1e-13)


def test_r_diverges_as_beta_to_one():
    betas = [0.9, 0.95, 0.99, 0.995, 0.999]
    vals = [r_alpha(1.0, b) for b in betas]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 100 * vals[0]


def test_series_below_r_on_grid():
    rows = series_r_grid(range(1, 11), (0.3, 0.5, 0.7))
    assert len(rows) == 30 and all(r["pass"] for r in rows)


def test_alpha_below_one_rejected():
    with pytest.raises(ValueError):
        r_alpha(0.5, 0.5)


def test_mittag_leffler_half():
    z = 1.3
    assert mittag_leffler(0.5, z) == pytest.approx(math.exp(z * z) * erfc(-z), rel=1e-12)


# ---------------------------------------------------------------------------
# cocycle bounds


@pytest.fixture(scope="module")
def model():
    return build_model(8, -0.5, 0.5, 1.0)


@pytest.fixture(scope="module")
def path(model):
    return sample_path(model, 0.01, -50.0, 1.0, 1.0, 4)


def test_apriori_zero_g(model, path):
    xi = np.full(8, 0.3)
    ineq = apriori_bound_check(model, path, nl.zero(), xi, 1.0)
    assert ineq.passed
    quiet = apriori_bound_check(model, zero_path(model, 0.01, -1.0, 1.0), nl.zero(), xi, 1.0)
    # rhs reduces to e^{omega t}||xi|| on a noise-free path
    assert quiet.rhs == pytest.approx(math.exp(model.omega_A * quiet.details["t"]) * np.linalg.norm(xi), rel=1e-12)


def test_derivative_growth_zero_g_equality(model, path):
    ineq = derivative_growth_bound(model, path, nl.zero(), np.ones(8), 1.0)
    assert ineq.passed
    assert ineq.lhs == pytest.approx(semigroup_norm(model, ineq.details["t"]), rel=1e-12)
    assert ineq.lhs == pytest.approx(ineq.rhs, rel=1e-12)


def test_derivative_growth_linear_g(model, path):
    c = 0.2
    ineq = derivative_growth_bound(model, path, nl.linear(c), np.ones(8), 1.0)
    t = ineq.details["t"]
    assert ineq.passed
    assert ineq.lhs == pytest.approx(math.exp((model.omega_A + c) * t), rel=1e-6)


def test_difference_bound_single_path(model, path):
    g = nl.scaled_tanh(0.1)
    xi = np.linspace(-1.0, 1.0, 8)
    assert difference_bound_check(model, path, g, xi, xi + 0.2, 1.0).passed
    same = difference_bound_check(model, path, g, xi, xi, 1.0)
    assert same.lhs == 0.0 and same.passed


def test_bounds_small_ensemble(model):
    rep = certify_ensemble(model, nl.scaled_tanh(0.1), n_samples=100, seed=3)
    assert rep["failures"] == 0
    assert rep["lp_sup_b"]["finite"]


def test_bounds_reject_long_horizon(model, path):
    with pytest.raises(ValueError):
        apriori_bound_check(model, sample_path(model, 0.01, -50.0, 2.0, 1.0, 4), nl.zero(), np.ones(8), 2.0)


def test_holder_equal_points(model, path):
    xi = np.ones(8)
    assert holder_derivative_check(model, path, nl.scaled_tanh(0.1), xi, xi, 1.0)["ratio"] == 0.0


def test_holder_linear_numerator_zero(model, path):
    rep = holder_derivative_check(model, path, nl.linear(0.2), np.zeros(8), np.ones(8), 1.0)
    assert rep["ratio"] == 0.0 and rep["pass"]


def test_holder_tanh_bounded_over_separations(model, path):
    rep = holder_derivative_check(model, path, nl.scaled_tanh(0.1), np.zeros(8), np.full(8, 0.5), 1.0)
    assert rep["pass"]
    assert max(rep["ratios"]) / min(rep["ratios"]) < 10.0


# ---------------------------------------------------------------------------
# kernel integrability and trace class


def test_kernel_integrable_and_refinement_stable(model):
    rep = kernel_integrability_check(model, 1.0, 1.0)
    assert rep["finite"] and rep["refinement_error"] < 1e-6


def test_kernel_tau_zero(model):
    assert kernel_integrability_check(model, 1.0, 0.0)["integral"] == 0.0


def test_kernel_divergent_declared(model):
    with pytest.raises(DivergentIntegral):
        kernel_integrability_check(model, 2.4, 1.0)


def test_divergence_trend(model):
    assert divergence_trend(model, 2.4, 1.0)["diverging"]
    assert not divergence_trend(model, 1.0, 1.0)["diverging"]


def test_trace_class():
    assert trace_class_diagnostic(canonical_spectrum, 1.0)["converges"]
    assert not trace_class_diagnostic(planar_spectrum, 1.0)["converges"]
