"""Truncated spectral representation of the Neumann heat operator on (0, pi).

Modes are the normalized cosines e_0 = 1/sqrt(pi), e_k = sqrt(2/pi) cos(kx) with
-A0 e_k = lambda_k e_k, lambda_k = k^2 (+ optional reg_shift).  The generator
carries a shift mu, so every mode evolves with drift a_k = mu - lambda_k.

Boundary flux data b = (g_0, g_pi) enter each mode through the traces of the
eigenfunctions: the outward normal derivative of u at x = 0 and x = pi tested
against e_k gives n_k(b) = e_k(0) g_0 + e_k(pi) g_pi.  The finite-difference
oracle in the test suite checks this coupling independently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import roots_legendre

from .errors import SingularOperatorError

P_STAR = 4.0 / 3.0


@dataclass(frozen=True)
class StateVector:
    """Element of the truncated H0, stored as spectral coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1:
            raise ValueError("StateVector coefficients must be one-dimensional")
        if not np.all(np.isfinite(c)):
            raise ValueError("StateVector has non-finite entries")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def __len__(self) -> int:
        return self.coeffs.size


@dataclass(frozen=True)
class BoundaryDatum:
    """Flux values (g_0, g_pi) on the two boundary points."""

    values: tuple

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != 2 or not np.all(np.isfinite(v)):
            raise ValueError("BoundaryDatum needs two finite values")
        object.__setattr__(self, "values", (float(v[0]), float(v[1])))

    def as_array(self) -> np.ndarray:
        return np.array(self.values)


@dataclass(frozen=True)
class SpectralModel:
    n_modes: int
    eigenvalues: np.ndarray
    mu: float
    beta: float
    p_star: float
    q_star: float
    omega_A: float
    boundary_coupling: np.ndarray  # (n_modes, 2): traces at x = 0 and x = pi
    frac_norm: float
    reg_shift: float = 0.0
    canonical: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def drift(self) -> np.ndarray:
        """Per-mode growth rates a_k = mu - lambda_k."""
        return self.mu - self.eigenvalues

    @property
    def dissipative(self) -> np.ndarray:
        return self.drift < 0.0

    @property
    def n_channels(self) -> int:
        return self.boundary_coupling.shape[1]

    def state(self, coeffs) -> StateVector:
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.n_modes,):
            raise ValueError(f"expected {self.n_modes} coefficients, got shape {c.shape}")
        return StateVector(c)

    def zero(self) -> StateVector:
        return StateVector(np.zeros(self.n_modes))

    def basis(self, k: int) -> StateVector:
        e = np.zeros(self.n_modes)
        e[k] = 1.0
        return StateVector(e)


# ---------------------------------------------------------------------------
# construction


def neumann_traces(n_modes: int) -> np.ndarray:
    """Values of the normalized cosine modes at x = 0 and x = pi."""
    k = np.arange(n_modes)
    at0 = np.where(k == 0, 1.0 / math.sqrt(math.pi), math.sqrt(2.0 / math.pi))
    atpi = at0 * np.where(k % 2 == 0, 1.0, -1.0)
    return np.stack([at0, atpi], axis=1)


def _validate_constants(beta: float, q_star: float, p_star: float = P_STAR) -> None:
    lo = 1.0 - 1.0 / p_star
    if not (lo < beta < 1.0):
        raise ValueError(f"beta={beta} outside ({lo:g}, 1)")
    if not (1.0 <= q_star < 1.0 / (1.0 - 1.0 / p_star)):
        raise ValueError(f"q_star={q_star} outside [1, {1.0 / (1.0 - 1.0 / p_star):g})")
    if q_star * beta >= 1.0:
        raise ValueError(f"q_star*beta = {q_star * beta:g} >= 1, kernel not integrable")


def make_model(
    eigenvalues,
    mu: float,
    beta: float = 0.5,
    q_star: float = 1.0,
    coupling=None,
    reg_shift: float = 0.0,
    canonical: bool = False,
    check_constants: bool = True,
) -> SpectralModel:
    """Model from an explicit nondecreasing spectrum (synthetic spectra included)."""
    lam = np.array(eigenvalues, dtype=float).reshape(-1)
    if lam.size < 1 or not np.all(np.isfinite(lam)):
        raise ValueError("eigenvalues must be a finite non-empty vector")
    if np.any(np.diff(lam) < 0):
        raise ValueError("eigenvalues must be nondecreasing")
    if not math.isfinite(mu):
        raise ValueError("mu must be finite")
    if check_constants:
        _validate_constants(beta, q_star)
    n = lam.size
    cpl = neumann_traces(n) if coupling is None else np.array(coupling, dtype=float)
    if cpl.shape[0] != n:
        raise ValueError("coupling must have one row per mode")
    lam.setflags(write=False)
    cpl.setflags(write=False)
    omega = float(mu - lam.min())
    kc = kernel_constant_raw(lam, mu, cpl, beta, 1.0)
    return SpectralModel(
        n_modes=n,
        eigenvalues=lam,
        mu=float(mu),
        beta=float(beta),
        p_star=P_STAR,
        q_star=float(q_star),
        omega_A=omega,
        boundary_coupling=cpl,
        frac_norm=kc,
        reg_shift=float(reg_shift),
        canonical=canonical,
    )


def build_model(n_modes: int, mu: float, beta: float, q_star: float, reg_shift: float = 0.0) -> SpectralModel:
    """Canonical Neumann model with lambda_k = k^2 + reg_shift."""
    if int(n_modes) != n_modes or n_modes < 2:
        raise ValueError("n_modes must be an integer >= 2")
    if reg_shift < 0 or not math.isfinite(reg_shift):
        raise ValueError("reg_shift must be finite and non-negative")
    lam = np.arange(int(n_modes), dtype=float) ** 2 + reg_shift
    return make_model(lam, mu, beta, q_star, reg_shift=reg_shift, canonical=True)


def model_summary(model: SpectralModel) -> dict:
    return {
        "n_modes": model.n_modes,
        "mu": model.mu,
        "beta": model.beta,
        "p_star": model.p_star,
        "q_star": model.q_star,
        "reg_shift": model.reg_shift,
        "omega_A": model.omega_A,
        "frac_norm": model.frac_norm,
        "eigenvalues": [float(x) for x in model.eigenvalues],
        "boundary_coupling": [[float(x) for x in row] for row in model.boundary_coupling],
    }


def model_summary_json(model: SpectralModel) -> str:
    return json.dumps(model_summary(model), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# exponential helpers


def phi1(z):
    """(e^z - 1)/z with the removable singularity filled."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = np.expm1(z[nz]) / z[nz]
    return out


def phi2(z):
    """(e^z - 1 - z)/z^2, series near zero."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-2
    zs = z[small]
    out[small] = 0.5 + zs / 6.0 + zs**2 / 24.0 + zs**3 / 120.0 + zs**4 / 720.0
    zb = z[~small]
    out[~small] = (np.expm1(zb) - zb) / zb**2
    return out


# ---------------------------------------------------------------------------
# operators


def _coeffs(v) -> np.ndarray:
    return v.coeffs if isinstance(v, StateVector) else np.asarray(v, dtype=float)


def semigroup_apply(model: SpectralModel, t: float, v) -> StateVector:
    if t < 0:
        raise ValueError("semigroup time must be non-negative")
    return StateVector(np.exp(model.drift * t) * _coeffs(v))


def semigroup_norm(model: SpectralModel, t: float) -> float:
    return float(np.exp(model.drift * t).max())


def fractional_scale(model: SpectralModel, exponent: float, v) -> StateVector:
    """Multiply mode k by (lambda_k - mu)^exponent."""
    base = model.eigenvalues - model.mu
    c = _coeffs(v)
    if exponent == 0:
        return StateVector(c.copy())
    if exponent < 0 and np.any(base <= 0):
        bad = np.flatnonzero(base <= 0).tolist()
        raise SingularOperatorError(
            "(-A0 + mu) is not invertible on the truncated space", modes=bad, exponent=exponent
        )
    if float(exponent) != int(exponent) and np.any(base < 0):
        raise SingularOperatorError("non-integer power of an operator with negative spectrum", exponent=exponent)
    return StateVector(np.power(base, exponent) * c)


def coupling_apply(model: SpectralModel, b) -> np.ndarray:
    bb = b.as_array() if isinstance(b, BoundaryDatum) else np.asarray(b, dtype=float)
    return model.boundary_coupling @ bb


def isg_kernel_apply(model: SpectralModel, t: float, b) -> StateVector:
    """Boundary-to-interior response of the integrated-semigroup derivative at time t."""
    if not t > 0:
        raise ValueError("kernel is singular at t = 0; need t > 0")
    return StateVector(coupling_apply(model, b) * np.exp(model.drift * t))


def kernel_norms(model: SpectralModel, t) -> np.ndarray:
    """Operator norm of the boundary kernel (R^2 -> modes) at each time in t."""
    return _kernel_norms_raw(model.drift, model.boundary_coupling, np.asarray(t, dtype=float))


def _kernel_norms_raw(drift, coupling, t) -> np.ndarray:
    t = np.atleast_1d(t)
    w = np.exp(2.0 * np.outer(t, drift))  # (T, N)
    c0, c1 = coupling[:, 0], coupling[:, -1]
    if coupling.shape[1] == 1:
        return np.sqrt(w @ (c0 * c0))
    a = w @ (c0 * c0)
    d = w @ (c1 * c1)
    off = w @ (c0 * c1)
    lam_max = 0.5 * (a + d) + np.sqrt(0.25 * (a - d) ** 2 + off**2)
    return np.sqrt(lam_max)


def kernel_constant_raw(eigenvalues, mu, coupling, beta, horizon: float) -> float:
    """Smallest C with ||kernel(t)|| <= C t^-beta e^{omega t} and e^{omega t} <= C t^-beta e^{omega t} on (0, horizon].

    The second condition covers interior forcing, whose kernel is the plain
    semigroup.  This is the computable stand-in for M_beta ||(-A)^-beta||.
    """
    drift = mu - np.asarray(eigenvalues)
    omega = float(drift.max())

    def f(logt):
        t = np.exp(logt)
        return float(_kernel_norms_raw(drift, coupling, np.array([t]))[0] * t**beta * np.exp(-omega * t))

    grid = np.linspace(math.log(horizon) - 30.0, math.log(horizon), 3001)
    vals = np.array([f(x) for x in grid])
    i = int(vals.argmax())
    best = vals[i]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -f(x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        best = max(best, -res.fun)
    return float(max(best, horizon**beta))


def kernel_constant(model: SpectralModel, horizon: float = 1.0) -> float:
    if horizon == 1.0:
        return model.frac_norm
    return kernel_constant_raw(model.eigenvalues, model.mu, model.boundary_coupling, model.beta, horizon)


def integrated_semigroup(model: SpectralModel, t: float, nu: float, x, boundary=None) -> StateVector:
    """S(t)x = nu int_0^t T(s) R(nu, A) x ds + [I - T(t)] R(nu, A) x.

    ``boundary`` optionally adds a flux datum, i.e. evaluates S(t) on (b, x).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if not nu > model.omega_A:
        raise ValueError(f"nu={nu} must exceed omega_A={model.omega_A}")
    a = model.drift
    c = np.array(_coeffs(x), dtype=float)
    if boundary is not None:
        c = c + coupling_apply(model, boundary)
    res = c / (nu - a)
    integral = t * phi1(a * t)  # int_0^t e^{a s} ds
    return StateVector(nu * integral * res + (1.0 - np.exp(a * t)) * res)


# ---------------------------------------------------------------------------
# quadrature


def gauss_legendre_panels(edges, order: int = 16):
    """Composite Gauss-Legendre nodes and weights over consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    x, w = roots_legendre(order)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + half * (x[None, :] + 1.0)).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def graded_rule(tau: float, n_panels: int = 32, order: int = 16, grading: float = 4.0):
    """Panels clustered at t = 0 as tau (i/n)^grading, for weakly singular integrands."""
    edges = tau * (np.arange(n_panels + 1) / n_panels) ** grading
    return gauss_legendre_panels(edges, order)


def geometric_rule(h0: float, t_max: float, order: int = 16, ratio: float = 2.0):
    """Panels [0,h0], [h0, ratio h0], ... up to t_max; for integrals over many decay scales."""
    edges = [0.0, h0]
    while edges[-1] < t_max:
        edges.append(edges[-1] * ratio)
    return gauss_legendre_panels(edges, order)


# ---------------------------------------------------------------------------
# resolvent diagnostics


def resolvent_scaling_report(model: SpectralModel, lambda_grid) -> dict:
    """Resolvent norms on boundary inputs from the Laplace transform of the kernel.

    The transform int_0^inf e^{-lambda t} kernel(t) dt is evaluated by
    quadrature; the closed form n_k / (lambda - a_k) is reported alongside.
    """
    lam = np.asarray(lambda_grid, dtype=float)
    if lam.ndim != 1 or lam.size < 2 or np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise ValueError("lambda grid must be positive and strictly increasing")
    if np.any(lam <= model.omega_A):
        raise ValueError("lambda grid must lie above omega_A")
    a = model.drift
    quad_norms, closed_norms = [], []
    for lv in lam:
        rates = lv - a  # decay rate of each mode's integrand
        nodes, weights = geometric_rule(0.02 / rates.max(), 60.0 / rates.min())
        transform = np.exp(-np.outer(rates, nodes)) @ weights  # (N,)
        m_quad = model.boundary_coupling * transform[:, None]
        m_closed = model.boundary_coupling / rates[:, None]
        quad_norms.append(np.linalg.norm(m_quad, 2))
        closed_norms.append(np.linalg.norm(m_closed, 2))
    quad_norms = np.array(quad_norms)
    slope = np.polyfit(np.log(lam), np.log(quad_norms), 1)[0]
    return {
        "lambda": lam,
        "norms": quad_norms,
        "norms_closed": np.array(closed_norms),
        "diag_norms": 1.0 / (lam - model.omega_A),
        "fitted_exponent": float(-slope),
        "expected_exponent": 1.0 - model.beta,
        "sectorial_exponent": 1.0 / model.p_star,
        "monotone_tail": bool(np.all(np.diff(quad_norms) < 0)),
    }
