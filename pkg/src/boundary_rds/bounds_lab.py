"""Numerical certification of the explicit inequalities behind the cocycle bounds.

Everything weakly singular is integrated exactly against piecewise-linear
data: on a panel [s_j, s_{j+1}] the integral of (t-s)^{nu-1} times a linear
function has a closed form, so the only approximation is the interpolation of
the data.  Series kernels sum_n c^n/Gamma(n gamma) (t-s)^{n gamma - 1} are
summed term by term in log space until the tail falls below 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import gammainc, gammaln, logsumexp

from .cocycle_solver import propagate
from .errors import DivergentIntegral
from .noise_shift import ou_series, required_window, sample_path, spawn_seeds
from .nonlinearity import Nonlinearity
from .spectral_core import SpectralModel, gauss_legendre_panels, graded_rule, kernel_norms
from .variational import jacobian_along

__all__ = [
    "GronwallInstance",
    "Inequality",
    "powered_gronwall_bound",
    "log_powered_gronwall_bound",
    "series_weights",
    "series_sum",
    "log_series_sum",
    "r_alpha",
    "log_r_alpha",
    "series_r_grid",
    "mittag_leffler",
    "apriori_bound_check",
    "derivative_growth_bound",
    "difference_bound_check",
    "holder_derivative_check",
    "kernel_integrability_check",
    "divergence_trend",
    "trace_class_sum",
    "trace_class_diagnostic",
    "canonical_spectrum",
    "planar_spectrum",
    "certify_ensemble",
]

SERIES_TAIL = 1e-12
MAX_TERMS = 200_000


@dataclass(frozen=True, eq=False)
class GronwallInstance:
    """u(t) <= g(t) + kappa(t) int_0^t (t-s)^{-beta} u(s) ds on the sampled grid."""

    beta: float
    kappa: np.ndarray
    g: np.ndarray
    grid: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=float)
        g = np.asarray(self.g, dtype=float)
        t = np.asarray(self.grid, dtype=float)
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("grid must start at 0 and increase strictly")
        if k.shape != t.shape or g.shape != t.shape:
            raise ValueError("kappa and g must be sampled on the grid")
        if not np.all(np.isfinite(g)) or not np.all(np.isfinite(k)):
            raise ValueError("kappa and g must be finite")
        if np.any(k <= 0) or np.any(np.diff(k) < 0):
            raise ValueError("kappa must be positive and nondecreasing")
        for name, arr in (("kappa", k), ("g", g), ("grid", t)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass
class Inequality:
    """One checked instance lhs <= rhs; unpacks as (lhs, rhs, passed)."""

    name: str
    lhs: float
    rhs: float
    passed: bool
    details: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.passed))

    def to_json(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "pass": self.passed, **self.details}


# ---------------------------------------------------------------------------
# product integration against (t - s)^{nu - 1}


def _scaled_panel_weights(grid: np.ndarray, i: int, nu: np.ndarray) -> np.ndarray:
    """Weights w (len(nu), i+1) with int_0^{t_i} (t_i-s)^{nu-1} f ds = t_i^nu * (w @ f) for piecewise-linear f."""
    t = grid[i]
    A = (t - grid[:i]) / t
    B = (t - grid[1 : i + 1]) / t
    h = A - B
    nu = np.asarray(nu, dtype=float)[:, None]
    I0 = (A**nu - B**nu) / nu
    I1 = (A ** (nu + 1) - B ** (nu + 1)) / (nu + 1)
    left = (I1 - B * I0) / h
    right = (A * I0 - I1) / h
    w = np.zeros((nu.shape[0], i + 1))
    w[:, :i] += left
    w[:, 1:] += right
    return w


def _kernel_matrix(grid: np.ndarray, nu: float) -> np.ndarray:
    """Lower-triangular W with (W f)_i = int_0^{t_i} (t_i-s)^{nu-1} f(s) ds."""
    n = grid.size
    W = np.zeros((n, n))
    for i in range(1, n):
        W[i, : i + 1] = _scaled_panel_weights(grid, i, np.array([nu]))[0] * grid[i] ** nu
    return W


def series_weights(beta: float, c: float, grid: np.ndarray, i: int, tail: float = SERIES_TAIL):
    """(w, log_scale) with int_0^{t_i} sum_n (c Gamma(1-beta))^n/Gamma(n(1-beta)) (t_i-s)^{n(1-beta)-1} f ds = e^{log_scale} w @ f.

    Terms are bounded by their value for f = 1, so the truncation holds
    relative to max |f|.
    """
    gam = 1.0 - beta
    if i == 0:
        return np.zeros(1), 0.0
    if c == 0:
        return np.zeros(i + 1), 0.0
    log_t = math.log(grid[i])
    log_base = math.log(c * gamma_fn(gam)) + gam * log_t
    logs, blocks = [], []
    n0, step = 1, 32
    total = -math.inf
    while True:
        n = np.arange(n0, n0 + step, dtype=float)
        lc = n * log_base - gammaln(n * gam)
        bound = lc - np.log(n * gam)  # log of the term for f = 1
        logs.append(lc)
        blocks.append(_scaled_panel_weights(grid, i, n * gam))
        total = np.logaddexp(total, logsumexp(bound))
        past_peak = bound[-1] < bound[-2]
        if past_peak and bound[-1] < total + math.log(tail) - 5.0:
            break
        n0 += step
        if n0 > MAX_TERMS:
            raise DivergentIntegral("series kernel did not converge", terms=n0)
    lc = np.concatenate(logs)
    W = np.vstack(blocks)
    scale = float(lc.max())
    w = np.exp(lc - scale) @ W
    return w, scale


def log_powered_gronwall_bound(inst: GronwallInstance) -> np.ndarray:
    """log of g(t) + int_0^t sum_n [kappa(t) Gamma(1-beta)]^n/Gamma(n(1-beta)) (t-s)^{n(1-beta)-1} g(s) ds."""
    t = inst.grid
    g = np.maximum(inst.g, 0.0)
    out = np.empty(t.size)
    with np.errstate(divide="ignore"):
        out[0] = math.log(g[0]) if g[0] > 0 else -math.inf
        for i in range(1, t.size):
            w, scale = series_weights(inst.beta, float(inst.kappa[i]), t, i)
            conv = float(w @ g[: i + 1])
            lc = scale + math.log(conv) if conv > 0 else -math.inf
            lg = math.log(g[i]) if g[i] > 0 else -math.inf
            out[i] = np.logaddexp(lg, lc)
    return out


def powered_gronwall_bound(inst: GronwallInstance) -> np.ndarray:
    if np.any(inst.g < 0):
        raise ValueError("g must be non-negative")
    out = np.exp(log_powered_gronwall_bound(inst))
    out[0] = inst.g[0]  # no integral at t = 0; avoid the log round trip
    return out


# ---------------------------------------------------------------------------
# the series sum and its majorant R(alpha)


def log_series_sum(alpha: float, beta: float, tail: float = 1e-14) -> float:
    """log sum_{n>=1} alpha^{n-1}/Gamma(n(1-beta)), summed until the geometric tail bound is below tail."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    gam = 1.0 - beta
    la = math.log(alpha)
    total = -math.inf
    prev = None
    n = 1
    while True:
        lt = (n - 1) * la - float(gammaln(n * gam))
        total = np.logaddexp(total, lt)
        if prev is not None and n * gam >= 2.0:
            r = math.exp(lt - prev)
            if r < 1.0 and lt + math.log(r / (1.0 - r)) < total + math.log(tail):
                return float(total)
        prev = lt
        n += 1
        if n > MAX_TERMS:
            raise DivergentIntegral("series did not converge", alpha=alpha, beta=beta)


def series_sum(alpha: float, beta: float, tail: float = 1e-14) -> float:
    return math.exp(log_series_sum(alpha, beta, tail))


def log_r_alpha(alpha: float, beta: float) -> float:
    if not alpha >= 1.0:
        raise ValueError("R(alpha) requires alpha >= 1")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    gam = 1.0 - beta
    la = math.log(alpha)
    first = math.log((beta + 1.0) / gam) + (1.0 + beta) / gam * la
    second = 2.0 / gam * la + math.exp(la / gam) - math.log(gam)
    return float(np.logaddexp(first, second))


def r_alpha(alpha: float, beta: float) -> float:
    """(beta+1)/(1-beta) alpha^{(1+beta)/(1-beta)} + alpha^{2/(1-beta)} exp(alpha^{1/(1-beta)})/(1-beta)."""
    return math.exp(log_r_alpha(alpha, beta))


def series_r_grid(alphas: Sequence[float], betas: Sequence[float]) -> list:
    """Series against R(alpha) on a grid, compared in log space."""
    rows = []
    for a in alphas:
        for b in betas:
            ls, lr = log_series_sum(a, b), log_r_alpha(a, b)
            rows.append({"alpha": float(a), "beta": float(b), "log_series": ls, "log_R": lr, "pass": bool(ls <= lr)})
    return rows


def mittag_leffler(alpha: float, z: float, tail: float = 1e-16) -> float:
    """E_alpha(z) = sum z^n / Gamma(alpha n + 1) for z >= 0."""
    if z < 0:
        raise ValueError("only z >= 0 is supported")
    if z == 0:
        return 1.0
    lz = math.log(z)
    total, n, prev = 0.0, 0, -math.inf
    while True:
        lt = n * lz - float(gammaln(alpha * n + 1.0))
        total = np.logaddexp(total, lt) if n else lt
        if n > 2 and lt < prev and lt < total + math.log(tail):
            return math.exp(total)
        prev = lt
        n += 1
        if n > MAX_TERMS:
            raise DivergentIntegral("Mittag-Leffler series did not converge", z=z)


# ---------------------------------------------------------------------------
# section-4 style bounds on the cocycle


def _require_dissipative(model: SpectralModel, t_max: float) -> None:
    if model.omega_A >= 0:
        raise ValueError("the bounds need omega_A < 0")
    if t_max > 1.0 + 1e-12:
        raise ValueError("the kernel constant is certified on (0, 1]; use t <= 1")


class _BoundKernels:
    """Sample-independent quadrature matrices on the grid k*dt, k = 0..n."""

    def __init__(self, model: SpectralModel, nonlin: Nonlinearity, dt: float, n: int):
        self.t = np.arange(n + 1) * dt
        self.C = model.frac_norm
        self.omega = model.omega_A
        self.beta = model.beta
        self.W1 = _kernel_matrix(self.t, 1.0 - model.beta)
        k2 = nonlin.growth[1] * self.C
        S = np.zeros((n + 1, n + 1))
        for i in range(1, n + 1):
            w, scale = series_weights(model.beta, k2, self.t, i)
            S[i, : i + 1] = math.exp(scale) * w if k2 > 0 else 0.0
        self.S = S

    def apriori(self, nonlin: Nonlinearity, xi_norm: np.ndarray, y_norm: np.ndarray, ty0_norm: np.ndarray):
        """kappa(t), b(t) per sample; y_norm (B, n+1) = ||Y(t)||, ty0_norm = ||T0(t) Y(0)||."""
        k1, k2 = nonlin.growth
        e = np.exp(self.omega * self.t)
        einv = np.exp(-self.omega * self.t)
        forcing = einv[None] * (k1 + k2 * y_norm)
        a_b = ty0_norm + self.C * e[None] * (forcing @ self.W1.T)
        kappa = e + e * (self.S @ np.ones_like(self.t))
        b = y_norm + a_b + e[None] * ((einv[None] * a_b) @ self.S.T)
        return kappa, b


def _norms(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=-1)


def _ml_envelope(model: SpectralModel, P: np.ndarray, t: np.ndarray) -> np.ndarray:
    """e^{omega t} E_{1-beta}(C P Gamma(1-beta) t^{1-beta}) elementwise."""
    gam = 1.0 - model.beta
    z = model.frac_norm * P * gamma_fn(gam) * t**gam
    ml = np.vectorize(lambda v: mittag_leffler(gam, float(v)))(z)
    return np.exp(model.omega_A * t) * ml


def _run(model, nonlin, xi: np.ndarray, ou: np.ndarray, dt: float) -> np.ndarray:
    y0 = ou[:, 0] if ou.ndim == 3 else ou[0]
    _, hist, _ = propagate(model, nonlin, xi - y0, ou, dt, record=True)
    return hist + (ou if ou.ndim == 3 else ou[None])


def _grid_n(t: float, dt: float) -> int:
    n = int(round(t / dt))
    if n < 1 or abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError("t must be a positive multiple of dt")
    return n


def apriori_bound_check(model: SpectralModel, path, nonlin: Nonlinearity, xi, t: float) -> Inequality:
    """||phi^s(xi)|| <= kappa(s)||xi|| + b(s, omega) for every grid time s <= t; reports the tightest instance."""
    _require_dissipative(model, t)
    if nonlin.growth is None:
        raise ValueError("nonlinearity carries no linear-growth constants")
    dt = path.dt
    n = _grid_n(t, dt)
    xi = np.asarray(getattr(xi, "coeffs", xi), dtype=float)
    ou = ou_series(model, path, 0.0, n * dt)
    X = _run(model, nonlin, xi[None], ou, dt)[0]
    K = _BoundKernels(model, nonlin, dt, n)
    kappa, b = K.apriori(nonlin, np.array([np.linalg.norm(xi)]), _norms(ou)[None], _norms(np.exp(np.outer(K.t, model.drift)) * ou[0])[None])
    rhs = kappa * np.linalg.norm(xi) + b[0]
    lhs = _norms(X)
    j = int(np.argmin(rhs - lhs))
    return Inequality("apriori", float(lhs[j]), float(rhs[j]), bool(np.all(lhs <= rhs)), {"t": float(K.t[j]), "sup_b": float(b[0].max())})


def derivative_growth_bound(model: SpectralModel, path, nonlin: Nonlinearity, xi, t: float) -> Inequality:
    """||D phi^s(xi)|| <= e^{omega s} E_{1-beta}(C P(s) Gamma(1-beta) s^{1-beta}) for grid s <= t."""
    _require_dissipative(model, t)
    if nonlin.deriv_poly is None:
        raise ValueError("nonlinearity carries no derivative polynomial")
    dt = path.dt
    n = _grid_n(t, dt)
    xi = np.asarray(getattr(xi, "coeffs", xi), dtype=float)
    ou = ou_series(model, path, 0.0, n * dt)
    X = _run(model, nonlin, xi[None], ou, dt)
    _, hist = jacobian_along(model, nonlin, X, dt, record=True)
    lhs = np.linalg.norm(hist[0], 2, axis=(-2, -1))
    P = np.maximum.accumulate(np.vectorize(nonlin.deriv_bound)(_norms(X[0])))
    times = np.arange(n + 1) * dt
    rhs = _ml_envelope(model, P, times)
    ok = lhs <= rhs * (1 + 1e-10)
    j = int(np.argmin(rhs - lhs))
    return Inequality("derivative_growth", float(lhs[j]), float(rhs[j]), bool(ok.all()), {"t": float(times[j]), "P": float(P[-1])})


def difference_bound_check(model: SpectralModel, path, nonlin: Nonlinearity, xi1, xi2, t: float, n_theta: int = 11) -> Inequality:
    """||phi^s(xi2) - phi^s(xi1)|| <= Gamma~(s) ||xi2 - xi1||, P~ sampled on n_theta segment points."""
    _require_dissipative(model, t)
    dt = path.dt
    n = _grid_n(t, dt)
    x1 = np.asarray(getattr(xi1, "coeffs", xi1), dtype=float)
    x2 = np.asarray(getattr(xi2, "coeffs", xi2), dtype=float)
    th = np.linspace(0.0, 1.0, n_theta)
    starts = th[:, None] * x2[None] + (1.0 - th[:, None]) * x1[None]
    ou = ou_series(model, path, 0.0, n * dt)
    X = _run(model, nonlin, starts, ou, dt)
    sup_norm = _norms(X).max(axis=0)
    P = np.maximum.accumulate(np.vectorize(nonlin.deriv_bound)(sup_norm))
    times = np.arange(n + 1) * dt
    rhs = _ml_envelope(model, P, times) * np.linalg.norm(x2 - x1)
    lhs = _norms(X[-1] - X[0])
    ok = lhs <= rhs * (1 + 1e-10)
    j = int(np.argmin(rhs - lhs))
    return Inequality("difference", float(lhs[j]), float(rhs[j]), bool(ok.all()), {"t": float(times[j])})


def holder_derivative_check(model: SpectralModel, path, nonlin: Nonlinearity, xi1, xi2, t: float, n_sep: int = 4) -> dict:
    """Empirical Hoelder modulus of xi -> D_xi phi^s over shrinking separations along xi2 - xi1."""
    if nonlin.holder is None:
        raise ValueError("nonlinearity has no Hoelder data")
    r = float(nonlin.holder[0])
    if not 0.0 < r <= 1.0:
        raise ValueError("Hoelder exponent must lie in (0, 1]")
    dt = path.dt
    n = _grid_n(t, dt)
    x1 = np.asarray(getattr(xi1, "coeffs", xi1), dtype=float)
    x2 = np.asarray(getattr(xi2, "coeffs", xi2), dtype=float)
    d = x2 - x1
    dist = float(np.linalg.norm(d))
    if dist == 0.0:
        return {"ratio": 0.0, "ratios": [0.0], "separations": [0.0], "slope": 0.0, "pass": True}
    seps = dist * 10.0 ** (-np.arange(n_sep))
    starts = np.concatenate([x1[None], x1[None] + (seps / dist)[:, None] * d[None]])
    ou = ou_series(model, path, 0.0, n * dt)
    X = _run(model, nonlin, starts, ou, dt)
    _, hist = jacobian_along(model, nonlin, X, dt, record=True)
    diff = np.linalg.norm(hist[1:] - hist[:1], 2, axis=(-2, -1)).max(axis=1)
    ratios = diff / seps**r
    if np.all(ratios == 0):
        slope = 0.0
    else:
        keep = ratios > 0
        slope = float(np.polyfit(np.log(seps[keep]), np.log(ratios[keep]), 1)[0]) if keep.sum() >= 2 else 0.0
    finite = bool(np.all(np.isfinite(ratios)))
    return {
        "ratio": float(ratios.max()),
        "ratios": ratios.tolist(),
        "separations": seps.tolist(),
        "slope": slope,
        "pass": finite and slope >= -0.05,
    }


# ---------------------------------------------------------------------------
# kernel integrability and the trace-class remark


def _majorant_integral(model: SpectralModel, q_star: float, lo: float, hi: float) -> float:
    """int_lo^hi (C t^{-beta} e^{omega t})^{q*} dt, closed form through the incomplete gamma function."""
    s = 1.0 - q_star * model.beta
    lam = -q_star * model.omega_A
    C = model.frac_norm**q_star
    if s > 0 and lam > 0:
        F = lambda x: lam**-s * gamma_fn(s) * gammainc(s, lam * x)
        return float(C * (F(hi) - F(lo)))
    if lo <= 0:
        raise DivergentIntegral("majorant integral diverges at 0", q_star_beta=q_star * model.beta)
    # geometric panels resolve the steep end at lo
    x, w = gauss_legendre_panels(np.geomspace(lo, hi, 200), 16)
    return float(C * np.sum(w * x ** (-q_star * model.beta) * np.exp(q_star * model.omega_A * x)))


def kernel_integrability_check(model: SpectralModel, q_star: float, tau: float, n_panels: int = 32) -> dict:
    """int_0^tau ||kernel(t)||^{q*} dt with its refinement error; q* beta >= 1 is declared divergent."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if q_star * model.beta >= 1.0:
        trend = divergence_trend(model, q_star, max(tau, 1e-300) if tau > 0 else 1.0)
        raise DivergentIntegral("q* beta >= 1: the kernel majorant is not integrable at 0", q_star_beta=q_star * model.beta, trend=trend["majorant"])
    if tau == 0:
        return {"integral": 0.0, "refined": 0.0, "refinement_error": 0.0, "finite": True, "majorant": 0.0}

    def integral(panels):
        x, w = graded_rule(tau, panels, 16, 4.0)
        return float(np.sum(w * kernel_norms(model, x) ** q_star))

    coarse, fine = integral(n_panels), integral(2 * n_panels)
    err = abs(fine - coarse) / max(abs(fine), 1e-300)
    return {
        "integral": fine,
        "refined": coarse,
        "refinement_error": err,
        "finite": bool(np.isfinite(fine) and err < 1e-6),
        "majorant": _majorant_integral(model, q_star, 0.0, tau),
    }


def divergence_trend(model: SpectralModel, q_star: float, tau: float, deltas: Optional[Sequence[float]] = None) -> dict:
    """int_delta^tau of the kernel majorant and of the kernel itself as delta -> 0."""
    if deltas is None:
        deltas = tau * 10.0 ** -np.arange(1, 9)
    deltas = np.asarray(deltas, dtype=float)
    if q_star * model.beta >= 1:
        maj = np.array([_majorant_integral(model, q_star, float(d), tau) for d in deltas])
    else:
        full = _majorant_integral(model, q_star, 0.0, tau)
        maj = np.array([full - _majorant_integral(model, q_star, 0.0, float(d)) for d in deltas])
    actual = []
    for d in deltas:
        x, w = gauss_legendre_panels(np.geomspace(d, tau, 100), 16)
        actual.append(float(np.sum(w * kernel_norms(model, x) ** q_star)))
    inc = np.diff(maj)
    ratios = inc[1:] / inc[:-1]
    return {
        "deltas": deltas.tolist(),
        "majorant": maj.tolist(),
        "kernel": actual,
        "increment_ratios": ratios.tolist(),
        "diverging": bool(np.all(inc > 0) and np.all(ratios >= 1.0)),
    }


def trace_class_sum(eigenvalues, tau: float) -> float:
    """sum_k (1 - e^{-2 lambda_k tau})/(2 lambda_k), with the lambda = 0 term equal to tau."""
    lam = np.asarray(eigenvalues, dtype=float)
    terms = np.where(lam > 0, -np.expm1(-2.0 * np.where(lam > 0, lam, 1.0) * tau) / (2.0 * np.where(lam > 0, lam, 1.0)), tau)
    return float(np.sum(terms))


def canonical_spectrum(n: int) -> np.ndarray:
    return np.arange(n, dtype=float) ** 2


def planar_spectrum(n: int, c: float = 1.0) -> np.ndarray:
    """Synthetic two-dimensional Weyl-law spectrum lambda_k = c k."""
    return c * np.arange(n, dtype=float)


def trace_class_diagnostic(spectrum: Callable[[int], np.ndarray], tau: float, sizes: Sequence[int] = (64, 128, 256, 512, 1024, 2048, 4096)) -> dict:
    """Partial sums under N-doubling; convergent when successive increments shrink by a factor below 0.75."""
    sizes = list(sizes)
    sums = np.array([trace_class_sum(spectrum(n), tau) for n in sizes])
    inc = np.diff(sums)
    ratios = inc[1:] / inc[:-1]
    return {
        "sizes": sizes,
        "partial_sums": sums.tolist(),
        "increments": inc.tolist(),
        "ratios": ratios.tolist(),
        "converges": bool(np.all(ratios[-2:] < 0.75)),
    }


# ---------------------------------------------------------------------------
# ensemble certification


def _lp_norms(v: np.ndarray, ps) -> dict:
    return {str(p): float(np.mean(np.abs(v) ** p) ** (1.0 / p)) for p in ps}


def certify_ensemble(
    model: SpectralModel,
    nonlin: Nonlinearity,
    n_samples: int = 1000,
    t_max: float = 1.0,
    dt: float = 0.01,
    q=1.0,
    seed: int = 0,
    xi_scale: float = 2.0,
    ps: Sequence[int] = (1, 2, 4, 8),
    n_theta: int = 5,
) -> dict:
    """A priori, derivative-growth and difference bounds on an ensemble of independent paths.

    Every sample gets its own path and initial data from a spawned seed.  The
    L^p norms of sup_{t <= t_max} b(t, .) are reported on both halves of the
    ensemble; stability means the halves agree to 20%.
    """
    _require_dissipative(model, t_max)
    n = _grid_n(t_max, dt)
    window = math.ceil(required_window(model, 1e-10) / dt) * dt
    seeds = spawn_seeds(seed, n_samples)
    N = model.n_modes
    Y = np.empty((n_samples, n + 1, N))
    xi1 = np.empty((n_samples, N))
    xi2 = np.empty((n_samples, N))
    for i, s in enumerate(seeds):
        path = sample_path(model, dt, -window, n * dt, q, s)
        Y[i] = ou_series(model, path, 0.0, n * dt)
        rng = np.random.Generator(np.random.PCG64(s))
        d = rng.standard_normal(N)
        xi1[i] = d / np.linalg.norm(d) * xi_scale * rng.uniform()
        e = rng.standard_normal(N)
        xi2[i] = xi1[i] + e / np.linalg.norm(e) * 0.5 * rng.uniform()
    K = _BoundKernels(model, nonlin, dt, n)
    times = K.t

    # a priori bound
    X = _run(model, nonlin, xi1, Y, dt)
    decay = np.exp(np.outer(times, model.drift))
    kappa, b = K.apriori(nonlin, _norms(xi1), _norms(Y), _norms(decay[None] * Y[:, :1]))
    rhs_a = kappa[None] * _norms(xi1)[:, None] + b
    lhs_a = _norms(X)

    # derivative growth along the same orbits
    _, hist = jacobian_along(model, nonlin, X, dt, record=True)
    lhs_d = np.linalg.norm(hist, 2, axis=(-2, -1))
    poly = np.vectorize(nonlin.deriv_bound)
    P = np.maximum.accumulate(poly(lhs_a), axis=1)
    rhs_d = np.stack([_ml_envelope(model, P[i], times) for i in range(n_samples)])

    # difference bound on segments xi1 -> xi2
    th = np.linspace(0.0, 1.0, n_theta)
    sup_seg = np.zeros((n_samples, n + 1))
    ends = []
    for tv in th:
        Xt = _run(model, nonlin, tv * xi2 + (1 - tv) * xi1, Y, dt)
        sup_seg = np.maximum(sup_seg, _norms(Xt))
        if tv in (0.0, 1.0):
            ends.append(Xt)
    Pt = np.maximum.accumulate(poly(sup_seg), axis=1)
    rhs_f = np.stack([_ml_envelope(model, Pt[i], times) for i in range(n_samples)]) * _norms(xi2 - xi1)[:, None]
    lhs_f = _norms(ends[1] - ends[0])

    tol = 1 + 1e-10
    instances = []
    counts = {}
    for name, lhs, rhs, slack in (("apriori", lhs_a, rhs_a, 1.0), ("derivative_growth", lhs_d, rhs_d, tol), ("difference", lhs_f, rhs_f, tol)):
        ok = np.all(lhs <= rhs * slack, axis=1)
        j = np.argmin(rhs - lhs, axis=1)
        counts[name] = {"instances": n_samples, "violations": int((~ok).sum())}
        for i in range(n_samples):
            instances.append(Inequality(name, float(lhs[i, j[i]]), float(rhs[i, j[i]]), bool(ok[i]), {"sample": i, "t": float(times[j[i]])}).to_json())

    sup_b = b.max(axis=1)
    half = n_samples // 2
    first, second = _lp_norms(sup_b[:half], ps), _lp_norms(sup_b[half:], ps)
    full = _lp_norms(sup_b, ps)
    disc = {p: abs(first[p] - second[p]) / full[p] for p in full}
    lp = {
        "full": full,
        "first_half": first,
        "second_half": second,
        "relative_discrepancy": disc,
        "finite": bool(np.all(np.isfinite(list(full.values())))),
        "stable": bool(all(v < 0.2 for v in disc.values())),
    }
    failures = sum(c["violations"] for c in counts.values())
    return {
        "n_samples": n_samples,
        "t_max": t_max,
        "dt": dt,
        "seed": seed,
        "counts": counts,
        "failures": failures,
        "lp_sup_b": lp,
        "instances": instances,
    }
