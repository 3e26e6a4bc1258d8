"""Random PDE for V = X - Y, the nonlinear cocycle and the linear cocycle.

V solves V' = A V + g(V + Y_{theta_t omega}(0)) with V(0) = xi - Y_omega(0).
Each grid step uses the exponential trapezoid rule

    V_{n+1} = e^{a dt} V_n + dt (phi1 - phi2) G_n + dt phi2 G_{n+1},
    G_n = g(V_n + Y_n),

which propagates the linear part exactly and is solved for V_{n+1} by Picard
iteration.  The state is X_n = V_n + Y_n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonError, StepSizeError
from .noise_shift import PathLike, node_index, ou_series, shift
from .nonlinearity import Nonlinearity
from .spectral_core import SpectralModel, StateVector, phi1, phi2

PICARD_TOL = 1e-10
PICARD_MAX_ITER = 50


@dataclass(frozen=True)
class StepWeights:
    decay: np.ndarray  # e^{a dt}
    w_old: np.ndarray  # dt (phi1 - phi2)
    w_new: np.ndarray  # dt phi2


def step_weights(model: SpectralModel, dt: float) -> StepWeights:
    z = model.drift * dt
    p1, p2 = phi1(z), phi2(z)
    return StepWeights(np.exp(z), dt * (p1 - p2), dt * p2)


def picard_factor(model: SpectralModel, nonlin: Nonlinearity, dt: float) -> float:
    """Contraction factor of the implicit stage: L * max_k dt phi2(a_k dt)."""
    return float(nonlin.lipschitz * np.abs(step_weights(model, dt).w_new).max())


def c_tau_surrogate(model: SpectralModel, tau: float) -> float:
    """M_beta ||(-A)^-beta|| tau^{1-beta} / (1-beta), reported for comparison only."""
    return model.frac_norm * tau ** (1.0 - model.beta) / (1.0 - model.beta)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # V on the grid, (n+1, N)
    ou: np.ndarray  # Y on the grid, (n+1, N)
    meta: dict = field(default_factory=dict)

    @property
    def X(self) -> np.ndarray:
        return self.states + self.ou

    def state_vectors(self) -> list[StateVector]:
        return [StateVector(v) for v in self.states]


def propagate(
    model: SpectralModel,
    nonlin: Nonlinearity,
    v0: np.ndarray,
    ou: np.ndarray,
    dt: float,
    record: bool = False,
    tol: float = PICARD_TOL,
    max_iter: int = PICARD_MAX_ITER,
):
    """Advance a batch of V states.

    v0 has shape (B, N); ou has shape (B, n+1, N) or (n+1, N) (shared).
    Returns the final V (B, N), the recorded V history (B, n+1, N) or None,
    and solver statistics.
    """
    v = np.array(v0, dtype=float)
    if v.ndim == 1:
        v = v[None, :]
    ou = np.asarray(ou, dtype=float)
    steps = ou.shape[-2] - 1
    shared = ou.ndim == 2
    hist = np.empty((v.shape[0], steps + 1, v.shape[1])) if record else None
    if record:
        hist[:, 0] = v
    stats = {"steps": steps, "picard_max": 0, "picard_total": 0, "max_update": 0.0}
    if steps == 0:
        return v, hist, stats

    w = step_weights(model, dt)
    if nonlin.is_zero:
        n = np.arange(steps + 1)[:, None] * dt
        growth = np.exp(model.drift[None, :] * n)  # (n+1, N)
        if record:
            hist[:] = v[:, None, :] * growth[None]
        return v * growth[-1], hist, stats

    factor = picard_factor(model, nonlin, dt)
    stats["picard_factor"] = factor
    if factor >= 1.0:
        raise StepSizeError(
            "implicit stage is not a contraction at the grid step", factor=factor, dt=dt
        )

    def y_at(n):
        return ou[n] if shared else ou[:, n]

    g0 = nonlin.apply(v + y_at(0))
    for n in range(steps):
        base = w.decay * v + w.w_old * g0
        y1 = y_at(n + 1)
        v_new = base + w.w_new * g0  # explicit exponential Euler predictor
        if nonlin.is_affine and nonlin.linear_coeff is None:
            it = 1
            v_new = base + w.w_new * nonlin.apply(v_new + y1)
        else:
            for it in range(1, max_iter + 1):
                cand = base + w.w_new * nonlin.apply(v_new + y1)
                upd = float(np.abs(cand - v_new).max())
                v_new = cand
                if upd <= tol * (1.0 + float(np.abs(cand).max())):
                    break
            else:
                raise StepSizeError("Picard iteration did not converge", step=n, update=upd)
            stats["max_update"] = max(stats["max_update"], upd)
        stats["picard_max"] = max(stats["picard_max"], it)
        stats["picard_total"] += it
        v = v_new
        g0 = nonlin.apply(v + y1)
        if record:
            hist[:, n + 1] = v
    return v, hist, stats


def _steps(path: PathLike, t: float) -> int:
    k = t / path.dt
    kr = round(k)
    if abs(k - kr) > 1e-9 * max(1.0, abs(k)):
        raise HorizonError(f"t={t} is not a grid multiple of dt={path.dt}")
    return int(kr)


def _coeffs(xi) -> np.ndarray:
    return np.array(xi.coeffs if isinstance(xi, StateVector) else xi, dtype=float)


def solve_random_pde(model: SpectralModel, path: PathLike, nonlin: Nonlinearity, xi, t_span) -> Trajectory:
    """Mild solution V on the grid of t_span = (t_start, t_end), started from xi - Y(t_start)."""
    t_start, t_end = t_span
    if t_end < t_start:
        raise ValueError("t_span must be increasing")
    j0, j1 = node_index(path, t_start), node_index(path, t_end)
    ou = ou_series(model, path, t_start, t_end)
    x0 = _coeffs(xi)
    if x0.shape != (model.n_modes,):
        raise ValueError("xi has the wrong dimension")
    v_end, hist, stats = propagate(model, nonlin, (x0 - ou[0])[None, :], ou, path.dt, record=True)
    times = t_start + np.arange(j1 - j0 + 1) * path.dt
    stats["c_tau_surrogate"] = c_tau_surrogate(model, path.dt)
    return Trajectory(times, hist[0], ou, stats)


def cocycle_apply(model: SpectralModel, path: PathLike, nonlin: Nonlinearity, t: float, xi) -> StateVector:
    """phi~^t_omega(xi) = V(t) + Y_{theta_t omega}(0)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    x0 = _coeffs(xi)
    n = _steps(path, t)
    if n == 0:
        node_index(path, 0.0)
        return StateVector(x0)
    ou = ou_series(model, path, 0.0, n * path.dt)
    v, _, _ = propagate(model, nonlin, (x0 - ou[0])[None, :], ou, path.dt)
    return StateVector(v[0] + ou[-1])


def cocycle_apply_batch(model: SpectralModel, nonlin: Nonlinearity, x0: np.ndarray, ou: np.ndarray, dt: float) -> np.ndarray:
    """Batch version on precomputed Y arrays: x0 (B, N), ou (B, n+1, N) or shared (n+1, N)."""
    y0 = ou[0] if ou.ndim == 2 else ou[:, 0]
    y1 = ou[-1] if ou.ndim == 2 else ou[:, -1]
    v, _, _ = propagate(model, nonlin, x0 - y0, ou, dt)
    return v + y1


def linear_cocycle_apply(model: SpectralModel, path: PathLike, t: float, xi) -> StateVector:
    """phi^t_omega(xi) = T(t) xi - T(t) Y_omega(0) + Y_{theta_t omega}(0), mode by mode."""
    if t < 0:
        raise ValueError("t must be non-negative")
    x0 = _coeffs(xi)
    n = _steps(path, t)
    if n == 0:
        node_index(path, 0.0)
        return StateVector(x0)
    ou = ou_series(model, path, 0.0, n * path.dt)
    e = np.exp(model.drift * (n * path.dt))
    return StateVector(e * x0 - e * ou[0] + ou[-1])


def cocycle_residual(model: SpectralModel, path: PathLike, nonlin, t: float, s: float, xi) -> float:
    """||phi^{t+s}_omega(xi) - phi^s_{theta_t omega}(phi^t_omega(xi))||; nonlin=None selects the linear cocycle."""
    if t < 0 or s < 0:
        raise ValueError("t and s must be non-negative")
    node_index(path, t + s)
    if nonlin is None:
        whole = linear_cocycle_apply(model, path, t + s, xi)
        first = linear_cocycle_apply(model, path, t, xi)
        second = linear_cocycle_apply(model, shift(path, t), s, first)
    else:
        whole = cocycle_apply(model, path, nonlin, t + s, xi)
        first = cocycle_apply(model, path, nonlin, t, xi)
        second = cocycle_apply(model, shift(path, t), nonlin, s, first)
    return float(np.linalg.norm(whole.coeffs - second.coeffs))
