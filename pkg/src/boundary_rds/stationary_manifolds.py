"""Random stationary point and local stable / unstable / center charts.

The stationary point solves the discrete version of

    V(t) = int_{-inf}^t T_s(t-r) g(V + Y)(r) dr - int_t^inf T_u(t-r) g(V + Y)(r) dr

on a truncated window, using exactly the step relation of the forward solver,
so the orbit it returns is an orbit of the discrete cocycle up to the Picard
tolerance.  Without unstable modes the second integral is absent.

Charts come from a discrete Lyapunov-Perron problem on the t0 grid: with
x_k = state - Z_k and Psi_k the block derivative, orbits satisfy

    x_{k+1} = Psi_k x_k + K_k(x_k),   K_k(x) = phi(Z_k + x) - phi(Z_k) - Psi_k x.

The sequence is truncated at M blocks (M chosen so the linear dichotomy has
decayed below 1e-8) and the far end gets a condition removing the growing
components.  Each fixed-point sweep solves one sparse linear system.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import subspace_angles
from scipy.signal import lfilter
from scipy.sparse.linalg import splu
from scipy.special import gamma

from .cocycle_solver import propagate, step_weights
from .errors import (
    ChartFailure,
    ContractionRefusal,
    NonDissipativeRefusal,
    SpectralGapError,
)
from .met_lyapunov import LyapunovSpectrum, classify
from .noise_shift import PathLike, node_index, ou_series
from .nonlinearity import Nonlinearity
from .orbit import (
    StationaryPoint,
    block_data,
    block_linearization,
    block_maps,
    steps_per_block,
)
from .spectral_core import SpectralModel, StateVector

__all__ = [
    "StationaryPoint",
    "ManifoldChart",
    "stationary_point",
    "stable_chart",
    "unstable_chart",
    "center_chart",
    "decay_rate_check",
    "decay_rate_details",
    "orbit_rate",
    "invariance_defect",
    "tangency_slope",
    "sparse_grid_nodes",
    "chart_tangent_angle",
    "chart_window",
    "history_rate",
    "equilibrium_point",
]


# ---------------------------------------------------------------------------
# stationary point


def dichotomy_margin(model: SpectralModel, lipschitz: float) -> float:
    """L * || dichotomy Green operator ||, the contraction factor of the fixed-point map."""
    a = model.drift
    parts = []
    if np.any(a < 0):
        parts.append(1.0 / np.abs(a[a < 0]).min())
    if np.any(a > 0):
        parts.append(1.0 / a[a > 0].min())
    if not parts:
        return math.inf if lipschitz > 0 else 0.0
    return float(lipschitz * math.sqrt(sum(p * p for p in parts)))


def paper_margin(model: SpectralModel, bound: float) -> float:
    """||G|| M_beta ||(-A)^-beta|| Gamma(1-beta) (-omega_A)^{beta-1}; inf when omega_A >= 0."""
    if model.omega_A >= 0:
        return math.inf
    if bound == 0:
        return 0.0
    return float(bound * model.frac_norm * gamma(1.0 - model.beta) * (-model.omega_A) ** (model.beta - 1.0))


def default_window(model: SpectralModel, tol: float = 1e-12) -> float:
    a = np.abs(model.drift[model.drift != 0])
    if a.size == 0:
        return 0.0
    return float(math.log(1.0 / tol) / a.min())


def _fit_window(dt: float, w: float) -> float:
    return math.ceil(w / dt - 1e-9) * dt


def stationary_point(
    model: SpectralModel,
    path: PathLike,
    nonlin: Nonlinearity,
    window: Optional[float] = None,
    tol: float = 1e-12,
    span: tuple = (0.0, 0.0),
    allow_dichotomy: bool = False,
    max_iter: int = 400,
) -> StationaryPoint:
    """Fixed point of the stationary-orbit map; Z = V(0) + Y_omega(0).

    span is the part of the orbit to keep (path-relative times); window is the
    extra history (and future, with unstable modes) that absorbs the truncation.
    """
    a = model.drift
    unstable, neutral = a > 0, a == 0
    if not allow_dichotomy and np.any(a >= 0):
        raise NonDissipativeRefusal(
            "stationary point needs every mode dissipative", modes=np.flatnonzero(a >= 0).tolist()
        )
    margin = dichotomy_margin(model, nonlin.lipschitz)
    pm = paper_margin(model, nonlin.bound)
    if margin >= 1.0:
        raise ContractionRefusal("fixed-point map is not a contraction", contraction_margin=margin, paper_margin=pm)

    dt = path.dt
    w = _fit_window(dt, default_window(model) if window is None else window)
    t_lo = _fit_window(dt, span[0]) if span[0] >= 0 else -_fit_window(dt, -span[0])
    t_hi = _fit_window(dt, span[1]) if span[1] >= 0 else -_fit_window(dt, -span[1])
    g_lo = t_lo - w
    g_hi = t_hi + (w if np.any(unstable) else 0.0)
    node_index(path, g_lo)
    node_index(path, g_hi)
    Y = ou_series(model, path, g_lo, g_hi)
    sw = step_weights(model, dt)
    V = np.zeros_like(Y)
    stable = a < 0
    diffs = []
    G = nonlin.apply(V + Y)
    for it in range(1, max_iter + 1):
        F = sw.w_old * G[:-1] + sw.w_new * G[1:]  # (n, N)
        new = np.zeros_like(V)
        for k in range(model.n_modes):
            if stable[k]:
                new[1:, k] = lfilter([1.0], [1.0, -sw.decay[k]], F[:, k])
            elif unstable[k]:
                inv = 1.0 / sw.decay[k]
                rev = lfilter([1.0], [1.0, -inv], -inv * F[::-1, k])
                new[:-1, k] = rev[::-1]
        d = float(np.abs(new - V).max())
        diffs.append(d)
        V = new
        G = nonlin.apply(V + Y)
        if d <= tol * (1.0 + float(np.abs(V).max())):
            break
    else:
        raise ContractionRefusal("stationary Picard iteration did not converge", iterations=max_iter, last_update=diffs[-1])

    F = sw.w_old * G[:-1] + sw.w_new * G[1:]
    if np.any(neutral):
        forcing = float(np.abs(F[:, neutral]).max())
        if forcing > 1e-12:
            raise NonDissipativeRefusal("neutral mode is forced; no stationary orbit", forcing=forcing)
    defect = V[1:] - sw.decay * V[:-1] - F
    i0 = int(round((t_lo - g_lo) / dt))
    i1 = int(round((t_hi - g_lo) / dt))
    interior = defect[i0 : max(i1, i0 + 1)]
    residual = float(np.abs(interior).max()) if interior.size else 0.0
    times = t_lo + np.arange(i1 - i0 + 1) * dt
    orbit = (V + Y)[i0 : i1 + 1]
    z = StateVector((V + Y)[int(round(-g_lo / dt))])
    ratios = [diffs[i + 1] / diffs[i] for i in range(len(diffs) - 1) if diffs[i] > 0]
    meta = {
        "iterations": len(diffs),
        "observed_ratio": float(max(ratios)) if ratios else 0.0,
        "grid": [g_lo, g_hi],
        "M_G": (1.0 / paper_margin(model, 1.0)) if model.omega_A < 0 else 0.0,
        "dichotomy": bool(np.any(unstable)),
    }
    return StationaryPoint(z, w, residual, margin, pm, times, orbit, dt, path.offset, meta)


def equilibrium_point(model: SpectralModel, path: PathLike, nonlin: Nonlinearity, span: tuple) -> StationaryPoint:
    """Z = 0 when the path carries no noise and g(0) = 0; covers neutral spectra."""
    if np.any(path.q != 0):
        raise NonDissipativeRefusal("equilibrium orbit requires a noise-free path")
    if np.abs(nonlin.apply(np.zeros(model.n_modes))).max() != 0:
        raise NonDissipativeRefusal("g(0) != 0, zero is not an equilibrium")
    dt = path.dt
    node_index(path, span[0])
    node_index(path, span[1])
    n = int(round((span[1] - span[0]) / dt))
    times = span[0] + np.arange(n + 1) * dt
    return StationaryPoint(model.zero(), 0.0, 0.0, 0.0, 0.0, times, np.zeros((n + 1, model.n_modes)), dt, path.offset, {"equilibrium": True})


# ---------------------------------------------------------------------------
# sparse grids


def _cc_nodes(level: int) -> np.ndarray:
    if level == 1:
        return np.array([0.0])
    m = 2 ** (level - 1) + 1
    return -np.cos(np.pi * np.arange(m) / (m - 1))


def sparse_grid_nodes(dim: int, level: int = 3, radius: float = 1.0) -> np.ndarray:
    """Smolyak nodes from nested Clenshaw-Curtis rules, scaled to the radius and clipped to the ball."""
    if dim < 1:
        return np.zeros((1, 0))
    pts = set()
    for idx in itertools.product(range(1, level + 2), repeat=dim):
        if sum(i - 1 for i in idx) > level:
            continue
        for p in itertools.product(*[_cc_nodes(i) for i in idx]):
            pts.add(tuple(round(v, 14) + 0.0 for v in p))
    arr = np.array(sorted(pts)) * radius
    keep = np.linalg.norm(arr, axis=1) <= radius * (1 + 1e-12)
    return arr[keep]


def _monomials(dim: int, degree: int = 3):
    """Exponents of total degree 1..degree; no constant term, so graph(0) = 0 exactly."""
    return [e for e in itertools.product(range(degree + 1), repeat=dim) if 0 < sum(e) <= degree]


def _design(nodes: np.ndarray, exps, scale: float) -> np.ndarray:
    u = nodes / scale
    return np.stack([np.prod(u ** np.array(e)[None, :], axis=1) for e in exps], axis=1)


# ---------------------------------------------------------------------------
# Lyapunov-Perron machinery


class _LPSystem:
    """Factorized block system  x_{m+1} - Psi_m x_m = f_m  plus boundary rows."""

    def __init__(self, psi: np.ndarray, bcs: list):
        M, n, _ = psi.shape
        self.M, self.n = M, n
        rows, cols, vals = [], [], []
        for m in range(M):
            r0 = m * n
            rows.extend(r0 + np.arange(n))
            cols.extend((m + 1) * n + np.arange(n))
            vals.extend(np.ones(n))
            rr, cc = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            rows.extend((r0 + rr).ravel())
            cols.extend((m * n + cc).ravel())
            vals.extend((-psi[m]).ravel())
        r = M * n
        self.bc_slices = []
        for node, C in bcs:
            k = C.shape[0]
            rr, cc = np.meshgrid(np.arange(k), np.arange(n), indexing="ij")
            rows.extend((r + rr).ravel())
            cols.extend((node * n + cc).ravel())
            vals.extend(C.ravel())
            self.bc_slices.append(slice(r, r + k))
            r += k
        size = (M + 1) * n
        if r != size:
            raise ChartFailure("boundary conditions do not close the system", rows=r, unknowns=size)
        A = sparse.csc_matrix((vals, (rows, cols)), shape=(size, size))
        self.lu = splu(A)

    def solve(self, forcing: np.ndarray, bc_rhs: list) -> np.ndarray:
        """forcing (B, M, n); bc_rhs list of (B, k) -> x (B, M+1, n)."""
        B = forcing.shape[0]
        rhs = np.zeros(((self.M + 1) * self.n, B))
        rhs[: self.M * self.n] = forcing.reshape(B, -1).T
        for sl, vals in zip(self.bc_slices, bc_rhs):
            rhs[sl] = vals.T
        x = self.lu.solve(rhs)
        return x.T.reshape(B, self.M + 1, self.n)


def _frame_forward(Q: np.ndarray, psi: np.ndarray) -> np.ndarray:
    for P in psi:
        Q, R = np.linalg.qr(P @ Q)
        Q = Q * np.sign(np.diag(R))[None, :]
    return Q


def _frame_backward(Q: np.ndarray, psi_rev: np.ndarray) -> np.ndarray:
    for P in psi_rev:
        Q, R = np.linalg.qr(P.T @ Q)
        Q = Q * np.sign(np.diag(R))[None, :]
    return Q


@dataclass
class ManifoldChart:
    kind: str
    base: StationaryPoint
    tangent: np.ndarray  # (N, d_t) orthonormal
    complement: np.ndarray  # (N, d_r), columns grouped by subspace
    coords: np.ndarray  # inverse of [tangent | complement]
    nodes: np.ndarray  # (P, d_t) tangent coordinates
    values: np.ndarray  # (P, d_r) complementary coordinates
    offsets: np.ndarray  # (P, N) chart point minus Z
    upsilon: float
    t0: float
    radius: float
    poly_exps: list
    poly_coef: np.ndarray
    meta: dict = field(default_factory=dict)
    histories: Optional[np.ndarray] = None  # (P, M+1) norms along the constructed orbits
    _ctx: Optional[dict] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.tangent.shape[1]

    def graph(self, xi) -> np.ndarray:
        """Interpolated complementary coordinates at tangent coordinates xi."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        return _design(xi, self.poly_exps, self.radius) @ self.poly_coef

    def point(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.base.Z.coeffs + self.tangent @ xi + self.complement @ self.graph(xi)[0]

    def solve_at(self, xi) -> np.ndarray:
        """Exact chart offset(s) x_0 at tangent coordinates by re-running the fixed point."""
        if self._ctx is None:
            raise ChartFailure("chart context not retained")
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        x, _, _ = _lp_iterate(self._ctx, xi)
        return x[:, self._ctx["zero_node"]]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "base_point": self.base.Z.coeffs.tolist(),
            "tangent_basis": self.tangent.T.tolist(),
            "complement_basis": self.complement.T.tolist(),
            "upsilon": self.upsilon,
            "t0": self.t0,
            "radius": self.radius,
            "nodes": self.nodes.tolist(),
            "graph_values": self.values.tolist(),
            "poly_exponents": [list(e) for e in self.poly_exps],
            "poly_coefficients": self.poly_coef.tolist(),
            "meta": self.meta,
        }


def _k_remainder(ctx: dict, x: np.ndarray) -> np.ndarray:
    """K_m(x_m) for every block; x has shape (B, M+1, N)."""
    model, nonlin = ctx["model"], ctx["nonlin"]
    B, Mp1, N = x.shape
    M = Mp1 - 1
    starts = ctx["Zb"][None, :, :] + x[:, :M]  # (B, M, N)
    Y = np.broadcast_to(ctx["Yb"][None], (B,) + ctx["Yb"].shape).reshape(B * M, *ctx["Yb"].shape[1:])
    ends = block_maps(model, nonlin, starts.reshape(B * M, N), Y, ctx["dt"]).reshape(B, M, N)
    lin = np.einsum("mij,bmj->bmi", ctx["psi"], x[:, :M])
    return ends - ctx["phiZ"][None] - lin


def _weighted(ctx: dict, x: np.ndarray) -> np.ndarray:
    return (np.linalg.norm(x, axis=2) * ctx["weights"][None, :]).max(axis=1)


def _lp_iterate(ctx: dict, xi: np.ndarray, tol: float = 1e-13, max_iter: int = 60):
    sysm: _LPSystem = ctx["system"]
    B = xi.shape[0]
    bc_rhs = [np.zeros((B, C.shape[0])) for _, C in ctx["bcs"]]
    bc_rhs[0] = xi
    f = np.zeros((B, sysm.M, sysm.n))
    x = sysm.solve(f, bc_rhs)
    if ctx["nonlin"].is_affine:
        return x, 0, [0.0]
    diffs = []
    # roundoff in the unweighted solve is amplified by the largest weight
    floor = 256.0 * np.finfo(float).eps * float(ctx["weights"].max())
    for it in range(1, max_iter + 1):
        f = _k_remainder(ctx, x)
        new = sysm.solve(f, bc_rhs)
        d = float(_weighted(ctx, new - x).max())
        diffs.append(d)
        x = new
        scale = 1.0 + float(_weighted(ctx, x).max())
        if d <= max(tol, floor) * scale:
            return x, it, diffs
        if len(diffs) >= 3 and d > 0.9 * diffs[-2]:
            break
    raise ChartFailure("Lyapunov-Perron iteration is not contracting", iterations=len(diffs), last=diffs[-1])


def _spectrum_check(spectrum: LyapunovSpectrum, t0: float, dt: float) -> None:
    if abs(spectrum.t0 - t0) > 1e-12 or abs(spectrum.dt - dt) > 1e-15:
        raise ValueError("spectrum was computed with a different t0 or dt")


def _horizon_blocks(rate: float, t0: float, cap: int) -> int:
    if rate <= 0:
        raise SpectralGapError("no decay rate available for truncation")
    return int(min(cap, math.ceil(math.log(1e8) / (rate * t0))))


def chart_window(kind: str, spectrum: LyapunovSpectrum, max_blocks: int = 4000) -> tuple:
    """(k_lo, k_hi, rate): block range of the Lyapunov-Perron sequence and the admissible upsilon bound.

    The range is long enough for the linear dichotomy at that rate to decay
    below 1e-8, capped at max_blocks.
    """
    cls = classify(spectrum)
    mu = spectrum.directional
    t0 = spectrum.t0
    if kind == "stable":
        if not cls["S_dirs"]:
            raise SpectralGapError("no stable directions")
        rate = float(-mu[cls["S_dirs"]].max())
        return 0, _horizon_blocks(rate, t0, max_blocks), rate
    if kind == "unstable":
        if not cls["U_dirs"]:
            raise SpectralGapError("no unstable directions")
        rate = float(mu[cls["U_dirs"]].min())
        return -_horizon_blocks(rate, t0, max_blocks), 0, rate
    if kind == "center":
        if not cls["C_dirs"]:
            raise SpectralGapError("no center direction")
        rates = []
        if cls["U_dirs"]:
            rates.append(float(mu[cls["U_dirs"]].min()))
        if cls["S_dirs"]:
            rates.append(float(-mu[cls["S_dirs"]].max()))
        if not rates:
            raise SpectralGapError("no hyperbolic directions to separate the center chart from")
        rate = min(rates)
        M = _horizon_blocks(rate, t0, max_blocks)
        return -M, M, rate
    raise ValueError(f"unknown chart kind {kind!r}")


def _build_chart(
    kind: str,
    model: SpectralModel,
    path: PathLike,
    nonlin: Nonlinearity,
    Z: StationaryPoint,
    spectrum: LyapunovSpectrum,
    upsilon: float,
    radius: float,
    level: int,
    max_blocks: int,
) -> ManifoldChart:
    t0 = spectrum.t0
    _spectrum_check(spectrum, t0, path.dt)
    cls = classify(spectrum)
    d_u, d_c = len(cls["U_dirs"]), len(cls["C_dirs"])
    n = model.n_modes
    k_lo, k_hi, rate = chart_window(kind, spectrum, max_blocks)
    if not 0 < upsilon < rate:
        raise ValueError(f"upsilon must lie in (0, {rate:.4g})")
    M = max(-k_lo, k_hi)

    bd = block_data(model, path, Z, t0, k_lo, k_hi)
    psi, phiZ = block_linearization(model, nonlin, bd)

    bases = spectrum.subspace_bases()
    U_b, C_b, S_b = bases["U"], bases["C"], bases["S"]
    if kind == "stable":
        tangent, comp = S_b, np.hstack([C_b, U_b])
    elif kind == "unstable":
        tangent, comp = U_b, np.hstack([C_b, S_b])
    else:
        tangent, comp = C_b, np.hstack([S_b, U_b])
    coords = np.linalg.inv(np.hstack([tangent, comp]))
    d_t = tangent.shape[1]
    zero_node = -k_lo
    bcs = [(zero_node, coords[:d_t])]
    Qf0, Qb0 = spectrum.fast_frame, spectrum.slow_frame
    if kind in ("stable", "center"):
        QfM = _frame_forward(Qf0, psi[zero_node:])
        kill = d_u + d_c if kind == "stable" else d_u
        if kill:
            bcs.append((k_hi - k_lo, QfM[:, :kill].T))
    if kind in ("unstable", "center"):
        QbM = _frame_backward(Qb0, psi[:zero_node][::-1])
        start = d_u if kind == "unstable" else d_u + d_c
        if start < n:
            bcs.append((0, QbM[:, start:].T))

    steps = np.arange(k_lo, k_hi + 1) - k_lo - zero_node  # block offset relative to omega
    if kind == "stable":
        weights = np.exp(upsilon * t0 * steps)
    elif kind == "unstable":
        weights = np.exp(-upsilon * t0 * steps)
    else:
        weights = np.exp(-upsilon * t0 * np.abs(steps))
    ctx = {
        "model": model,
        "nonlin": nonlin,
        "psi": psi,
        "phiZ": phiZ,
        "Zb": bd.Z[:-1],
        "Yb": bd.Y,
        "dt": path.dt,
        "bcs": bcs,
        "system": _LPSystem(psi, bcs),
        "weights": weights,
        "zero_node": zero_node,
    }

    r = float(radius)
    while True:
        nodes = sparse_grid_nodes(d_t, level, r)
        try:
            x, iters, diffs = _lp_iterate(ctx, nodes)
            break
        except ChartFailure:
            r *= 0.5
            if r < 1e-6:
                raise ChartFailure("no contracting radius above 1e-6", radius=r)
    x0 = x[:, zero_node]
    values = x0 @ coords[d_t:].T
    exps = _monomials(d_t, 3)
    if len(exps) > nodes.shape[0]:
        exps = _monomials(d_t, 1)
    coef, *_ = np.linalg.lstsq(_design(nodes, exps, r), values, rcond=None)
    meta = {
        "blocks": M,
        "iterations": iters,
        "last_update": diffs[-1] if diffs else 0.0,
        "radius_requested": float(radius),
        "d_t": d_t,
        "block_range": [k_lo, k_hi],
        "fit_residual": float(np.abs(_design(nodes, exps, r) @ coef - values).max()) if values.size else 0.0,
    }
    hist = np.linalg.norm(x, axis=2)
    return ManifoldChart(kind, Z, tangent, comp, coords, nodes, values, x0, upsilon, t0, r, exps, coef, meta, hist, ctx)


def stable_chart(model, path, nonlin, Z, spectrum, upsilon, radius, level: int = 3, max_blocks: int = 4000) -> ManifoldChart:
    return _build_chart("stable", model, path, nonlin, Z, spectrum, upsilon, radius, level, max_blocks)


def unstable_chart(model, path, nonlin, Z, spectrum, upsilon, radius, level: int = 3, max_blocks: int = 4000) -> ManifoldChart:
    return _build_chart("unstable", model, path, nonlin, Z, spectrum, upsilon, radius, level, max_blocks)


def center_chart(model, path, nonlin, Z, spectrum, radius, upsilon: Optional[float] = None, level: int = 3, max_blocks: int = 4000) -> ManifoldChart:
    if upsilon is None:
        upsilon = 0.5 * chart_window("center", spectrum, max_blocks)[2]
    return _build_chart("center", model, path, nonlin, Z, spectrum, upsilon, radius, level, max_blocks)


# ---------------------------------------------------------------------------
# checks


def _forward_blocks(model, path, nonlin, start: np.ndarray, t0: float, n_blocks: int) -> np.ndarray:
    """States at block times 0..n_blocks from start (B, N) on the path (B trajectories share the noise)."""
    s = steps_per_block(path.dt, t0)
    ou = ou_series(model, path, 0.0, n_blocks * s * path.dt)
    _, hist, _ = propagate(model, nonlin, start - ou[0], ou, path.dt, record=True)
    return (hist + ou[None])[:, ::s]


def _slope(n: np.ndarray, logs: np.ndarray) -> float:
    return float(np.polyfit(n, logs, 1)[0])


def orbit_rate(model, path, nonlin, chart: ManifoldChart, xi, n_max: int) -> dict:
    """Fitted per-block rate of log ||phi^{n t0}(chart point) - Z_{theta_{n t0} omega}||."""
    if n_max < 2:
        raise ValueError("need n_max >= 2")
    p = chart.base.Z.coeffs + chart.solve_at(xi)[0]
    X = _forward_blocks(model, path, nonlin, p[None], chart.t0, n_max)[0]
    Zs = np.array([chart.base.at(k * chart.t0).coeffs for k in range(n_max + 1)])
    d = np.linalg.norm(X - Zs, axis=1)
    ok = d > 1e-11 * (1 + np.linalg.norm(Zs, axis=1))
    idx = np.arange(n_max + 1)
    cut = n_max + 1 if ok.all() else int(np.argmin(ok))
    truncated = cut <= n_max
    if cut < 3:
        raise ChartFailure("orbit collapsed to the noise floor immediately")
    return {"rate": _slope(idx[:cut], np.log(d[:cut])), "distances": d, "truncated": truncated, "used": cut}


def decay_rate_details(model, path, nonlin, chart: ManifoldChart, xi, n_max: int, separation: float = 1e-2) -> dict:
    """Pairwise contraction rate of two chart points under the cocycle."""
    if n_max <= 0:
        raise ValueError("n_max must be positive")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    direction = np.ones_like(xi) / math.sqrt(xi.size)
    xi2 = xi + separation * max(np.linalg.norm(xi), 1e-3) * direction
    offs = chart.solve_at(np.stack([xi, xi2]))
    p = chart.base.Z.coeffs[None] + offs
    X = _forward_blocks(model, path, nonlin, p, chart.t0, n_max)
    Zs = np.array([chart.base.at(k * chart.t0).coeffs for k in range(n_max + 1)])
    ratio = np.linalg.norm(X[0] - X[1], axis=1) / np.linalg.norm(p[0] - p[1])
    far = np.linalg.norm(X[0] - Zs, axis=1) > 2.0 * chart.radius + np.linalg.norm(offs[0])
    floor = ratio < 1e-9
    bad = far | floor
    cut = n_max + 1 if not bad.any() else int(np.argmax(bad))
    flagged = cut <= n_max
    if cut < 2:
        raise ChartFailure("trajectory left the chart domain before a fit was possible")
    idx = np.arange(cut)
    return {"rate": _slope(idx, np.log(ratio[:cut])), "ratios": ratio, "truncated": flagged, "used": cut}


def decay_rate_check(model, path, nonlin, chart: ManifoldChart, xi, n_max: int) -> float:
    return decay_rate_details(model, path, nonlin, chart, xi, n_max)["rate"]


def invariance_defect(model, path, nonlin, chart: ManifoldChart, shifted: ManifoldChart, xi) -> float:
    """One-block re-projection: phi^{t0}(chart point) tested against the chart at theta_{t0} omega."""
    p = chart.base.Z.coeffs + chart.solve_at(xi)[0]
    X = _forward_blocks(model, path, nonlin, p[None], chart.t0, 1)[0, 1]
    off = X - shifted.base.Z.coeffs
    d_t = shifted.dim
    xi_new = shifted.coords[:d_t] @ off
    predicted = shifted.coords[d_t:] @ shifted.solve_at(xi_new)[0]
    return float(np.linalg.norm(shifted.coords[d_t:] @ off - predicted))


def tangency_slope(chart: ManifoldChart, radii) -> dict:
    """Least-squares s in ||graph(xi)|| ~ s r + c2 r^2 + c3 r^3 over shrinking radii."""
    radii = np.asarray(radii, dtype=float)
    d_t = chart.dim
    pts, rs = [], []
    for r in radii:
        for sgn in (1.0, -1.0):
            v = np.zeros(d_t)
            v[0] = sgn * r
            pts.append(v)
            rs.append(r)
    pts = np.array(pts)
    rs = np.array(rs)
    offs = chart.solve_at(pts)
    g = np.linalg.norm(offs @ chart.coords[d_t:].T, axis=1)
    A = np.stack([rs, rs**2, rs**3], axis=1)
    coef, *_ = np.linalg.lstsq(A, g, rcond=None)
    return {"slope": float(coef[0]), "radii": rs, "graph_norms": g, "ratio_min_radius": float((g / rs)[np.argmin(rs)])}


def chart_tangent_angle(chart: ManifoldChart, spectrum: LyapunovSpectrum, eps: float = 1e-6) -> float:
    """Largest principal angle between the chart's differentiated tangent and the Oseledets subspace."""
    key = {"stable": "S", "unstable": "U", "center": "C"}[chart.kind]
    e = np.eye(chart.dim) * eps
    offs = chart.solve_at(np.concatenate([e, -e]))
    D = (offs[: chart.dim] - offs[chart.dim :]).T / (2.0 * eps)
    return float(np.max(subspace_angles(D, spectrum.subspace_bases()[key])))


def history_rate(chart: ManifoldChart, row: int = -1) -> float:
    """Fitted exponential decay rate (per unit time) of ||x_k|| away from omega along the constructed orbit."""
    h = chart.histories[row]
    k_lo, k_hi = chart.meta["block_range"]
    times = np.abs(np.arange(k_lo, k_hi + 1)) * chart.t0
    ok = h > 0
    if ok.sum() < 2:
        raise ValueError("history vanishes identically (chart node at the origin)")
    return float(-np.polyfit(times[ok], np.log(h[ok]), 1)[0])
