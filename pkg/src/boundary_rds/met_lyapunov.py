"""Lyapunov exponents and the Oseledets splitting of the linearized cocycle.

Exponents come from a sign-fixed QR (Benettin) recursion over consecutive
t0-blocks along the stationary orbit.  The fast filtration at omega is the
forward QR frame after a burn-in started in the past; the slow filtration is
the frame of the transposed recursion run back from a tail window in the
future.  Each Oseledets space H^i is the intersection of the two.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.linalg import null_space, subspace_angles

from .errors import EnsembleTooSmall, HorizonError, NonStationaryError, SpectralGapError
from .noise_shift import PathLike
from .nonlinearity import Nonlinearity
from .orbit import StationaryPoint, block_data, block_linearization, steps_per_block
from .spectral_core import SpectralModel
from .variational import jacobian_along, random_directions

__all__ = [
    "LyapunovSpectrum",
    "lyapunov_spectrum",
    "required_span",
    "classify",
    "oseledets_splitting",
    "equivariance_angles",
    "backward_unstable_rate",
    "integrability_estimate",
    "spectrum_report",
]

FRAME_SEED = 20240517


@dataclass
class LyapunovSpectrum:
    t0: float
    n_steps: int
    dt: float
    exponents: np.ndarray  # distinct values, strictly decreasing
    multiplicities: list
    bases: list  # orthonormal (N, m_i) basis of each H^i at omega
    splitting: dict  # exponent-group indices for "S", "U", "C"
    ci: np.ndarray  # half-width per exponent group
    directional: np.ndarray  # per-direction exponents in QR order
    directional_ci: np.ndarray
    fast_frame: np.ndarray  # Q_f at omega
    slow_frame: np.ndarray  # Q_b at omega
    curves: np.ndarray  # (checkpoints, N+1): block count and running means
    groups: list  # direction index lists per exponent
    meta: dict = field(default_factory=dict)
    _frames: list = field(default_factory=list, repr=False)  # (Q_f, Q_b) at blocks 0..n_eq
    _psi_head: Optional[np.ndarray] = field(default=None, repr=False)  # Psi_0 .. Psi_{n_eq-1}
    _past: Optional[tuple] = field(default=None, repr=False)  # (psi, Q_f) on the last burn-in blocks

    @property
    def n_modes(self) -> int:
        return self.fast_frame.shape[0]

    @property
    def mu_stable_top(self) -> Optional[float]:
        s = self.splitting["S"]
        return float(self.exponents[s].max()) if s else None

    @property
    def mu_unstable_bottom(self) -> Optional[float]:
        u = self.splitting["U"]
        return float(self.exponents[u].min()) if u else None

    def subspace_bases(self, block: int = 0) -> dict:
        """Orthonormal bases of U, C, S at theta_{block t0} omega."""
        out = {}
        for key in ("U", "C", "S"):
            cols = [self.covariant(block)[i] for i in self.splitting[key]]
            if cols:
                q, _ = np.linalg.qr(np.hstack(cols))
                out[key] = q
            else:
                out[key] = np.zeros((self.n_modes, 0))
        return out

    def covariant(self, block: int = 0) -> list:
        if block == 0:
            return self.bases
        qf, qb = self._frames[block]
        return _intersections(qf, qb, self.groups)

    def projections(self, block: int = 0) -> dict:
        b = self.subspace_bases(block)
        basis = np.hstack([b["S"], b["C"], b["U"]])
        inv = np.linalg.inv(basis)
        out, start = {}, 0
        for key in ("S", "C", "U"):
            d = b[key].shape[1]
            out[key] = basis[:, start : start + d] @ inv[start : start + d]
            start += d
        return out

    def to_json(self) -> dict:
        return {
            "t0": self.t0,
            "n_steps": self.n_steps,
            "dt": self.dt,
            "exponents": self.exponents.tolist(),
            "ci": self.ci.tolist(),
            "multiplicities": list(self.multiplicities),
            "classification": {k: list(v) for k, v in self.splitting.items()},
            "mu_stable_top": self.mu_stable_top,
            "mu_unstable_bottom": self.mu_unstable_bottom,
            "directional": self.directional.tolist(),
            "directional_ci": self.directional_ci.tolist(),
            "meta": self.meta,
        }


def _qr_step(P: np.ndarray, Q: np.ndarray):
    q, r = np.linalg.qr(P @ Q)
    d = np.diag(r)
    s = np.where(d < 0, -1.0, 1.0)
    return q * s[None, :], np.abs(d)


def _intersections(qf: np.ndarray, qb: np.ndarray, groups: list) -> list:
    """H^i = span qf[:, :j1] intersected with span qb[:, j0:] for every direction group."""
    out = []
    for g in groups:
        j0, j1 = g[0], g[-1] + 1
        F = qf[:, :j1]
        if j0 == 0:
            basis = F
        else:
            C = qb[:, :j0].T @ F
            ns = null_space(C, rcond=1e-10)
            if ns.shape[1] != j1 - j0:
                u, s, vt = np.linalg.svd(C)
                ns = vt[-(j1 - j0) :].T
            basis = F @ ns
        q, _ = np.linalg.qr(basis)
        out.append(q)
    return out


def required_span(t0: float, n_steps: int, burn_in: Optional[int] = None) -> tuple:
    """Path-relative time interval the stationary orbit must cover."""
    b = default_burn_in(n_steps) if burn_in is None else burn_in
    return (-b * t0, n_steps * t0)


def default_burn_in(n_steps: int) -> int:
    return max(1, int(round(0.2 * n_steps)))


class _BlockSource:
    """Psi_k for consecutive blocks, either constant (affine g) or along the orbit in chunks."""

    def __init__(self, model, path, nonlin, Z, t0, k_lo, k_hi, chunk):
        self.model, self.path, self.nonlin, self.Z, self.t0 = model, path, nonlin, Z, t0
        self.k_lo, self.k_hi, self.chunk = k_lo, k_hi, chunk
        self.const = None
        if nonlin.is_affine:
            s = steps_per_block(path.dt, t0)
            X = np.zeros((1, s + 1, model.n_modes))
            self.const = jacobian_along(model, nonlin, X, path.dt)[0]

    def chunks(self):
        for a in range(self.k_lo, self.k_hi, self.chunk):
            b = min(self.k_hi, a + self.chunk)
            if self.const is not None:
                yield a, np.broadcast_to(self.const, (b - a,) + self.const.shape)
            else:
                bd = block_data(self.model, self.path, self.Z, self.t0, a, b)
                psi, _ = block_linearization(self.model, self.nonlin, bd)
                yield a, psi


def _batch_ci(samples: np.ndarray, n_batches: int) -> np.ndarray:
    """Half-width of the 95% batch-means interval for each column."""
    n = samples.shape[0]
    nb = min(n_batches, n)
    if nb < 2:
        return np.full(samples.shape[1], np.inf)
    size = n // nb
    means = samples[: nb * size].reshape(nb, size, -1).mean(axis=1)
    sd = means.std(axis=0, ddof=1)
    return stats.t.ppf(0.975, nb - 1) * sd / math.sqrt(nb)


def _group_directions(mu: np.ndarray, ci: np.ndarray, gap_tol: float) -> list:
    groups = [[0]]
    for j in range(1, mu.size):
        prev = groups[-1][-1]
        tol = max(gap_tol, 3.0 * max(ci[j], ci[prev]))
        if abs(mu[prev] - mu[j]) <= tol:
            groups[-1].append(j)
        else:
            groups.append([j])
    return groups


def lyapunov_spectrum(
    model: SpectralModel,
    path: PathLike,
    nonlin: Nonlinearity,
    Z: Optional[StationaryPoint],
    t0: float,
    n_steps: int,
    burn_in: Optional[int] = None,
    tail_frac: float = 0.2,
    n_batches: int = 20,
    center_floor: float = 1e-3,
    gap_tol: float = 1e-6,
    residual_tol: float = 1e-8,
    n_equivariance: int = 5,
    chunk: int = 1024,
    n_checkpoints: int = 200,
) -> LyapunovSpectrum:
    """Benettin QR estimate of the spectrum of psi~^{t0} along theta_{k t0} omega, k = 0..n_steps-1.

    Z may be None when g is affine: its derivative does not depend on the
    state, so the base orbit is irrelevant.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    s = steps_per_block(path.dt, t0)
    b = default_burn_in(n_steps) if burn_in is None else int(burn_in)
    tail = max(1, int(round(tail_frac * n_steps)))
    n_eq = min(n_equivariance, n_steps - tail)
    if n_eq < 0:
        raise ValueError("tail window longer than the run")
    if Z is None:
        if not nonlin.is_affine:
            raise ValueError("a stationary point is required for a non-affine nonlinearity")
    else:
        if Z.residual > residual_tol:
            raise NonStationaryError("base point is not stationary", residual=Z.residual, tol=residual_tol)
        lo, hi = required_span(t0, n_steps, b)
        if not Z.covers(lo, hi):
            raise HorizonError(f"stationary orbit must cover [{lo}, {hi}]")
    n = model.n_modes
    src = _BlockSource(model, path, nonlin, Z, t0, -b, n_steps, chunk)

    Q = random_directions(n, n, FRAME_SEED)
    logs = np.empty((n_steps, n))
    frames_f = []
    keep = tail + n_eq
    head = np.empty((keep, n, n))
    m_past = min(b, 200)
    past_psi = np.empty((m_past, n, n))
    past_q = np.empty((m_past + 1, n, n))
    dropped = np.zeros(n, dtype=bool)
    for a, psi in src.chunks():
        for i in range(psi.shape[0]):
            k = a + i
            if -m_past <= k < 0:
                past_psi[k + m_past] = psi[i]
                past_q[k + m_past] = Q
            if k == 0:
                frames_f.append(Q.copy())
            if 0 <= k < keep:
                head[k] = psi[i]
            Q, d = _qr_step(psi[i], Q)
            if k >= 0:
                tiny = d < 1e-300
                if tiny.any():
                    dropped |= tiny
                    d = np.where(tiny, 1e-300, d)
                logs[k] = np.log(d) / t0
                if 1 <= k + 1 <= n_eq:
                    frames_f.append(Q.copy())
    past_q[m_past] = frames_f[0]
    if dropped.any():
        warnings.warn(f"R diagonal underflow in directions {np.flatnonzero(dropped).tolist()}; exponents there are lower bounds", stacklevel=2)

    # transposed recursion from the end of the tail window back to block 0
    Qb = random_directions(n, n, FRAME_SEED + 1)
    frames_b = [None] * (n_eq + 1)
    for k in range(keep - 1, -1, -1):
        Qb, _ = _qr_step(head[k].T, Qb)
        if k <= n_eq:
            frames_b[k] = Qb.copy()
    if keep == 0 or frames_b[0] is None:
        frames_b[0] = Qb

    mu = logs.mean(axis=0)
    dci = _batch_ci(logs, n_batches)
    if np.any(np.diff(mu) > np.maximum(3.0 * (dci[1:] + dci[:-1]), 1e-9)):
        warnings.warn("QR diagonal exponents are not ordered; spectrum not converged", stacklevel=2)
    groups = _group_directions(mu, dci, gap_tol)
    exps = np.array([mu[g].mean() for g in groups])
    gci = np.array([dci[g].max() for g in groups])
    mult = [len(g) for g in groups]
    frames = [(frames_f[j], frames_b[j]) for j in range(n_eq + 1)]
    bases = _intersections(frames_f[0], frames_b[0], groups)

    # classification of exponent groups
    splitting = {"U": [], "C": [], "S": []}
    ambiguous = []
    for i, (m, c) in enumerate(zip(exps, gci)):
        thr = max(3.0 * c, center_floor)
        if abs(m) < thr:
            splitting["C"].append(i)
        else:
            if abs(m) - c < thr:
                ambiguous.append(i)
            splitting["U" if m > 0 else "S"].append(i)

    cps = np.unique(np.linspace(1, n_steps, min(n_checkpoints, n_steps)).astype(int))
    running = np.cumsum(logs, axis=0)[cps - 1] / cps[:, None]
    curves = np.column_stack([cps, running])
    meta = {
        "burn_in": b,
        "tail": tail,
        "batches": n_batches,
        "steps_per_block": s,
        "dropped_directions": np.flatnonzero(dropped).tolist(),
        "ambiguous_groups": ambiguous,
        "center_floor": center_floor,
        "nonlinearity": nonlin.name,
    }
    return LyapunovSpectrum(
        t0=float(t0),
        n_steps=int(n_steps),
        dt=path.dt,
        exponents=exps,
        multiplicities=mult,
        bases=bases,
        splitting=splitting,
        ci=gci,
        directional=mu,
        directional_ci=dci,
        fast_frame=frames_f[0],
        slow_frame=frames_b[0],
        curves=curves,
        groups=groups,
        meta=meta,
        _frames=frames,
        _psi_head=head[:n_eq].copy(),
        _past=(past_psi, past_q),
    )


def classify(spectrum: LyapunovSpectrum) -> dict:
    """Direction indices (QR order) of U, C, S and the exponent-group split."""
    dirs = {}
    for key in ("U", "C", "S"):
        dirs[key + "_dirs"] = sorted(j for i in spectrum.splitting[key] for j in spectrum.groups[i])
    return dirs


def oseledets_splitting(spectrum: LyapunovSpectrum, threshold: Optional[float] = None):
    """(S_basis, U_basis, C_basis, projections) with |mu| < threshold counted as center.

    threshold None keeps the per-exponent rule max(3 CI, floor) used at estimation.
    """
    if threshold is not None:
        split = {"U": [], "C": [], "S": []}
        for i, m in enumerate(spectrum.exponents):
            split["C" if abs(m) < threshold else ("U" if m > 0 else "S")].append(i)
        spectrum = _with_split(spectrum, split)
        ambiguous = [i for i, (m, c) in enumerate(zip(spectrum.exponents, spectrum.ci)) if i not in split["C"] and abs(m) - c < threshold]
    else:
        ambiguous = spectrum.meta.get("ambiguous_groups", [])
    if ambiguous:
        raise SpectralGapError(
            "exponent confidence interval reaches the center band",
            groups=ambiguous,
            exponents=[float(spectrum.exponents[i]) for i in ambiguous],
        )
    for i, m in enumerate(spectrum.exponents):
        if i not in spectrum.splitting["C"] and abs(m) <= 2.0 * spectrum.ci[i]:
            raise SpectralGapError("no spectral gap around zero", group=i, exponent=float(m), ci=float(spectrum.ci[i]))
    b = spectrum.subspace_bases()
    return b["S"], b["U"], b["C"], spectrum.projections()


def _with_split(spectrum: LyapunovSpectrum, split: dict) -> LyapunovSpectrum:
    from dataclasses import replace

    return replace(spectrum, splitting=split)


def equivariance_angles(spectrum: LyapunovSpectrum) -> np.ndarray:
    """Largest principal angle between Psi_k H^i(k) and H^i(k+1) for the stored head blocks."""
    n_eq = spectrum._psi_head.shape[0]
    out = np.zeros((n_eq, len(spectrum.groups)))
    for k in range(n_eq):
        cur = spectrum.covariant(k)
        nxt = spectrum.covariant(k + 1)
        for i, (h, h1) in enumerate(zip(cur, nxt)):
            out[k, i] = float(np.max(subspace_angles(spectrum._psi_head[k] @ h, h1)))
    return out


def backward_unstable_rate(spectrum: LyapunovSpectrum, seed: int = 0) -> dict:
    """Backward growth rate of a generic vector of U_omega under the inverse restricted cocycle."""
    d_u = sum(spectrum.multiplicities[i] for i in spectrum.splitting["U"])
    if d_u == 0:
        raise SpectralGapError("no unstable directions")
    psi, qs = spectrum._past
    m = psi.shape[0]
    if m == 0:
        raise ValueError("no past blocks stored; use burn_in > 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    c = rng.standard_normal(d_u)
    c /= np.linalg.norm(c)
    logs = [0.0]
    for k in range(m - 1, -1, -1):
        A = qs[k + 1][:, :d_u].T @ psi[k] @ qs[k][:, :d_u]
        c = np.linalg.solve(A, c)
        nrm = np.linalg.norm(c)
        logs.append(logs[-1] + math.log(nrm))
        c /= nrm
    n = np.arange(len(logs))
    rate = float(np.polyfit(n * spectrum.t0, logs, 1)[0])
    return {"rate": rate, "expected": -spectrum.mu_unstable_bottom, "log_norms": np.array(logs)}


def integrability_estimate(
    model: SpectralModel,
    paths: Sequence[PathLike],
    nonlin: Nonlinearity,
    Zs: Optional[Sequence[StationaryPoint]],
    t0: float,
    n_boot: int = 1000,
    seed: int = 0,
    min_ensemble: int = 100,
) -> dict:
    """Ensemble statistics of sup_t log+ ||psi^t_omega|| and sup_t log+ ||psi^{t0-t}_{theta_t omega}||."""
    if len(paths) < min_ensemble:
        raise EnsembleTooSmall(f"need at least {min_ensemble} independent paths, got {len(paths)}")
    if Zs is None and not nonlin.is_affine:
        raise ValueError("stationary points are required for a non-affine nonlinearity")
    s = steps_per_block(paths[0].dt, t0)
    dt = paths[0].dt
    X = np.zeros((len(paths), s + 1, model.n_modes))
    if Zs is not None:
        for i, z in enumerate(Zs):
            i0 = z.index(0.0)
            if not z.covers(0.0, s * dt):
                raise HorizonError("stationary orbit does not cover [0, t0]")
            X[i] = z.orbit[i0 : i0 + s + 1]
    _, hist = jacobian_along(model, nonlin, X, dt, record=True)
    fwd = np.linalg.norm(hist, 2, axis=(-2, -1))
    end = hist[:, -1]
    rest = np.linalg.solve(np.swapaxes(hist, -1, -2), np.swapaxes(end, -1, -2)[:, None]).swapaxes(-1, -2)
    bwd = np.linalg.norm(rest, 2, axis=(-2, -1))
    a = np.maximum(np.log(fwd), 0.0).max(axis=1)
    c = np.maximum(np.log(bwd), 0.0).max(axis=1)
    rng = np.random.Generator(np.random.PCG64(seed))

    def summary(v):
        idx = rng.integers(0, v.size, size=(n_boot, v.size))
        boots = v[idx].mean(axis=1)
        kurt = float(stats.kurtosis(v)) if np.ptp(v) > 0 else 0.0
        return {
            "mean": float(v.mean()),
            "ci": [float(np.quantile(boots, 0.025)), float(np.quantile(boots, 0.975))],
            "quantiles": {str(q): float(np.quantile(v, q)) for q in (0.5, 0.9, 0.99)},
            "max": float(v.max()),
            "excess_kurtosis": kurt,
            "heavy_tail_alarm": bool(kurt > 20.0),
            "finite": bool(np.all(np.isfinite(v))),
        }

    return {"n": len(paths), "t0": t0, "forward": summary(a), "backward": summary(c)}


def spectrum_report(spectrum: LyapunovSpectrum) -> dict:
    out = spectrum.to_json()
    out["classification_dims"] = {k: int(sum(spectrum.multiplicities[i] for i in v)) for k, v in spectrum.splitting.items()}
    return out
