"""Stationary orbits and their block-wise linearization on a t0 grid.

Shared by the Lyapunov estimator and the manifold constructions: both walk
along Z_{theta_{k t0} omega} and need, for every block k, the time-t0 map
started at Z_k together with its derivative Psi_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cocycle_solver import propagate
from .errors import HorizonError
from .noise_shift import PathLike, node_index, ou_series
from .nonlinearity import Nonlinearity
from .spectral_core import SpectralModel, StateVector
from .variational import jacobian_along


@dataclass
class StationaryPoint:
    Z: StateVector
    window: float
    residual: float
    contraction_margin: float
    paper_margin: float
    times: np.ndarray  # grid times of the stored orbit (path-relative)
    orbit: np.ndarray  # X = V + Y on that grid
    dt: float
    path_offset: float = 0.0
    meta: dict = field(default_factory=dict)

    def index(self, t: float) -> int:
        k = (t - self.times[0]) / self.dt
        kr = int(round(k))
        if abs(k - kr) > 1e-9 * max(1.0, abs(k)) or not 0 <= kr < self.times.size:
            raise HorizonError(f"t={t} outside the stored stationary orbit [{self.times[0]}, {self.times[-1]}]")
        return kr

    def at(self, t: float) -> StateVector:
        return StateVector(self.orbit[self.index(t)])

    def covers(self, t_lo: float, t_hi: float) -> bool:
        eps = 1e-9 * self.dt
        return self.times[0] <= t_lo + eps and t_hi - eps <= self.times[-1]


def steps_per_block(dt: float, t0: float) -> int:
    k = t0 / dt
    kr = int(round(k))
    if kr < 1 or abs(k - kr) > 1e-9 * k:
        raise HorizonError(f"t0={t0} is not a positive multiple of dt={dt}")
    return kr


@dataclass
class BlockData:
    k_lo: int
    k_hi: int
    steps: int
    t0: float
    Z: np.ndarray  # (K+1, N) orbit at block boundaries k_lo..k_hi
    Y: np.ndarray  # (K, steps+1, N) OU segments per block
    dt: float


def block_data(model: SpectralModel, path: PathLike, sp: StationaryPoint, t0: float, k_lo: int, k_hi: int) -> BlockData:
    if abs(sp.dt - path.dt) > 1e-15:
        raise ValueError("stationary orbit and path use different grids")
    s = steps_per_block(path.dt, t0)
    t_lo, t_hi = k_lo * s * path.dt, k_hi * s * path.dt
    if not sp.covers(t_lo, t_hi):
        raise HorizonError(
            f"stationary orbit covers [{sp.times[0]}, {sp.times[-1]}], blocks need [{t_lo}, {t_hi}]"
        )
    node_index(path, t_lo)
    node_index(path, t_hi)
    y = ou_series(model, path, t_lo, t_hi)
    i0 = sp.index(t_lo)
    z = sp.orbit[i0 : i0 + (k_hi - k_lo) * s + 1 : s]
    segs = sliding_window_view(y, (s + 1, model.n_modes))[::s, 0]  # (K, s+1, N)
    return BlockData(k_lo, k_hi, s, t0, np.array(z), np.array(segs), path.dt)


def block_states(model: SpectralModel, nonlin: Nonlinearity, starts: np.ndarray, Y: np.ndarray, dt: float):
    """Run each block from its start state; returns X histories (B, s+1, N)."""
    _, hist, _ = propagate(model, nonlin, starts - Y[:, 0], Y, dt, record=True)
    return hist + Y


def block_maps(model: SpectralModel, nonlin: Nonlinearity, starts: np.ndarray, Y: np.ndarray, dt: float) -> np.ndarray:
    """Time-t0 map of each block applied to its start state, (B, N)."""
    v, _, _ = propagate(model, nonlin, starts - Y[:, 0], Y, dt)
    return v + Y[:, -1]


def block_linearization(model: SpectralModel, nonlin: Nonlinearity, bd: BlockData, chunk: int = 4096):
    """Psi_k = D phi~^{t0}_{theta_{k t0} omega}(Z_k) and phi~^{t0}(Z_k) for all blocks."""
    K = bd.k_hi - bd.k_lo
    psi = np.empty((K, model.n_modes, model.n_modes))
    ends = np.empty((K, model.n_modes))
    for a in range(0, K, chunk):
        b = min(K, a + chunk)
        X = block_states(model, nonlin, bd.Z[a:b], bd.Y[a:b], bd.dt)
        ends[a:b] = X[:, -1]
        psi[a:b] = jacobian_along(model, nonlin, X, bd.dt)
    return psi, ends
