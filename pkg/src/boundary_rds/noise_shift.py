"""Two-sided boundary noise, the Wiener shift, and the stationary OU process Y.

A path stores increments on a fixed grid.  Node j sits at time
t_minus + j*dt and increment i covers [node i, node i+1].  Shifting by s only
moves the index of time zero, so the shifted view shares the increment array
and every shift identity is an array offset.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.signal import lfilter

from .errors import HorizonError
from .spectral_core import SpectralModel, StateVector, phi1

_MAGIC = b"BRDSNP01"
_HEADER = struct.Struct("<8sdddIQQ")


def _grid_steps(x: float, dt: float, what: str) -> int:
    k = x / dt
    kr = round(k)
    if abs(k - kr) > 1e-9 * max(1.0, abs(k)):
        raise HorizonError(f"{what}={x} is not a multiple of dt={dt}")
    return int(kr)


@dataclass(frozen=True, eq=False)
class NoisePath:
    dt: float
    t_minus: float
    t_plus: float
    increments: np.ndarray  # (n_steps, n_channels)
    q: np.ndarray
    seed: int

    @property
    def base(self) -> "NoisePath":
        return self

    @property
    def offset_steps(self) -> int:
        return 0

    @property
    def offset(self) -> float:
        return 0.0

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def n_channels(self) -> int:
        return self.increments.shape[1]

    @property
    def zero_index(self) -> int:
        return int(round(-self.t_minus / self.dt))


@dataclass(frozen=True, eq=False)
class ShiftView:
    """Read-only window realizing theta_s on a base path."""

    base: NoisePath
    offset_steps: int

    @property
    def offset(self) -> float:
        return self.offset_steps * self.base.dt

    @property
    def dt(self) -> float:
        return self.base.dt

    @property
    def increments(self) -> np.ndarray:
        return self.base.increments

    @property
    def q(self) -> np.ndarray:
        return self.base.q

    @property
    def seed(self) -> int:
        return self.base.seed

    @property
    def n_steps(self) -> int:
        return self.base.n_steps

    @property
    def n_channels(self) -> int:
        return self.base.n_channels

    @property
    def zero_index(self) -> int:
        return self.base.zero_index + self.offset_steps

    @property
    def t_minus(self) -> float:
        return -self.zero_index * self.dt

    @property
    def t_plus(self) -> float:
        return (self.n_steps - self.zero_index) * self.dt


PathLike = Union[NoisePath, ShiftView]


# ---------------------------------------------------------------------------
# sampling and seeds


def sample_path(model: SpectralModel, dt: float, t_minus: float, t_plus: float, q, seed: int) -> NoisePath:
    """Gaussian increments with variance q_ch*dt on every channel, reproducible from seed."""
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError("dt must be positive and finite")
    if not (math.isfinite(t_minus) and math.isfinite(t_plus)) or not (t_minus < 0 < t_plus):
        raise ValueError("need t_minus < 0 < t_plus")
    qv = np.array(q, dtype=float).reshape(-1)
    if qv.size == 1:
        qv = np.repeat(qv, model.n_channels)
    if qv.size != model.n_channels or not np.all(np.isfinite(qv)) or np.any(qv < 0):
        raise ValueError("q must hold one finite non-negative weight per boundary channel")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    n_minus = _grid_steps(-t_minus, dt, "t_minus")
    n_plus = _grid_steps(t_plus, dt, "t_plus")
    rng = np.random.Generator(np.random.PCG64(seed))
    z = rng.standard_normal((n_minus + n_plus, qv.size))
    inc = z * np.sqrt(qv * dt)
    inc.setflags(write=False)
    qv.setflags(write=False)
    return NoisePath(float(dt), -n_minus * float(dt), n_plus * float(dt), inc, qv, seed)


def zero_path(model: SpectralModel, dt: float, t_minus: float, t_plus: float) -> NoisePath:
    return sample_path(model, dt, t_minus, t_plus, np.zeros(model.n_channels), 0)


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Independent 64-bit replica seeds derived from one root seed."""
    children = np.random.SeedSequence(int(seed)).spawn(int(n))
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def coarsen(path: NoisePath, factor: int) -> NoisePath:
    """Same Brownian path on a grid factor times coarser (increments summed)."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if path.zero_index % factor or path.n_steps % factor:
        raise HorizonError("horizon does not align with the coarse grid")
    inc = path.increments.reshape(-1, factor, path.n_channels).sum(axis=1)
    inc.setflags(write=False)
    return NoisePath(path.dt * factor, path.t_minus, path.t_plus, inc, path.q, path.seed)


# ---------------------------------------------------------------------------
# shift and Wiener values


def shift(path: PathLike, s: float) -> ShiftView:
    k = _grid_steps(s, path.dt, "shift")
    new = path.offset_steps + k
    z = path.base.zero_index + new
    if not 0 <= z <= path.base.n_steps:
        raise HorizonError(f"shift by {s} leaves the path horizon")
    return ShiftView(path.base, new)


def node_index(path: PathLike, t: float) -> int:
    """Absolute node index of the path-relative grid time t."""
    j = path.zero_index + _grid_steps(t, path.dt, "t")
    if not 0 <= j <= path.n_steps:
        raise HorizonError(f"t={t} outside horizon [{path.t_minus}, {path.t_plus}]")
    return j


def increments_between(path: PathLike, t_from: float, t_to: float) -> np.ndarray:
    i0, i1 = node_index(path, t_from), node_index(path, t_to)
    if i1 < i0:
        raise ValueError("t_to must not precede t_from")
    return path.increments[i0:i1]


def wiener_value(path: PathLike, t: float) -> np.ndarray:
    """W_t of the (possibly shifted) path, W_0 = 0."""
    j, z = node_index(path, t), path.zero_index
    if j >= z:
        return path.increments[z:j].sum(axis=0)
    return -path.increments[j:z].sum(axis=0)


# ---------------------------------------------------------------------------
# stationary Ornstein-Uhlenbeck process


def ou_gain(model: SpectralModel, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-step decay r_k and noise gain c_k of the retained (dissipative) modes.

    c_k^2 = (e^{2 a dt} - 1)/(2 a dt) makes the one-step variance exact, so the
    recursion reproduces the continuous stationary law for any dt.  Modes with
    a_k >= 0 get r = c = 0: they are projected out of Y.
    """
    a = model.drift
    keep = a < 0
    r = np.where(keep, np.exp(a * dt), 0.0)
    c = np.where(keep, np.sqrt(phi1(2.0 * a * dt)), 0.0)
    return r, c


def _ou_forcing(model: SpectralModel, inc: np.ndarray, dt: float) -> np.ndarray:
    _, c = ou_gain(model, dt)
    cpl = model.boundary_coupling
    # elementwise products keep each entry independent of the array length
    f = np.zeros((inc.shape[0], model.n_modes))
    for ch in range(inc.shape[1]):
        f += inc[:, ch : ch + 1] * cpl[None, :, ch]
    return f * c[None, :]


def _ou_nodes(model: SpectralModel, path: PathLike, j_start: int, j_end: int) -> np.ndarray:
    """Y at absolute nodes j_start..j_end, recursion started from 0 at j_start."""
    r, _ = ou_gain(model, path.dt)
    f = _ou_forcing(model, path.increments[j_start:j_end], path.dt)
    out = np.zeros((j_end - j_start + 1, model.n_modes))
    for k in range(model.n_modes):
        if r[k] == 0.0 or f.shape[0] == 0:
            continue
        out[1:, k] = lfilter([1.0], [1.0, -r[k]], f[:, k])
    return out


def _start_node(path: PathLike, j: int, window) -> int:
    if window is None:
        return 0
    w = _grid_steps(window, path.dt, "window")
    j0 = j - w
    if j0 < 0:
        raise HorizonError("truncation window exceeds the available history")
    return j0


def ou_series(model: SpectralModel, path: PathLike, t_start: float, t_end: float, window=None) -> np.ndarray:
    """Y_omega at every grid time in [t_start, t_end], shape (steps+1, N).

    With window=None the recursion always starts at the first node of the base
    array, so shifted views reproduce the base values bit for bit.
    """
    j0, j1 = node_index(path, t_start), node_index(path, t_end)
    if j1 < j0:
        raise ValueError("t_end must not precede t_start")
    s = _start_node(path, j0, window)
    return _ou_nodes(model, path, s, j1)[j0 - s :]


def ou_eval(model: SpectralModel, path: PathLike, t: float, window=None) -> StateVector:
    return StateVector(ou_series(model, path, t, t, window)[0])


def history_length(path: PathLike, t: float, window=None) -> float:
    j = node_index(path, t)
    return (j - _start_node(path, j, window)) * path.dt


def truncation_bound(model: SpectralModel, path: PathLike, t: float, window=None) -> float:
    """max_k e^{a_k * history} over retained modes: relative memory left out of Y(t)."""
    h = history_length(path, t, window)
    a = model.drift[model.dissipative]
    if a.size == 0:
        return 0.0
    return float(np.exp(a.max() * h))


def required_window(model: SpectralModel, tol: float = 1e-10) -> float:
    """History length after which the slowest retained mode has forgotten its start."""
    a = model.drift[model.dissipative]
    if a.size == 0:
        return 0.0
    return float(math.log(tol) / a.max())


def stationarity_residual(model: SpectralModel, path: PathLike, s: float, t: float, window=None) -> float:
    """||Y_{theta_t omega}(s) - Y_omega(t+s)||; window truncates the shifted evaluation only."""
    lhs = ou_eval(model, shift(path, t), s, window)
    rhs = ou_eval(model, path, t + s)
    return float(np.linalg.norm(lhs.coeffs - rhs.coeffs))


def stationarity_bound(model: SpectralModel, path: PathLike, s: float, t: float, window: float) -> float:
    """Upper bound for the residual under a truncated window: the neglected memory term."""
    view = shift(path, t)
    j = node_index(view, s)
    j0 = _start_node(view, j, window)
    y_then = _ou_nodes(model, view, 0, j0)[-1]
    a = np.where(model.dissipative, model.drift, -np.inf)
    return float(np.exp(a * window).max() * np.linalg.norm(y_then) * (1 + 1e-12) + 1e-15)


# ---------------------------------------------------------------------------
# persistence


def save_path(path: NoisePath, file) -> None:
    if not isinstance(path, NoisePath):
        raise TypeError("only base paths are persisted; store the offset of a view separately")
    header = _HEADER.pack(_MAGIC, path.dt, path.t_minus, path.t_plus, path.n_channels, path.n_steps, path.seed)
    with open(file, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(path.q, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def load_path(file) -> NoisePath:
    raw = Path(file).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated noise path file")
    magic, dt, t_minus, t_plus, n_ch, n_steps, seed = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError("not a noise path file")
    off = _HEADER.size
    q = np.frombuffer(raw, dtype="<f8", count=n_ch, offset=off).astype(float)
    off += 8 * n_ch
    if len(raw) != off + 8 * n_ch * n_steps:
        raise ValueError("noise path file size does not match its header")
    inc = np.frombuffer(raw, dtype="<f8", count=n_ch * n_steps, offset=off).astype(float).reshape(n_steps, n_ch)
    inc.setflags(write=False)
    q.setflags(write=False)
    return NoisePath(dt, t_minus, t_plus, inc, q, seed)
