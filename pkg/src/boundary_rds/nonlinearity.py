"""Nemytskii nonlinearities acting on spectral coefficients by collocation.

A pointwise map g is applied on a 4N-point midpoint grid of (0, pi): the
coefficients are synthesized into grid values, g is applied, and the result is
projected back onto the first N modes.  The midpoint rule integrates products
of two retained modes exactly, so synthesis followed by projection is the
identity on the truncated space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

_TANH_D2 = 4.0 / (3.0 * math.sqrt(3.0))  # sup |tanh''|


@lru_cache(maxsize=None)
def collocation(n_modes: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid points, synthesis matrix (M, N) and projection matrix (N, M)."""
    m = 4 * n_modes
    x = (np.arange(m) + 0.5) * math.pi / m
    k = np.arange(n_modes)
    synth = np.cos(np.outer(x, k)) * np.where(k == 0, 1.0 / math.sqrt(math.pi), math.sqrt(2.0 / math.pi))
    proj = synth.T * (math.pi / m)
    for arr in (x, synth, proj):
        arr.setflags(write=False)
    return x, synth, proj


def grid_values(coeffs: np.ndarray) -> np.ndarray:
    _, synth, _ = collocation(coeffs.shape[-1])
    return coeffs @ synth.T


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """Mode-space nonlinearity with the constants the bounds need.

    lipschitz  global Lipschitz constant L of the mode-space map
    bound      sup ||G|| (inf when unbounded)
    growth     (kappa1, kappa2) with ||G(h)|| <= kappa1 + kappa2 ||h||
    deriv_poly coefficients of p with ||DG(h)|| <= p(||h||)
    holder     (r, Q) Hoelder exponent of DG and polynomial coefficients of its
               modulus, or None when DG is not Hoelder
    """

    name: str
    params: dict
    pointwise: Optional[Callable] = None
    dpointwise: Optional[Callable] = None
    linear_coeff: Optional[float] = None
    offset: Optional[np.ndarray] = None
    lipschitz: float = 0.0
    bound: float = 0.0
    growth: tuple = (0.0, 0.0)
    deriv_poly: tuple = (0.0,)
    holder: Optional[tuple] = None
    d2_bound: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def is_zero(self) -> bool:
        return self.pointwise is None and self.linear_coeff is None and self.offset is None

    @property
    def is_affine(self) -> bool:
        return self.pointwise is None

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.linear_coeff is not None:
            out = self.linear_coeff * x
        elif self.pointwise is not None:
            _, synth, proj = collocation(x.shape[-1])
            out = self.pointwise(x @ synth.T) @ proj.T
        else:
            out = np.zeros_like(x)
        if self.offset is not None:
            out = out + self.offset
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        if self.linear_coeff is not None:
            return np.broadcast_to(self.linear_coeff * np.eye(n), x.shape[:-1] + (n, n)).copy()
        if self.pointwise is None:
            return np.zeros(x.shape[:-1] + (n, n))
        _, synth, proj = collocation(n)
        d = self.dpointwise(x @ synth.T)  # (..., M)
        return proj @ (d[..., :, None] * synth)

    def deriv_bound(self, r: float) -> float:
        return float(sum(c * r**i for i, c in enumerate(self.deriv_poly)))

    def jacobian_lipschitz(self, n_modes: int) -> Optional[float]:
        """Lipschitz constant of h -> DG(h) in operator norm, via sup|g''| and the sup-norm of modes."""
        if self.is_affine:
            return 0.0
        if self.d2_bound is None:
            return None
        return self.d2_bound * math.sqrt(1.0 / math.pi + 2.0 * (n_modes - 1) / math.pi)


def zero() -> Nonlinearity:
    return Nonlinearity("zero", {}, holder=(1.0, (0.0,)))


def linear(c: float) -> Nonlinearity:
    c = float(c)
    return Nonlinearity(
        "linear",
        {"c": c},
        linear_coeff=c,
        lipschitz=abs(c),
        bound=math.inf if c != 0 else 0.0,
        growth=(0.0, abs(c)),
        deriv_poly=(abs(c),),
        holder=(1.0, (0.0,)),
    )


def scaled_tanh(a: float) -> Nonlinearity:
    """g(u) = a tanh(u) pointwise."""
    a = float(a)
    return Nonlinearity(
        "scaled_tanh",
        {"a": a},
        pointwise=lambda u: a * np.tanh(u),
        dpointwise=lambda u: a / np.cosh(u) ** 2,
        lipschitz=abs(a),
        bound=abs(a) * math.sqrt(math.pi),
        growth=(0.0, abs(a)),
        deriv_poly=(abs(a),),
        holder=(1.0, (abs(a) * _TANH_D2,)),
        d2_bound=abs(a) * _TANH_D2,
    )


def custom_table(xs, ys) -> Nonlinearity:
    """Piecewise-linear g through the given nodes, constant beyond them (Lipschitz, not C^1)."""
    xs = np.array(xs, dtype=float)
    ys = np.array(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ValueError("custom table needs increasing x nodes and matching y values")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("custom table values must be finite")
    slopes = np.diff(ys) / np.diff(xs)
    lip = float(np.abs(slopes).max())
    sup = float(np.abs(ys).max())

    def g(u):
        return np.interp(u, xs, ys)

    def dg(u):
        idx = np.clip(np.searchsorted(xs, u, side="right") - 1, 0, slopes.size - 1)
        inside = (u >= xs[0]) & (u <= xs[-1])
        return np.where(inside, slopes[idx], 0.0)

    return Nonlinearity(
        "custom",
        {"x": xs.tolist(), "y": ys.tolist()},
        pointwise=g,
        dpointwise=dg,
        lipschitz=lip,
        bound=sup * math.sqrt(math.pi),
        growth=(sup * math.sqrt(math.pi), 0.0),
        deriv_poly=(lip,),
        holder=None,
    )


def constant_mode(value: float, mode: int, n_modes: int) -> Nonlinearity:
    """Constant forcing value * e_mode."""
    off = np.zeros(n_modes)
    off[mode] = float(value)
    off.setflags(write=False)
    return Nonlinearity(
        "constant_mode",
        {"value": float(value), "mode": int(mode)},
        offset=off,
        lipschitz=0.0,
        bound=abs(float(value)),
        growth=(abs(float(value)), 0.0),
        deriv_poly=(0.0,),
        holder=(1.0, (0.0,)),
    )


def from_config(block: dict, n_modes: int) -> Nonlinearity:
    preset = block.get("preset", "zero")
    if preset == "zero":
        return zero()
    if preset == "linear":
        return linear(block["c"])
    if preset == "scaled_tanh":
        return scaled_tanh(block["a"])
    if preset == "custom":
        return custom_table(block["table"]["x"], block["table"]["y"])
    if preset == "constant_mode":
        return constant_mode(block["value"], block.get("mode", 1), n_modes)
    raise ValueError(f"unknown nonlinearity preset {preset!r}")
