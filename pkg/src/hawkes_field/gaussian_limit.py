"""Limit Gaussian martingale ``M`` and limit fluctuation field ``Gamma`` on the grid.

Pointwise forms driven by space-time white noise ``W``:

    M_t(x)     = int_0^t int_0^1 e^{alpha s} w(y, x) sqrt(f(u(s, y))) W(ds, dy)
    Gamma_t(x) = e^{-alpha t} M_t(x) + int_0^t e^{-alpha (t-s)} int_0^1 w(y, x) f'(u(s, y)) Gamma_s(y) dy ds
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .core import ModelParams, SpaceTimeGrid, TestFunction, eval_I, exp_trapezoid_integral
from .nfe import Field, drift_operator

__all__ = [
    "WhiteNoiseGrid",
    "GaussianPathM",
    "LimitFluctuationField",
    "sample_white_noise",
    "noise_increments",
    "simulate_M",
    "covariance_M",
    "solve_limit_gamma",
    "project",
    "gamma_residual",
    "weak_form_residual",
]


@dataclass(frozen=True)
class WhiteNoiseGrid:
    """Independent standard normals ``xi[k, g]``; cell ``(k, g)`` carries ``W = xi sqrt(dt dx)``."""

    grid: SpaceTimeGrid
    xi: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.xi.shape != (self.grid.n_time, self.grid.n_space):
            raise ValueError("noise shape does not match grid")

    @property
    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.xi).tobytes()).hexdigest()[:16]

    def coarsened(self, factor: int = 2) -> "WhiteNoiseGrid":
        """Same realisation of ``W`` on a grid with ``factor`` times fewer time cells."""
        g = self.grid
        if g.n_time % factor:
            raise ValueError("factor must divide the number of time cells")
        xi = self.xi.reshape(g.n_time // factor, factor, g.n_space).sum(axis=1) / math.sqrt(factor)
        return WhiteNoiseGrid(SpaceTimeGrid(g.n_space, g.n_time // factor, g.horizon), xi, self.seed)


@dataclass(frozen=True)
class GaussianPathM:
    grid: SpaceTimeGrid
    values: np.ndarray
    noise_checksum: str = ""


@dataclass(frozen=True)
class LimitFluctuationField:
    grid: SpaceTimeGrid
    values: np.ndarray
    noise_checksum: str = ""


def sample_white_noise(grid: SpaceTimeGrid, seed: int) -> WhiteNoiseGrid:
    rng = np.random.Generator(np.random.Philox(int(seed)))
    return WhiteNoiseGrid(grid, rng.standard_normal((grid.n_time, grid.n_space)), int(seed))


def noise_increments(amplitude: np.ndarray, noise: WhiteNoiseGrid, Wg: np.ndarray) -> np.ndarray:
    """``sum_h w(y_h, y_g) amplitude[k, h] W(cell k, h)`` for each step ``k`` (shape ``(K, G)``)."""
    g = noise.grid
    return ((amplitude * noise.xi) @ Wg) * math.sqrt(g.dt * g.dx)


def _check_grid(a: SpaceTimeGrid, b: SpaceTimeGrid):
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


def simulate_M(u: Field, params: ModelParams, noise: WhiteNoiseGrid) -> GaussianPathM:
    """Walsh-integral increments with the ``e^{alpha s}`` factor at the left end of each cell."""
    g = u.grid
    _check_grid(g, noise.grid)
    Wg = params.w.matrix(g.y, g.y)
    rate = params.f.eval(u.values[:-1])
    if np.any(rate < 0):
        raise ValueError("negative firing rate on the NFE solution")
    inc = noise_increments(np.sqrt(rate), noise, Wg) * np.exp(params.alpha * g.t[:-1])[:, None]
    vals = np.zeros((g.n_time + 1, g.n_space))
    np.cumsum(inc, axis=0, out=vals[1:])
    if not np.all(np.isfinite(vals)):
        raise FloatingPointError("M path became non-finite")
    return GaussianPathM(g, vals, noise.checksum)


def covariance_M(phi1: TestFunction, phi2: TestFunction, t1: float, t2: float, u: Field, params: ModelParams,
                 quad_points: int = 256) -> float:
    """``E[M_t1(phi1) M_t2(phi2)] = int_0^{t1 ^ t2} int_0^1 e^{2 alpha s} I[phi1] I[phi2] f(u(s, y)) dy ds``.

    Space: midpoint-node quadrature on the grid. Time: trapezoid with the
    exponential factor integrated exactly.
    """
    g = u.grid
    k = min(g.time_index(t1), g.time_index(t2))
    i1 = eval_I(phi1, params.w, g.y, quad_points)
    i2 = i1 if phi2 is phi1 else eval_I(phi2, params.w, g.y, quad_points)
    h = params.f.eval(u.values[: k + 1]) @ (g.weights * i1 * i2)
    tk = g.t[k]
    return float(math.exp(2.0 * params.alpha * tk) * exp_trapezoid_integral(h, g.dt, 2.0 * params.alpha)[k])


def solve_limit_gamma(M: GaussianPathM, u: Field, params: ModelParams) -> LimitFluctuationField:
    """Exponential-Euler recursion for the pointwise limit fluctuation field."""
    g = u.grid
    _check_grid(g, M.grid)
    K = drift_operator(params, g)
    decay = math.exp(-params.alpha * g.dt)
    fp = params.f.deriv(u.values)
    dM = np.diff(M.values, axis=0) * np.exp(-params.alpha * g.t[1:])[:, None]
    out = np.zeros((g.n_time + 1, g.n_space))
    for k in range(g.n_time):
        out[k + 1] = decay * (out[k] + g.dt * ((fp[k] * out[k]) @ K)) + dM[k]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("Gamma became non-finite")
    return LimitFluctuationField(g, out, M.noise_checksum)


def project(field, phi: TestFunction, t: float) -> float:
    """Midpoint projection ``sum_g phi(y_g) field(t, y_g) dx``."""
    g = field.grid
    k = g.time_index(t)
    return float(field.values[k] @ phi.eval(g.y) * g.dx)


def gamma_residual(gamma: LimitFluctuationField, M: GaussianPathM, u: Field, params: ModelParams) -> float:
    """Grid sup of ``Gamma - e^{-alpha t} M - int e^{-alpha(t-s)} (drift)`` with trapezoid time quadrature."""
    g = u.grid
    K = drift_operator(params, g)
    drift = (params.f.deriv(u.values) * gamma.values) @ K
    integral = _trapezoid_decayed(drift, g.dt, params.alpha)
    res = gamma.values - np.exp(-params.alpha * g.t)[:, None] * M.values - integral
    return float(np.abs(res).max())


def weak_form_residual(gamma: LimitFluctuationField, M: GaussianPathM, u: Field, params: ModelParams,
                       phi: TestFunction, quad_points: int = 256) -> float:
    """Sup over grid times of the projected limit equation residual for one test function.

    The drift test function ``y -> f'(u(s, y)) int_0^1 phi(x) w(y, x) dx`` is built by Simpson quadrature.
    """
    g = u.grid
    ip = eval_I(phi, params.w, g.y, quad_points)
    psi = params.f.deriv(u.values) * ip[None, :]
    drift = np.sum(psi * gamma.values, axis=1) * g.dx
    integral = _trapezoid_decayed(drift, g.dt, params.alpha)
    proj_gamma = gamma.values @ phi.eval(g.y) * g.dx
    proj_m = M.values @ phi.eval(g.y) * g.dx
    res = proj_gamma - np.exp(-params.alpha * g.t) * proj_m - integral
    return float(np.abs(res).max())


def _trapezoid_decayed(h, dt, alpha):
    decay = math.exp(-alpha * dt)
    out = np.empty_like(h)
    out[0] = 0.0
    for k in range(1, h.shape[0]):
        out[k] = decay * out[k - 1] + 0.5 * dt * (decay * h[k - 1] + h[k])
    return out
