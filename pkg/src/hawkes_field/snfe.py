"""Stochastic neural field equation and the first-order approximation ``u + n^{-1/2} Gamma``.

Mild form with noise amplitude ``n^{-1/2}``:

    V_t(x) = e^{-alpha t} u0(x) + int_0^t e^{-alpha (t-s)} int w(y, x) f(V_s(y)) dy ds
             + n^{-1/2} int_0^t e^{-alpha (t-s)} int w(y, x) sqrt(f(V_s(y))) W(ds, dy)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ModelParams, SpaceTimeGrid
from .gaussian_limit import (
    LimitFluctuationField,
    WhiteNoiseGrid,
    noise_increments,
    sample_white_noise,
    simulate_M,
    solve_limit_gamma,
)
from .nfe import Field, _drift_step, drift_operator, euler_solve, nfe_map

__all__ = [
    "SnfeSolution",
    "FirstOrderField",
    "CoupledDefect",
    "solve_snfe",
    "picard_snfe",
    "build_Yn",
    "coupled_defect",
    "coupled_defect_details",
    "DEFAULT_GRID",
]

DEFAULT_GRID = SpaceTimeGrid(64, 256, 1.0)


@dataclass(frozen=True)
class SnfeSolution:
    grid: SpaceTimeGrid
    n: float
    values: np.ndarray
    noise_seed: int = 0
    noise_checksum: str = ""


@dataclass(frozen=True)
class FirstOrderField:
    grid: SpaceTimeGrid
    n: float
    values: np.ndarray


def _amplitude(n) -> float:
    if n == math.inf:
        return 0.0
    if n < 1:
        raise ValueError("n must be >= 1 (or math.inf for the drift-only equation)")
    return 1.0 / math.sqrt(n)


def _require_floor(params: ModelParams):
    if not params.f.lower_bound > 0:
        raise ValueError("the stochastic neural field equation needs a firing rate bounded below by m > 0")


def solve_snfe(params: ModelParams, n, noise: WhiteNoiseGrid) -> SnfeSolution:
    """Exponential Euler-Maruyama with Ito (left-end) evaluation of the noise coefficient.

    ``n = math.inf`` switches the noise off and reproduces :func:`euler_solve` exactly.
    """
    _require_floor(params)
    amp = _amplitude(n)
    g = noise.grid
    K = drift_operator(params, g)
    Wg = params.w.matrix(g.y, g.y)
    decay = math.exp(-params.alpha * g.dt)
    scale = math.sqrt(g.dt * g.dx)
    f = params.f
    out = np.empty((g.n_time + 1, g.n_space))
    out[0] = params.u0.eval(g.y)
    for k in range(g.n_time):
        v = out[k]
        noise_k = ((np.sqrt(f.eval(v)) * noise.xi[k]) @ Wg) * scale
        out[k + 1] = _drift_step(v, decay, g.dt, f, K) + decay * amp * noise_k
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("SNFE solution became non-finite")
    return SnfeSolution(g, n, out, noise.seed, noise.checksum)


def picard_snfe(params: ModelParams, n, noise: WhiteNoiseGrid, iters: int) -> SnfeSolution:
    """Picard iterates of the mild form on a fixed noise realisation, from ``V^(0) = u0``.

    Drift integral by the trapezoid rule, stochastic integral with left-end coefficients.
    """
    _require_floor(params)
    if iters < 0:
        raise ValueError("iters must be >= 0")
    amp = _amplitude(n)
    g = noise.grid
    K = drift_operator(params, g)
    Wg = params.w.matrix(g.y, g.y)
    decay = math.exp(-params.alpha * g.dt)
    v = np.broadcast_to(params.u0.eval(g.y), (g.n_time + 1, g.n_space)).copy()
    for _ in range(iters):
        inc = noise_increments(np.sqrt(params.f.eval(v[:-1])), noise, Wg)
        stoch = np.zeros_like(v)
        for k in range(g.n_time):
            stoch[k + 1] = decay * (stoch[k] + amp * inc[k])
        v = nfe_map(v, params, g, K) + stoch
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("SNFE Picard iterate became non-finite")
    return SnfeSolution(g, n, v, noise.seed, noise.checksum)


def build_Yn(u: Field, gamma: LimitFluctuationField, n) -> FirstOrderField:
    if u.grid != gamma.grid:
        raise ValueError("u and gamma live on different grids")
    return FirstOrderField(u.grid, n, u.values + gamma.values / math.sqrt(n))


@dataclass(frozen=True)
class CoupledDefect:
    n: float
    seed: int
    sup_sq_defect: float
    sup_sq_meanfield: float
    noise_checksum: str
    defect: np.ndarray


def coupled_defect_details(params: ModelParams, n, seed: int, grid: SpaceTimeGrid = DEFAULT_GRID,
                           u: Field | None = None) -> CoupledDefect:
    """One white-noise draw shared by ``M``, ``Gamma`` and ``V^n``; defect ``Y^n - V^n``.

    ``u`` defaults to the exponential-Euler NFE solution on ``grid``, the drift-only
    limit of the same scheme, so the zero-noise defect vanishes identically.
    """
    _require_floor(params)
    if u is None:
        u = euler_solve(params, grid)
    noise = sample_white_noise(grid, seed)
    M = simulate_M(u, params, noise)
    gamma = solve_limit_gamma(M, u, params)
    Y = build_Yn(u, gamma, n)
    V = solve_snfe(params, n, noise)
    if not (M.noise_checksum == gamma.noise_checksum == V.noise_checksum == noise.checksum):
        raise AssertionError("M, Gamma and V^n did not consume the same white noise")
    D = Y.values - V.values
    return CoupledDefect(n, int(seed), float(np.max(D * D)), float(np.max((V.values - u.values) ** 2)),
                         noise.checksum, D)


def coupled_defect(params: ModelParams, n, seed: int, grid: SpaceTimeGrid = DEFAULT_GRID,
                   u: Field | None = None) -> float:
    """Grid sup of the squared defect ``(Y^n - V^n)^2`` for one noise seed."""
    return coupled_defect_details(params, n, seed, grid, u).sup_sq_defect
