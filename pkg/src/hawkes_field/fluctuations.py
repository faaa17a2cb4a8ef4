"""Microscopic fluctuations of a Hawkes run around the mean-field limit.

Quantities are computed from an :class:`EventLog` and an NFE :class:`Field`:
the individual fluctuations ``eta^i_t = sqrt(n) (U^i_t - u(t, x_i))``, their
spatial projections ``Gamma^n_t(phi)``, the split ``eta = A + B + C``, the
local martingale ``M^n_t(phi)`` and its angle bracket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import ModelParams, TestFunction, exp_trapezoid_integral
from .hawkes import EventLog, coupling_matrix, intensity_integrals, intensity_integrals_multi, positions, potentials_at
from .nfe import Field

__all__ = [
    "FluctuationSample",
    "Decomposition",
    "DegenerateFit",
    "u_at_neurons",
    "compute_eta",
    "gamma_n",
    "constant_rate_gamma_mean",
    "fluctuation_sample",
    "decompose",
    "riemann_gap",
    "martingale_Mn",
    "angle_bracket",
    "martingale_probes",
    "max_martingale_jump",
    "c_term_bound_check",
]


class DegenerateFit(ValueError):
    """All values of a rate fit are zero, so no slope exists."""


@dataclass(frozen=True)
class FluctuationSample:
    t: float
    eta: np.ndarray
    gamma: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Decomposition:
    t: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.A + self.B + self.C


def u_at_neurons(u: Field, n: int, k=None) -> np.ndarray:
    """Cubic-spline interpolation of the field from cell midpoints to ``x_i = i/n``.

    Returns all time rows, or row ``k`` only.
    """
    vals = u.values if k is None else u.values[k]
    spline = CubicSpline(u.grid.y, vals, axis=-1)
    return spline(positions(n))


def compute_eta(log: EventLog, u: Field, params: ModelParams, t: float) -> np.ndarray:
    k = u.grid.time_index(t)
    return math.sqrt(log.n) * (potentials_at(log, params, t) - u_at_neurons(u, log.n, k))


def gamma_n(eta: np.ndarray, phi: TestFunction) -> float:
    """``Gamma^n_t(phi) = n^-1 sum_i eta_i phi(x_i)``."""
    n = eta.size
    return float(np.mean(eta * phi.eval(positions(n))))


def constant_rate_gamma_mean(params: ModelParams, u: Field, n: int, phi: TestFunction, t: float) -> float:
    """Exact ``E[Gamma^n_t(phi)]`` when ``f`` is constant: spikes are then Poisson at rate ``c``.

    ``E[U^i_t] = e^{-alpha t} u0(x_i) + c (1 - e^{-alpha t}) / alpha * sum_j w(x_j, x_i) / n``.
    """
    if params.f.kind != "constant":
        raise ValueError("closed-form mean needs a constant firing rate")
    c = float(params.f.eval(np.zeros(1))[0])
    a = params.alpha
    x = positions(n)
    mean_u = math.exp(-a * t) * params.u0.eval(x) + c * -math.expm1(-a * t) / a * coupling_matrix(params.w, n).sum(axis=0)
    eta = math.sqrt(n) * (mean_u - u_at_neurons(u, n, u.grid.time_index(t)))
    return gamma_n(eta, phi)


def fluctuation_sample(log, u, params, t, phis) -> FluctuationSample:
    eta = compute_eta(log, u, params, t)
    return FluctuationSample(t, eta, {phi.label: gamma_n(eta, phi) for phi in phis})


def _limit_rate_integral(u: Field, params: ModelParams, n: int, k: int) -> np.ndarray:
    """``L_j = int_0^{t_k} e^{-alpha (t_k - s)} f(u(s, x_j)) ds`` (product trapezoid in time)."""
    fu = params.f.eval(u_at_neurons(u, n)[: k + 1])
    return exp_trapezoid_integral(fu, u.grid.dt, params.alpha)[k]


def decompose(log: EventLog, u: Field, params: ModelParams, t: float, quad_tol: float = 1e-11) -> Decomposition:
    """Split ``eta^i_t`` into the martingale, nonlinear and deterministic terms.

    ``A`` is the event sum minus the compensator quadrature. The limit integral
    inside ``C`` is taken from the NFE identity
    ``int_0^t e^{-alpha(t-s)} int w(y, x_i) f(u(s, y)) dy ds = u(t, x_i) - e^{-alpha t} u0(x_i)``
    with the same interpolated ``u`` that enters ``eta``.
    """
    n = log.n
    k = u.grid.time_index(t)
    a = params.alpha
    W = coupling_matrix(params.w, n) * n  # W[j, i] = w(x_j, x_i)
    mask = log.times <= t
    ev = np.bincount(log.neurons[mask] - 1, weights=np.exp(a * log.times[mask]), minlength=n)
    J = intensity_integrals(log, params, t, beta=a, quad_tol=quad_tol)
    L = _limit_rate_integral(u, params, n, k)
    rn = math.sqrt(n)
    A = math.exp(-a * t) / rn * ((ev - J) @ W)
    B = (math.exp(-a * t) * J - L) @ W / rn
    x = positions(n)
    u_t = u_at_neurons(u, n, k)
    C = rn * ((L @ W) / n - (u_t - math.exp(-a * t) * params.u0.eval(x)))
    return Decomposition(t, A, B, C)


def riemann_gap(params: ModelParams, u: Field, n: int) -> np.ndarray:
    """``C^i_t`` for every grid time, from the Riemann gap ``g(s, x_i) - int w(y, x_i) f(u(s, y)) dy``.

    The inner integral uses the grid's midpoint quadrature; shape ``(K+1, n)``.
    """
    g = u.grid
    x = positions(n)
    W = coupling_matrix(params.w, n) * n
    riemann = params.f.eval(u_at_neurons(u, n)) @ W / n
    quad = params.f.eval(u.values) @ (g.weights[:, None] * params.w.matrix(g.y, x))
    return math.sqrt(n) * exp_trapezoid_integral(riemann - quad, g.dt, params.alpha)


def _fit_slope(ns, vals):
    from .harness.stats import fit_loglog_slope

    return fit_loglog_slope(list(zip(ns, vals)))


def c_term_bound_check(params: ModelParams, u: Field, phi: TestFunction, n_list, zero_tol: float = 1e-12):
    """Fitted log-log slope of ``sup_t |C^n_t(phi)|`` against ``n``.

    Returns ``(slope, stderr, values)``; raises :class:`DegenerateFit` when every value vanishes.
    """
    n_list = list(n_list)
    if len(n_list) < 3:
        raise ValueError("need at least three values of n")
    vals = []
    for n in n_list:
        c = riemann_gap(params, u, n)
        vals.append(float(np.abs(c @ phi.eval(positions(n)) / n).max()))
    if max(vals) <= zero_tol:
        raise DegenerateFit(f"sup |C^n(phi)| vanishes for every n in {n_list}")
    slope, se = _fit_slope(n_list, vals)
    return slope, se, vals


# ---------------------------------------------------------------------------
# martingale M^n(phi)


def _In_at_neurons(params: ModelParams, n: int, phi: TestFunction) -> np.ndarray:
    """``I^n[phi](x_j)`` for every neuron ``j``."""
    return (coupling_matrix(params.w, n) @ phi.eval(positions(n)))


def martingale_Mn(log: EventLog, params: ModelParams, phi: TestFunction, t: float, quad_tol: float = 1e-10) -> float:
    """``M^n_t(phi) = n^{-1/2} sum_j int_0^t e^{alpha s} I^n[phi](x_j) dM^j_s``."""
    if not 0 <= t <= log.horizon:
        raise ValueError("t outside [0, horizon]")
    n = log.n
    In = _In_at_neurons(params, n, phi)
    mask = log.times <= t
    jumps = np.exp(params.alpha * log.times[mask]) * In[log.neurons[mask] - 1]
    J = intensity_integrals(log, params, t, beta=params.alpha, quad_tol=quad_tol)
    return float((jumps.sum() - In @ J) / math.sqrt(n))


def angle_bracket(log: EventLog, params: ModelParams, phi1: TestFunction, phi2: TestFunction, t: float,
                  quad_tol: float = 1e-10) -> float:
    """``<M^n(phi1), M^n(phi2)>_t = n^-1 sum_j int_0^t e^{2 alpha s} I^n[phi1] I^n[phi2](x_j) f(U^j_s) ds``."""
    if not 0 <= t <= log.horizon:
        raise ValueError("t outside [0, horizon]")
    n = log.n
    J2 = intensity_integrals(log, params, t, beta=2.0 * params.alpha, quad_tol=quad_tol)
    return float((_In_at_neurons(params, n, phi1) * _In_at_neurons(params, n, phi2)) @ J2 / n)


def martingale_probes(log: EventLog, params: ModelParams, phis, t: float, quad_tol: float = 1e-10) -> dict:
    """``{label: (M^n_t(phi), <M^n(phi)>_t)}`` sharing one pair of intensity quadratures."""
    n = log.n
    mask = log.times <= t
    J1, J2 = intensity_integrals_multi(log, params, t, (params.alpha, 2.0 * params.alpha), quad_tol)
    ew = np.exp(params.alpha * log.times[mask])
    src = log.neurons[mask] - 1
    out = {}
    for phi in phis:
        In = _In_at_neurons(params, n, phi)
        mn = ((ew * In[src]).sum() - In @ J1) / math.sqrt(n)
        out[phi.label] = (float(mn), float((In * In) @ J2 / n))
    return out


def max_martingale_jump(log: EventLog, params: ModelParams, phi: TestFunction) -> float:
    """Largest ``|Delta M^n(phi)|`` over the run."""
    if len(log) == 0:
        return 0.0
    In = _In_at_neurons(params, log.n, phi)
    return float(np.max(np.exp(params.alpha * log.times) * np.abs(In[log.neurons - 1])) / math.sqrt(log.n))
