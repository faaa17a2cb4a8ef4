"""Event-driven simulation of the spatially extended nonlinear Hawkes network.

Neuron ``i`` (1-based) sits at ``x_i = i / n``; its potential is

    U^i_t = e^{-alpha t} u0(x_i) + n^{-1} sum_{(s, j), s <= t} w(x_j, x_i) e^{-alpha (t - s)}

and it fires with intensity ``f(U^i_{t-})``.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .config import SCHEMA_VERSION, params_hash
from .core import ModelParams, SynapticKernel

__all__ = [
    "EventLog",
    "PotentialState",
    "ExplosionError",
    "EnvelopeViolation",
    "QuadratureError",
    "positions",
    "coupling_matrix",
    "potential_at",
    "potentials_at",
    "replay_potentials",
    "simulate_hawkes",
    "compensator",
    "intensity_integrals",
    "intensity_integrals_multi",
    "write_event_log",
    "read_event_log",
]

DEFAULT_MAX_EVENTS = 10**7
_BLOCK = 4096


class ExplosionError(RuntimeError):
    """Raised when a run hits ``max_events`` before the horizon."""


class EnvelopeViolation(AssertionError):
    """Debug-mode failure: realised total intensity exceeded the thinning envelope."""


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class EventLog:
    times: np.ndarray
    neurons: np.ndarray  # 1-based indices
    n: int
    horizon: float
    seed: int = 0
    params_hash: str | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        neurons = np.asarray(self.neurons, dtype=np.int64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "neurons", neurons)
        if times.shape != neurons.shape or times.ndim != 1:
            raise ValueError("times and neurons must be 1-d arrays of equal length")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("event times must be strictly increasing")
            if times[0] <= 0 or times[-1] > self.horizon:
                raise ValueError("event times must lie in (0, horizon]")
            if neurons.min() < 1 or neurons.max() > self.n:
                raise ValueError("neuron indices must lie in [1, n]")

    def __len__(self):
        return self.times.size

    def counts(self, t: float | None = None) -> np.ndarray:
        """Per-neuron event counts ``N^i_t`` (at the horizon by default)."""
        nb = self.neurons if t is None else self.neurons[self.times <= t]
        return np.bincount(nb - 1, minlength=self.n)

    def restricted(self, t: float) -> "EventLog":
        keep = self.times <= t
        return EventLog(self.times[keep], self.neurons[keep], self.n, t, self.seed, self.params_hash)


@dataclass
class PotentialState:
    """Incrementally evolved potentials, the way the simulator tracks them."""

    values: np.ndarray
    clock: float = 0.0

    @classmethod
    def initial(cls, params: ModelParams, n: int) -> "PotentialState":
        return cls(params.u0.eval(positions(n)), 0.0)

    def decay_to(self, t: float, alpha: float) -> None:
        if t < self.clock:
            raise ValueError("cannot evolve backwards in time")
        self.values = self.values * math.exp(-alpha * (t - self.clock))
        self.clock = t

    def jump(self, neuron: int, wn: np.ndarray) -> None:
        self.values = self.values + wn[neuron - 1]


def positions(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / n


@functools.lru_cache(maxsize=8)
def _coupling(w: SynapticKernel, n: int) -> np.ndarray:
    x = positions(n)
    m = w.matrix(x, x) / n
    m.setflags(write=False)
    return m


def coupling_matrix(w: SynapticKernel, n: int) -> np.ndarray:
    """``C[j, i] = w(x_j, x_i) / n``: jump of ``U^i`` when neuron ``j`` fires (0-based rows)."""
    return _coupling(w, n)


def _check_time(log: EventLog, t: float):
    if not (0.0 <= t <= log.horizon):
        raise ValueError(f"t={t} outside [0, {log.horizon}]")


def potentials_at(log: EventLog, params: ModelParams, t: float) -> np.ndarray:
    """All ``U^i_t``; events at exactly ``t`` are included."""
    _check_time(log, t)
    n = log.n
    mask = log.times <= t
    wts = np.exp(-params.alpha * (t - log.times[mask]))
    c = np.bincount(log.neurons[mask] - 1, weights=wts, minlength=n)
    return math.exp(-params.alpha * t) * params.u0.eval(positions(n)) + c @ coupling_matrix(params.w, n)


def potential_at(log: EventLog, params: ModelParams, t: float, i: int) -> float:
    """``U^i_t`` for one 1-based neuron index."""
    _check_time(log, t)
    if not 1 <= i <= log.n:
        raise IndexError(f"neuron index {i} outside [1, {log.n}]")
    n = log.n
    xi = i / n
    mask = log.times <= t
    s = log.times[mask]
    xj = log.neurons[mask] / n
    jumps = params.w.eval(xj, xi) * np.exp(-params.alpha * (t - s))
    return float(math.exp(-params.alpha * t) * params.u0.eval(xi) + jumps.sum() / n)


def replay_potentials(log: EventLog, params: ModelParams, times) -> np.ndarray:
    """Potentials at sorted query ``times`` by incremental decay + jump updates."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0):
        raise ValueError("query times must be sorted")
    wn = coupling_matrix(params.w, log.n)
    state = PotentialState.initial(params, log.n)
    out = np.empty((times.size, log.n))
    e = 0
    for q, tq in enumerate(times):
        while e < len(log) and log.times[e] <= tq:
            state.decay_to(log.times[e], params.alpha)
            state.jump(int(log.neurons[e]), wn)
            e += 1
        state.decay_to(tq, params.alpha)
        out[q] = state.values
    return out


# ---------------------------------------------------------------------------
# thinning


@njit(cache=True)
def _rate(code, f0, kappa, floor, u):
    z = u - kappa
    if code == 0:
        return floor + f0 / (1.0 + math.exp(-z))
    if code == 1:
        return floor + f0 * 0.5 * math.erfc(-z / math.sqrt(2.0))
    if code == 2:
        return floor + f0
    return floor + f0 * z


@njit(cache=True)
def _envelope_term(code, f0, kappa, floor, u):
    # U decays monotonically towards 0 between events: sup of f on [min(u,0), max(u,0)]
    lo = min(u, 0.0)
    hi = max(u, 0.0)
    if code == 3 and f0 < 0:
        return _rate(code, f0, kappa, floor, lo)
    return _rate(code, f0, kappa, floor, hi)


@njit(cache=True)
def _thin(U, t, horizon, alpha, wn, code, f0, kappa, floor, rnd, times, neurons, n_ev, max_events, debug):
    """Consume candidate rows of ``rnd`` until the block, the horizon or a limit is hit.

    status: 0 block exhausted, 1 finished, 2 max_events, 3 envelope violated, 4 buffer full.
    """
    n = U.size
    lam = np.empty(n)
    i = 0
    while i < rnd.shape[0]:
        if n_ev >= times.size:
            return t, n_ev, 4, i
        big = 0.0
        for k in range(n):
            term = _envelope_term(code, f0, kappa, floor, U[k])
            if term < 0.0:
                return t, n_ev, 3, i
            big += term
        if not big > 0.0:
            return t, n_ev, 1, i
        tn = t + (-math.log1p(-rnd[i, 0])) / big
        if tn > horizon:
            return t, n_ev, 1, i
        decay = math.exp(-alpha * (tn - t))
        t = tn
        tot = 0.0
        for k in range(n):
            U[k] *= decay
            lam[k] = _rate(code, f0, kappa, floor, U[k])
            if lam[k] < 0.0:
                return t, n_ev, 3, i
            tot += lam[k]
        if debug and tot > big * (1.0 + 1e-12):
            return t, n_ev, 3, i
        if rnd[i, 1] * big < tot:
            if n_ev >= max_events:
                return t, n_ev, 2, i
            target = rnd[i, 2] * tot
            acc = 0.0
            j = n - 1
            for k in range(n):
                acc += lam[k]
                if acc > target:
                    j = k
                    break
            if n_ev > 0 and t <= times[n_ev - 1]:
                t = np.nextafter(times[n_ev - 1], np.inf)
            times[n_ev] = t
            neurons[n_ev] = j + 1
            n_ev += 1
            for k in range(n):
                U[k] += wn[j, k]
        i += 1
    return t, n_ev, 0, i


def simulate_hawkes(
    params: ModelParams,
    n: int,
    T: float,
    seed: int,
    max_events: int = DEFAULT_MAX_EVENTS,
    debug: bool = False,
) -> EventLog:
    """Exact thinning simulation on ``[0, T]``; deterministic in ``(params, n, T, seed)``.

    Candidates arrive at the rate ``sum_i sup f`` over the interval each potential
    can visit before the next event; the envelope is rebuilt after every candidate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not T > 0:
        raise ValueError("T must be positive")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    wn = np.ascontiguousarray(coupling_matrix(params.w, n))
    U = params.u0.eval(positions(n)).astype(float)
    fr = params.f
    cap = min(max_events + 1, max(1024, int(4 * n * max(T, 1.0))))
    times = np.empty(cap)
    neurons = np.empty(cap, dtype=np.int64)
    t, n_ev = 0.0, 0
    rnd = rng.random((_BLOCK, 3))
    pos = 0
    while True:
        t, n_ev, status, used = _thin(
            U, t, T, params.alpha, wn, fr.code, fr.f0, fr.kappa, fr.floor,
            rnd[pos:], times, neurons, n_ev, max_events, debug,
        )
        pos += used
        if status == 0:
            rnd = rng.random((_BLOCK, 3))
            pos = 0
        elif status == 1:
            break
        elif status == 2:
            raise ExplosionError(f"max_events={max_events} reached at t={t:.6g} (n={n}, seed={seed})")
        elif status == 3:
            raise EnvelopeViolation(f"intensity exceeded thinning envelope or went negative at t={t!r}")
        else:
            new = min(max_events + 1, 2 * times.size)
            times = np.concatenate([times, np.empty(new - times.size)])
            neurons = np.concatenate([neurons, np.empty(new - neurons.size, dtype=np.int64)])
    return EventLog(times[:n_ev].copy(), neurons[:n_ev].copy(), n, float(T), int(seed), params_hash(params))


# ---------------------------------------------------------------------------
# intensity integrals

_GL_LO = np.polynomial.legendre.leggauss(6)
_GL_HI = np.polynomial.legendre.leggauss(12)
_MAX_DEPTH = 48


@njit(cache=True)
def _gl_rule(a, b, u_a, alpha, betas, code, f0, kappa, floor, xs, ws, out):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    for k in range(betas.size):
        out[k] = 0.0
    for q in range(xs.size):
        s = mid + half * xs[q]
        fv = half * ws[q] * _rate(code, f0, kappa, floor, u_a * math.exp(-alpha * (s - a)))
        for k in range(betas.size):
            out[k] += fv * math.exp(betas[k] * s)


@njit(cache=True)
def _adaptive(a, b, u_a, alpha, betas, code, f0, kappa, floor, tol_density, x_lo, w_lo, x_hi, w_hi, out, j):
    """Bisection with an explicit stack for one neuron on one piece; False if too deep."""
    nb = betas.size
    lo = np.empty(nb)
    hi = np.empty(nb)
    sa = np.empty(_MAX_DEPTH + 2)
    sb = np.empty(_MAX_DEPTH + 2)
    su = np.empty(_MAX_DEPTH + 2)
    sd = np.empty(_MAX_DEPTH + 2, dtype=np.int64)
    top = 0
    sa[0] = a
    sb[0] = b
    su[0] = u_a
    sd[0] = 0
    while top >= 0:
        ia = sa[top]
        ib = sb[top]
        iu = su[top]
        depth = sd[top]
        top -= 1
        _gl_rule(ia, ib, iu, alpha, betas, code, f0, kappa, floor, x_lo, w_lo, lo)
        _gl_rule(ia, ib, iu, alpha, betas, code, f0, kappa, floor, x_hi, w_hi, hi)
        err = 0.0
        for k in range(nb):
            err = max(err, abs(hi[k] - lo[k]))
        if err <= tol_density * (ib - ia) + 1e-300:
            for k in range(nb):
                out[k, j] += hi[k]
        elif depth >= _MAX_DEPTH:
            return False
        else:
            im = 0.5 * (ia + ib)
            top += 1
            sa[top] = im
            sb[top] = ib
            su[top] = iu * math.exp(-alpha * (im - ia))
            sd[top] = depth + 1
            top += 1
            sa[top] = ia
            sb[top] = im
            su[top] = iu
            sd[top] = depth + 1
    return True


@njit(cache=True)
def _integrate_pieces(a, b, u_start, alpha, betas, code, f0, kappa, floor, tol_density,
                      x_lo, w_lo, x_hi, w_hi, out):
    """Adaptive 6/12-point Gauss-Legendre of ``e^{beta s} f(u_a e^{-alpha (s - a)})`` on every piece.

    An interval is accepted when the two rules agree within ``tol_density * length``.
    Node weights that do not depend on the neuron are computed once per piece.
    """
    nb = betas.size
    nl = x_lo.size
    nh = x_hi.size
    dec_lo = np.empty(nl)
    dec_hi = np.empty(nh)
    wb_lo = np.empty((nb, nl))
    wb_hi = np.empty((nb, nh))
    f_lo = np.empty(nl)
    f_hi = np.empty(nh)
    for p in range(a.size):
        pa = a[p]
        half = 0.5 * (b[p] - pa)
        mid = 0.5 * (b[p] + pa)
        for q in range(nl):
            sq = mid + half * x_lo[q]
            dec_lo[q] = math.exp(-alpha * (sq - pa))
            for k in range(nb):
                wb_lo[k, q] = half * w_lo[q] * math.exp(betas[k] * sq)
        for q in range(nh):
            sq = mid + half * x_hi[q]
            dec_hi[q] = math.exp(-alpha * (sq - pa))
            for k in range(nb):
                wb_hi[k, q] = half * w_hi[q] * math.exp(betas[k] * sq)
        tol = tol_density * (b[p] - pa) + 1e-300
        for j in range(u_start.shape[1]):
            ua = u_start[p, j]
            for q in range(nl):
                f_lo[q] = _rate(code, f0, kappa, floor, ua * dec_lo[q])
            for q in range(nh):
                f_hi[q] = _rate(code, f0, kappa, floor, ua * dec_hi[q])
            good = True
            for k in range(nb):
                slo = 0.0
                shi = 0.0
                for q in range(nl):
                    slo += wb_lo[k, q] * f_lo[q]
                for q in range(nh):
                    shi += wb_hi[k, q] * f_hi[q]
                if abs(shi - slo) > tol:
                    good = False
                    break
            if good:
                for k in range(nb):
                    shi = 0.0
                    for q in range(nh):
                        shi += wb_hi[k, q] * f_hi[q]
                    out[k, j] += shi
            elif not _adaptive(pa, b[p], ua, alpha, betas, code, f0, kappa, floor, tol_density,
                               x_lo, w_lo, x_hi, w_hi, out, j):
                return False
    return True


def _pieces(log: EventLog, params: ModelParams, t: float, cols: np.ndarray):
    """Piece boundaries on ``[0, t]`` and the potentials of ``cols`` right after each boundary."""
    n = log.n
    mask = log.times <= t
    s = log.times[mask]
    src = log.neurons[mask] - 1
    a = np.concatenate([[0.0], s])
    b = np.concatenate([s, [t]])
    wn = coupling_matrix(params.w, n)[:, cols]
    x = positions(n)[cols]
    # U(tau_k+) = e^{-alpha tau_k} (u0 + sum_{l <= k} e^{alpha s_l} wn[j_l])
    acc = np.cumsum(np.exp(params.alpha * s)[:, None] * wn[src], axis=0)
    base = np.vstack([np.zeros((1, cols.size)), acc]) + params.u0.eval(x)[None, :]
    u_start = np.exp(-params.alpha * a)[:, None] * base
    keep = b > a
    return a[keep], b[keep], u_start[keep]


def intensity_integrals(log: EventLog, params: ModelParams, t: float, beta: float = 0.0,
                        quad_tol: float = 1e-10, neurons=None) -> np.ndarray:
    """``int_0^t e^{beta s} f(U^j_s) ds`` for each requested 1-based neuron (all by default)."""
    return intensity_integrals_multi(log, params, t, (beta,), quad_tol, neurons)[0]


def intensity_integrals_multi(log: EventLog, params: ModelParams, t: float, betas=(0.0,),
                              quad_tol: float = 1e-10, neurons=None) -> np.ndarray:
    """Several exponents ``beta`` at once, sharing the rate evaluations; shape ``(len(betas), m)``."""
    if not quad_tol > 0:
        raise ValueError("quad_tol must be positive")
    _check_time(log, t)
    cols = np.arange(log.n) if neurons is None else np.asarray(neurons, dtype=np.int64).reshape(-1) - 1
    betas = np.asarray(betas, dtype=float).reshape(-1)
    out = np.zeros((betas.size, cols.size))
    if t == 0.0:
        return out
    a, b, u_start = _pieces(log, params, t, cols)
    f = params.f
    ok = _integrate_pieces(a, b, np.ascontiguousarray(u_start), float(params.alpha), betas, f.code, float(f.f0),
                           float(f.kappa), float(f.floor), quad_tol / t, *_GL_LO, *_GL_HI, out)
    if not ok:
        raise QuadratureError("adaptive quadrature did not reach the requested tolerance")
    return out


def compensator(log: EventLog, params: ModelParams, j: int, t: float, quad_tol: float = 1e-10) -> float:
    """``int_0^t f(U^j_s) ds``; ``N^j_t - compensator`` is the martingale ``M^j_t``."""
    if not 1 <= j <= log.n:
        raise IndexError(f"neuron index {j} outside [1, {log.n}]")
    return float(intensity_integrals(log, params, t, 0.0, quad_tol, neurons=[j])[0])


# ---------------------------------------------------------------------------
# serialisation


def write_event_log(log: EventLog, path) -> Path:
    """CSV ``t,neuron`` (17 significant digits) plus a ``.meta.json`` sidecar."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write("t,neuron\n")
        for t, j in zip(log.times, log.neurons):
            fh.write(f"{t:.17g},{int(j)}\n")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "n": log.n,
        "horizon": log.horizon,
        "seed": int(log.seed),
        "params_hash": log.params_hash,
        "n_events": len(log),
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_event_log(path) -> EventLog:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text(encoding="utf-8"))
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)
    times = data[:, 0] if data.size else np.empty(0)
    neurons = data[:, 1].astype(np.int64) if data.size else np.empty(0, dtype=np.int64)
    return EventLog(times, neurons, int(meta["n"]), float(meta["horizon"]), int(meta["seed"]), meta["params_hash"])
