"""Deterministic neural field equation solvers on a midpoint space-time grid.

    u(t, x) = e^{-alpha t} u0(x) + int_0^t e^{-alpha (t - s)} int_0^1 w(y, x) f(u(s, y)) dy ds
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SCHEMA_VERSION, params_hash
from .core import ModelParams, SpaceTimeGrid

__all__ = [
    "Field",
    "ConvergenceError",
    "drift_operator",
    "nfe_map",
    "picard_solve",
    "euler_solve",
    "apriori_bound",
    "write_field",
    "read_field",
]


class ConvergenceError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


@dataclass(frozen=True)
class Field:
    """Samples ``values[k, g] ~ u(t_k, y_g)`` of a space-time function."""

    grid: SpaceTimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_time + 1, self.grid.n_space)
        if v.shape != expected:
            raise ValueError(f"field shape {v.shape} does not match grid {expected}")
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    def at(self, t: float) -> np.ndarray:
        return self.values[self.grid.time_index(t)]

    @property
    def sup_norm(self) -> float:
        """``M_T = sup_{t <= T} ||u(t, .)||_0`` on the grid."""
        return float(np.abs(self.values).max())


def drift_operator(params: ModelParams, grid: SpaceTimeGrid) -> np.ndarray:
    """``K[h, g] = q_h w(y_h, y_g)`` so that ``f(v) @ K`` integrates ``w(., y_g) f(v)``."""
    y = grid.y
    return grid.weights[:, None] * params.w.matrix(y, y)


def _drift_step(v, decay, dt, f, K):
    return decay * (v + dt * (f.eval(v) @ K))


def nfe_map(v: np.ndarray, params: ModelParams, grid: SpaceTimeGrid, K: np.ndarray | None = None) -> np.ndarray:
    """One application of the fixed-point map; time integral by the trapezoid rule."""
    if K is None:
        K = drift_operator(params, grid)
    dt = grid.dt
    decay = math.exp(-params.alpha * dt)
    src = params.f.eval(v) @ K
    acc = np.empty_like(src)
    acc[0] = 0.0
    for k in range(1, src.shape[0]):
        acc[k] = decay * acc[k - 1] + 0.5 * dt * (decay * src[k - 1] + src[k])
    return np.exp(-params.alpha * grid.t)[:, None] * params.u0.eval(grid.y)[None, :] + acc


def picard_solve(params: ModelParams, grid: SpaceTimeGrid, tol: float = 1e-10, max_iter: int = 200) -> Field:
    """Fixed point of the NFE map by Picard iteration from ``v_t = u0``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    K = drift_operator(params, grid)
    v = np.broadcast_to(params.u0.eval(grid.y), (grid.n_time + 1, grid.n_space)).copy()
    res = math.inf
    for _ in range(max_iter):
        new = nfe_map(v, params, grid, K)
        if not np.all(np.isfinite(new)):
            raise FloatingPointError("Picard iterate became non-finite")
        res = float(np.abs(new - v).max())
        v = new
        if res < tol:
            return Field(grid, v)
    raise ConvergenceError(f"Picard iteration did not converge in {max_iter} steps (residual {res:.3e})", res)


def euler_solve(params: ModelParams, grid: SpaceTimeGrid) -> Field:
    """Exponential Euler: ``u_{k+1} = e^{-alpha dt} (u_k + dt int w f(u_k))``."""
    K = drift_operator(params, grid)
    decay = math.exp(-params.alpha * grid.dt)
    out = np.empty((grid.n_time + 1, grid.n_space))
    out[0] = params.u0.eval(grid.y)
    for k in range(grid.n_time):
        out[k + 1] = _drift_step(out[k], decay, grid.dt, params.f, K)
    return Field(grid, out)


def apriori_bound(field: Field, params: ModelParams) -> float:
    """``||u0||_0 + T ||w||_0 sup f`` over the range the field visits."""
    lo, hi = float(field.values.min()), float(field.values.max())
    fmax = float(max(params.f.sup_on_interval(lo, hi), params.f.eval(lo)))
    return params.u0.sup_abs + field.grid.horizon * params.w.sup_abs * fmax


def write_field(field: Field, path, params: ModelParams | None = None, value_name: str = "u", extra=None) -> Path:
    """CSV ``t,x,<value_name>`` with a ``.meta.json`` sidecar."""
    path = Path(path)
    g = field.grid
    tt, yy = np.meshgrid(g.t, g.y, indexing="ij")
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        fh.write(f"t,x,{value_name}\n")
        for a, b, c in zip(tt.ravel(), yy.ravel(), field.values.ravel()):
            fh.write(f"{a:.17g},{b:.17g},{c:.17g}\n")
    meta = {
        "schema_version": SCHEMA_VERSION,
        "grid": {"n_space": g.n_space, "n_time": g.n_time, "horizon": g.horizon},
        "params_hash": params_hash(params) if params is not None else None,
        "value": value_name,
    }
    if extra:
        meta.update(extra)
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_field(path) -> Field:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".meta.json").read_text(encoding="utf-8"))
    gm = meta["grid"]
    grid = SpaceTimeGrid(gm["n_space"], gm["n_time"], gm["horizon"])
    data = np.loadtxt(path, delimiter=",", skiprows=2)
    return Field(grid, data[:, 2].reshape(grid.n_time + 1, grid.n_space))
