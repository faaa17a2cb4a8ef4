"""Model ingredients shared by every solver: rates, kernels, test functions, grids.

All objects are immutable and evaluate vectorised over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, ndtr

__all__ = [
    "FiringRate",
    "SynapticKernel",
    "InitialCondition",
    "ModelParams",
    "TestFunction",
    "SpaceTimeGrid",
    "TEST_FUNCTION_LABELS",
    "test_function",
    "registered_test_functions",
    "linear_combination",
    "midpoint_weights",
    "simpson",
    "eval_I",
    "eval_In",
    "exp_trapezoid_coeffs",
    "exp_trapezoid_integral",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# integer codes used by the compiled thinning loop
RATE_CODES = {"sigmoid": 0, "gauss": 1, "constant": 2, "affine": 3}


@dataclass(frozen=True)
class FiringRate:
    """Parametric firing rate ``f`` with analytic derivatives.

    Families (``floor`` is the additive lower bound ``m``):

    * ``sigmoid``:  ``floor + f0 / (1 + exp(-(u - kappa)))``
    * ``gauss``:    ``floor + f0 * Phi(u - kappa)`` with ``Phi`` the standard normal CDF
    * ``constant``: ``floor + f0`` everywhere
    * ``affine``:   ``floor + f0 * (u - kappa)``; only nonnegative for
      ``u >= kappa - floor / f0``, intended for deterministic solver checks.
    """

    kind: str = "sigmoid"
    f0: float = 1.0
    kappa: float = 0.0
    floor: float = 0.05

    def __post_init__(self):
        if self.kind not in RATE_CODES:
            raise ValueError(f"unknown rate kind {self.kind!r}")
        if self.floor < 0:
            raise ValueError("rate floor must be nonnegative")
        if self.kind in ("sigmoid", "gauss", "constant") and self.f0 < 0:
            raise ValueError("f0 must be nonnegative")

    @property
    def code(self) -> int:
        return RATE_CODES[self.kind]

    @property
    def lower_bound(self) -> float:
        if self.kind == "constant":
            return self.floor + self.f0
        return self.floor if self.kind != "affine" else 0.0

    def eval(self, u):
        u = np.asarray(u, dtype=float)
        z = u - self.kappa
        if self.kind == "sigmoid":
            return self.floor + self.f0 * expit(z)
        if self.kind == "gauss":
            return self.floor + self.f0 * ndtr(z)
        if self.kind == "constant":
            return np.full_like(u, self.floor + self.f0)
        return self.floor + self.f0 * z

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        z = u - self.kappa
        if self.kind == "sigmoid":
            s = expit(z)
            return self.f0 * s * (1.0 - s)
        if self.kind == "gauss":
            return self.f0 * np.exp(-0.5 * z * z) / _SQRT_2PI
        if self.kind == "constant":
            return np.zeros_like(u)
        return np.full_like(u, self.f0)

    def deriv2(self, u):
        u = np.asarray(u, dtype=float)
        z = u - self.kappa
        if self.kind == "sigmoid":
            s = expit(z)
            return self.f0 * s * (1.0 - s) * (1.0 - 2.0 * s)
        if self.kind == "gauss":
            return -z * self.f0 * np.exp(-0.5 * z * z) / _SQRT_2PI
        return np.zeros_like(u)

    def sup_on_interval(self, a, b):
        """Tight upper bound of ``f`` on ``[a, b]``; every family is monotone."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.kind == "affine" and self.f0 < 0:
            return self.eval(a)
        return self.eval(b)

    @property
    def deriv_sup(self) -> float:
        """``||f'||_0``."""
        if self.kind == "sigmoid":
            return 0.25 * self.f0
        if self.kind == "gauss":
            return self.f0 / _SQRT_2PI
        if self.kind == "constant":
            return 0.0
        return abs(self.f0)


@dataclass(frozen=True)
class SynapticKernel:
    """Translation-invariant synaptic weight ``w(y, x) = k(y - x)``.

    * ``constant``:    ``A``
    * ``gaussian``:    ``A * exp(-(y - x)**2 / sigma)``
    * ``mexican_hat``: ``exp(-(y - x)**2) - A * exp(-(y - x)**2 / sigma)``
    """

    kind: str = "gaussian"
    A: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian", "mexican_hat"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind != "constant" and self.sigma <= 0:
            raise ValueError("kernel sigma must be positive")

    def _profile(self, d):
        d2 = d * d
        if self.kind == "constant":
            return np.full_like(d, self.A)
        if self.kind == "gaussian":
            return self.A * np.exp(-d2 / self.sigma)
        return np.exp(-d2) - self.A * np.exp(-d2 / self.sigma)

    def _profile_deriv(self, d):
        d2 = d * d
        if self.kind == "constant":
            return np.zeros_like(d)
        if self.kind == "gaussian":
            return -2.0 * d / self.sigma * self.A * np.exp(-d2 / self.sigma)
        return -2.0 * d * np.exp(-d2) + 2.0 * d / self.sigma * self.A * np.exp(-d2 / self.sigma)

    def eval(self, y, x):
        y, x = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(x, dtype=float))
        return self._profile(y - x)

    def d1(self, y, x):
        y, x = np.broadcast_arrays(np.asarray(y, dtype=float), np.asarray(x, dtype=float))
        return self._profile_deriv(y - x)

    def d2(self, y, x):
        return -self.d1(y, x)

    def matrix(self, src, dst):
        """``out[a, b] = w(src[a], dst[b])``."""
        return self.eval(np.asarray(src)[:, None], np.asarray(dst)[None, :])

    @property
    def sup_abs(self) -> float:
        if self.kind == "constant":
            return abs(self.A)
        if self.kind == "gaussian":
            return abs(self.A)
        # profile in s = d^2 on [0, 1]: h(s) = e^-s - A e^(-s/sigma); one interior critical point at most
        cand = [0.0, 1.0]
        if self.A > 0 and self.sigma != 1.0:
            s_star = math.log(self.sigma / self.A) * self.sigma / (self.sigma - 1.0)
            if 0.0 < s_star < 1.0:
                cand.append(s_star)
        return max(abs(math.exp(-s) - self.A * math.exp(-s / self.sigma)) for s in cand)


@dataclass(frozen=True)
class InitialCondition:
    """Smooth initial potential ``u0`` on ``[0, 1]``.

    * ``constant``: ``a``
    * ``cosine``:   ``a + b * cos(2 pi x)``
    * ``logistic``: ``a / (1 + exp(-(x - center) / width))``
    """

    kind: str = "constant"
    a: float = 0.0
    b: float = 0.0
    center: float = 0.5
    width: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "cosine", "logistic"):
            raise ValueError(f"unknown u0 kind {self.kind!r}")
        if self.kind == "logistic" and self.width <= 0:
            raise ValueError("logistic width must be positive")

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.full_like(x, self.a)
        if self.kind == "cosine":
            return self.a + self.b * np.cos(2.0 * np.pi * x)
        return self.a * expit((x - self.center) / self.width)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.zeros_like(x)
        if self.kind == "cosine":
            return -2.0 * np.pi * self.b * np.sin(2.0 * np.pi * x)
        s = expit((x - self.center) / self.width)
        return self.a * s * (1.0 - s) / self.width

    @property
    def sup_abs(self) -> float:
        if self.kind == "cosine":
            return abs(self.a) + abs(self.b)
        return abs(self.a)


@dataclass(frozen=True)
class ModelParams:
    f: FiringRate = field(default_factory=FiringRate)
    w: SynapticKernel = field(default_factory=SynapticKernel)
    u0: InitialCondition = field(default_factory=InitialCondition)
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ValueError("alpha must be a finite nonnegative number")


@dataclass(frozen=True)
class TestFunction:
    """Closed-form probe ``phi`` with its derivative."""

    label: str
    eval: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    deriv: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    sup_abs: float = 1.0

    __test__ = False  # keep pytest from collecting this class

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))


def _const(c):
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


_TWO_PI = 2.0 * np.pi

_REGISTRY = {
    "one": (_const(1.0), _const(0.0), 1.0),
    "x": (lambda x: x * 1.0, _const(1.0), 1.0),
    "x2": (lambda x: x * x, lambda x: 2.0 * x, 1.0),
    "sin2pi": (lambda x: np.sin(_TWO_PI * x), lambda x: _TWO_PI * np.cos(_TWO_PI * x), 1.0),
    "cos2pi": (lambda x: np.cos(_TWO_PI * x), lambda x: -_TWO_PI * np.sin(_TWO_PI * x), 1.0),
    "exp": (np.exp, np.exp, math.e),
}

TEST_FUNCTION_LABELS = tuple(_REGISTRY)


def test_function(label: str) -> TestFunction:
    """Look up a registered test function; ``zero`` is accepted as well."""
    if label == "zero":
        return TestFunction("zero", _const(0.0), _const(0.0), 0.0)
    try:
        ev, de, sup = _REGISTRY[label]
    except KeyError:
        raise KeyError(f"unknown test function {label!r}; known: {', '.join(_REGISTRY)}") from None
    return TestFunction(label, ev, de, sup)


test_function.__test__ = False


def registered_test_functions() -> list[TestFunction]:
    return [test_function(k) for k in _REGISTRY]


def linear_combination(a: float, phi1: TestFunction, b: float, phi2: TestFunction) -> TestFunction:
    """``a * phi1 + b * phi2`` (sup bound by the triangle inequality)."""
    return TestFunction(
        f"({a:g}*{phi1.label}+{b:g}*{phi2.label})",
        lambda x: a * phi1.eval(x) + b * phi2.eval(x),
        lambda x: a * phi1.deriv(x) + b * phi2.deriv(x),
        abs(a) * phi1.sup_abs + abs(b) * phi2.sup_abs,
    )


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid on ``[0, T] x [0, 1]`` with cell-midpoint space nodes."""

    n_space: int
    n_time: int
    horizon: float

    def __post_init__(self):
        if self.n_space < 1 or self.n_time < 1:
            raise ValueError("grid sizes must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if (1.0 / self.n_space) * self.n_space != 1.0:
            raise ValueError(f"n_space={self.n_space} does not tile [0,1] exactly in floating point")

    @property
    def dx(self) -> float:
        return 1.0 / self.n_space

    @property
    def dt(self) -> float:
        return self.horizon / self.n_time

    @property
    def y(self) -> np.ndarray:
        return (np.arange(self.n_space) + 0.5) / self.n_space

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.n_time + 1) * self.dt

    @property
    def weights(self) -> np.ndarray:
        return midpoint_weights(self.n_space)

    def time_index(self, t: float) -> int:
        """Index ``k`` with ``t_k == t`` (relative tolerance 1e-12); raises otherwise."""
        k = int(round(t / self.dt))
        if k < 0 or k > self.n_time or abs(k * self.dt - t) > 1e-12 * max(self.horizon, 1.0):
            raise ValueError(f"t={t!r} is not a node of the time grid (dt={self.dt!r})")
        return k

    def refined(self, time_factor: int = 2) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.n_space, self.n_time * time_factor, self.horizon)


def midpoint_weights(n_cells: int) -> np.ndarray:
    """Quadrature weights for cell-midpoint samples on ``[0, 1]``.

    Fourth-order end-corrected midpoint rule, ``dx * [26, 21, 25, 24, ..., 24, 25, 21, 26] / 24``;
    plain midpoint below six cells.
    """
    h = 1.0 / n_cells
    wts = np.full(n_cells, h)
    if n_cells >= 6:
        corr = np.array([26.0, 21.0, 25.0]) / 24.0
        wts[:3] = h * corr
        wts[-3:] = h * corr[::-1]
    return wts


def simpson(values: np.ndarray, a: float, b: float, axis: int = -1) -> np.ndarray:
    """Composite Simpson on equispaced samples including both endpoints (even panel count)."""
    values = np.asarray(values, dtype=float)
    m = values.shape[axis] - 1
    if m < 2 or m % 2:
        raise ValueError("Simpson needs an even number of panels")
    h = (b - a) / m
    coef = np.ones(m + 1)
    coef[1:-1:2] = 4.0
    coef[2:-1:2] = 2.0
    return h / 3.0 * np.tensordot(values, coef, axes=([axis], [0]))


def eval_I(phi: TestFunction, w: SynapticKernel, y, quad_points: int = 256):
    """``int_0^1 phi(x) w(y, x) dx`` by composite Simpson with ``quad_points`` panels.

    An odd panel count is rounded up to the next even one. ``y`` may be an array.
    """
    if quad_points < 2:
        raise ValueError("quad_points must be >= 2")
    m = quad_points + (quad_points % 2)
    x = np.linspace(0.0, 1.0, m + 1)
    y = np.asarray(y, dtype=float)
    integrand = phi.eval(x) * w.eval(y[..., None], x)
    return simpson(integrand, 0.0, 1.0)


def eval_In(phi: TestFunction, w: SynapticKernel, y, n: int):
    """Right-endpoint Riemann sum ``n^-1 sum_i w(y, i/n) phi(i/n)`` over neuron positions."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.arange(1, n + 1) / n
    y = np.asarray(y, dtype=float)
    return np.mean(w.eval(y[..., None], x) * phi.eval(x), axis=-1)


def exp_trapezoid_coeffs(a: float) -> tuple[float, float]:
    """Coefficients ``(p, q)`` with ``int_0^dt e^{-alpha (dt - s)} h(s) ds = dt (p h(0) + q h(dt))``
    for linear ``h`` and ``a = alpha * dt``. Both tend to 1/2 as ``a -> 0``.
    """
    if abs(a) < 0.1:
        # p = int_0^1 r e^{-a r} dr and total = int_0^1 e^{-a r} dr as power series
        p = total = 0.0
        term = 1.0
        for k in range(14):
            p += term / (k + 2)
            total += term / (k + 1)
            term *= -a / (k + 1)
    else:
        p = (1.0 - (1.0 + a) * math.exp(-a)) / (a * a)
        total = -math.expm1(-a) / a
    return p, total - p


def exp_trapezoid_integral(h: np.ndarray, dt: float, alpha: float) -> np.ndarray:
    """Running ``int_0^{t_k} e^{-alpha (t_k - s)} h(s) ds`` for piecewise-linear ``h`` on a uniform grid.

    ``h`` has time on axis 0; the result has the same shape with a zero first row.
    """
    h = np.asarray(h, dtype=float)
    p, q = exp_trapezoid_coeffs(alpha * dt)
    decay = math.exp(-alpha * dt)
    out = np.empty_like(h)
    out[0] = 0.0
    for k in range(1, h.shape[0]):
        out[k] = decay * out[k - 1] + dt * (p * h[k - 1] + q * h[k])
    return out
