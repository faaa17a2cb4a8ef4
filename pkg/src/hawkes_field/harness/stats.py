"""Small statistics toolkit: streaming moments, slope fits, normality tests."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["RunningStats", "fit_loglog_slope", "variance_ratio", "ks_normal", "within"]


@dataclass
class RunningStats:
    """Streaming count/mean/central moments up to order four (Terriberry's update)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0

    def push(self, x: float) -> None:
        n1 = self.count
        self.count += 1
        n = self.count
        delta = x - self.mean
        dn = delta / n
        dn2 = dn * dn
        term1 = delta * dn * n1
        self.mean += dn
        self.m4 += term1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * self.m2 - 4 * dn * self.m3
        self.m3 += term1 * dn * (n - 2) - 3 * dn * self.m2
        self.m2 += term1

    def extend(self, xs) -> "RunningStats":
        for x in xs:
            self.push(float(x))
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else math.nan

    @property
    def se_mean(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else math.nan

    @property
    def se_variance(self) -> float:
        """Standard error of the unbiased sample variance."""
        n = self.count
        if n < 4:
            return math.nan
        mu4 = self.m4 / n
        var = self.variance
        return math.sqrt(max(mu4 - var * var * (n - 3) / (n - 1), 0.0) / n)

    def summary(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "variance": self.variance,
            "se_mean": self.se_mean,
            "se_variance": self.se_variance,
        }


def fit_loglog_slope(points) -> tuple[float, float]:
    """OLS fit of ``log value`` on ``log n``; returns ``(slope, stderr)``."""
    pts = [(float(a), float(b)) for a, b in points]
    if len(pts) < 3:
        raise ValueError("slope fits need at least three points")
    if any(a <= 0 or b <= 0 or not math.isfinite(b) for a, b in pts):
        raise ValueError("slope fits need positive abscissae and values")
    x = np.log([a for a, _ in pts])
    y = np.log([b for _, b in pts])
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx)
    resid = y - y.mean() - slope * xc
    dof = len(pts) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx)
    return slope, stderr


def variance_ratio(a: RunningStats, b: RunningStats) -> tuple[float, float]:
    """``var(a) / var(b)`` and its delta-method relative standard error."""
    ratio = a.variance / b.variance
    rel = math.sqrt((a.se_variance / a.variance) ** 2 + (b.se_variance / b.variance) ** 2)
    return ratio, rel


def ks_normal(samples, variance: float) -> tuple[float, float]:
    """One-sample KS test against ``N(0, variance)``; returns ``(statistic, p_value)``."""
    res = stats.kstest(np.asarray(samples, dtype=float), "norm", args=(0.0, math.sqrt(variance)))
    return float(res.statistic), float(res.pvalue)


def within(value: float, target: float, tol: float) -> bool:
    return abs(value - target) <= tol
