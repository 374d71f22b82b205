"""Log-log rate fits and verdicts against target exponents."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual: float  # rms of the log residuals
    ci95: float  # half-width of the 95% interval for the slope, nan with 2 points
    n_used: int
    floor_reached: tuple = ()  # eps values dropped for a non-positive error

    @property
    def usable(self) -> bool:
        return self.n_used >= 2 and math.isfinite(self.slope)

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "ci95": self.ci95,
            "n_used": self.n_used,
            "floor_reached": list(self.floor_reached),
        }


def fit_rate(pairs) -> RateFit:
    """Least-squares slope of ``log(error)`` against ``log(eps)``.

    Pairs with a non-positive error have hit the solver floor; they are
    left out and listed in ``floor_reached``.
    """
    pairs = [(float(e), float(v)) for e, v in pairs]
    if len(pairs) < 2:
        raise ValueError("a rate fit needs at least two (eps, error) pairs")
    if any(e <= 0 or not math.isfinite(e) for e, _ in pairs):
        raise ValueError("eps values must be positive")
    floor = tuple(e for e, v in pairs if not v > 0)
    kept = np.array([(e, v) for e, v in pairs if v > 0 and math.isfinite(v)]).reshape(-1, 2)
    n = kept.shape[0]
    if n < 2:
        return RateFit(math.nan, math.nan, math.nan, math.nan, n, floor)
    x, y = np.log(kept[:, 0]), np.log(kept[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    rms = float(np.sqrt(np.mean(res**2)))
    ci = math.nan
    if n > 2:
        sxx = float(np.sum((x - x.mean()) ** 2))
        se = math.sqrt(float(np.sum(res**2)) / (n - 2) / sxx)
        ci = float(stats.t.ppf(0.975, n - 2) * se)
    return RateFit(float(slope), float(intercept), rms, ci, n, floor)


@dataclass(frozen=True)
class RateTarget:
    name: str
    quantity: str  # row label in the report
    norm: str  # l2, h1 or w11
    exponent: float
    band: float = 0.25

    def verdict(self, fit: RateFit, min_points: int = 3) -> str:
        if fit.n_used < min_points:
            return f"insufficient: {fit.n_used} usable points"
        lo, hi = self.exponent - self.band, self.exponent + self.band
        word = "pass" if lo <= fit.slope <= hi else "fail"
        return f"{word}: {fit.slope:.3f} vs [{lo:.2f}, {hi:.2f}]"
