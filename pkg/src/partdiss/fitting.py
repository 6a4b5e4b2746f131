"""Small least-squares helpers for decay-rate measurement.

Rates are reported two ways: algebraic slopes of log(norm) against
log(1+t) (matching (1+t)^sigma references), and plain exponential rates
of log(norm) against t for the uniform high-frequency band.
"""

import dataclasses

import numpy as np


@dataclasses.dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    n_points: int
    t_min: float
    t_max: float

    @property
    def confidence95(self):
        return 2.0 * self.stderr


def _windowed(t, y, t_min, t_max):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    mask = np.isfinite(y) & (y > 0.0)
    if t_min is not None:
        mask &= t >= t_min
    if t_max is not None:
        mask &= t <= t_max
    return t[mask], y[mask]


def _line_fit(x, z):
    n = len(x)
    coef, cov = np.polyfit(x, z, 1, cov=True) if n > 2 else (
        np.polyfit(x, z, 1), np.full((2, 2), np.nan))
    stderr = float(np.sqrt(cov[0, 0])) if np.all(np.isfinite(cov)) else float("nan")
    return float(coef[0]), float(coef[1]), stderr


def fit_loglog(t, y, t_min=None, t_max=None):
    """Slope of log y against log(1+t) on the window; the algebraic rate."""
    t, y = _windowed(t, y, t_min, t_max)
    if len(t) < 2:
        return FitResult(float("nan"), float("nan"), float("nan"),
                         len(t), float("nan"), float("nan"))
    slope, intercept, stderr = _line_fit(np.log1p(t), np.log(y))
    return FitResult(slope, intercept, stderr, len(t),
                     float(t.min()), float(t.max()))


def fit_exp_rate(t, y, t_min=None, t_max=None):
    """Exponential rate c in y ~ C e^{-c t}; positive when decaying."""
    t, y = _windowed(t, y, t_min, t_max)
    if len(t) < 2:
        return FitResult(float("nan"), float("nan"), float("nan"),
                         len(t), float("nan"), float("nan"))
    slope, intercept, stderr = _line_fit(t, np.log(y))
    return FitResult(-slope, intercept, stderr, len(t),
                     float(t.min()), float(t.max()))


def default_fit_times(t_min=10.0, t_max=100.0, count=32):
    return np.geomspace(t_min, t_max, count)
