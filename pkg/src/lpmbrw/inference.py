"""Turning Monte Carlo samples into pass/fail evidence.

Kolmogorov-Smirnov tests use the asymptotic Kolmogorov series for p-values.
The Gumbel fit and the log-correction regression are exposed both as
functions and as scikit-learn estimators so they slot into pipelines and
``get_params``/``set_params`` tooling.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DegenerateSample, TooFewPoints, TooFewSamples
from .reports import TestReport

EULER_GAMMA = 0.5772156649015329
DEFAULT_ALPHA = 0.001


# --------------------------------------------------------------------------
# validation helpers
# --------------------------------------------------------------------------


def check_sample(x, min_size=1, name="samples"):
    """Return ``x`` as a finite 1-D float array with at least ``min_size`` entries."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_size:
        raise TooFewSamples(f"{name} needs at least {min_size} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def gumbel_cdf(x, loc=0.0, scale=1.0):
    return np.exp(-np.exp(-(np.asarray(x, dtype=float) - loc) / scale))


def exponential_cdf(x, rate=1.0):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, -np.expm1(-rate * np.maximum(x, 0)), 0.0)


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov
# --------------------------------------------------------------------------


def kolmogorov_sf(x, eps=1e-12):
    """``P(K > x) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 x^2)``."""
    if x < 0.2:
        # the CDF is below 1e-12 here and the alternating series converges slowly
        return 1.0
    total, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < eps:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_statistic_one_sample(samples, cdf):
    x = np.sort(samples)
    f = np.asarray(cdf(x), dtype=float)
    m = x.size
    upper = np.arange(1, m + 1) / m - f
    lower = f - np.arange(m) / m
    return float(max(upper.max(), lower.max()))


def ks_statistic_two_sample(a, b):
    a, b = np.sort(a), np.sort(b)
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_one_sample(samples, cdf, alpha=DEFAULT_ALPHA, name="ks_one_sample"):
    """One-sample KS test of ``samples`` against the continuous CDF ``cdf``."""
    x = check_sample(samples, 8)
    d = ks_statistic_one_sample(x, cdf)
    p = kolmogorov_sf(math.sqrt(x.size) * d)
    return TestReport(name=name, statistic=d, p_value=p, sizes=(x.size,), alpha=alpha,
                      passed=p >= alpha)


def ks_two_sample(a, b, alpha=DEFAULT_ALPHA, name="ks_two_sample"):
    """Two-sample KS test; p-value from the series at ``sqrt(mn/(m+n)) D``."""
    a = check_sample(a, 8, "a")
    b = check_sample(b, 8, "b")
    d = ks_statistic_two_sample(a, b)
    eff = a.size * b.size / (a.size + b.size)
    p = kolmogorov_sf(math.sqrt(eff) * d)
    return TestReport(name=name, statistic=d, p_value=p, sizes=(a.size, b.size),
                      alpha=alpha, passed=p >= alpha)


# --------------------------------------------------------------------------
# Gumbel fit
# --------------------------------------------------------------------------


class GumbelMomentEstimator(BaseEstimator):
    """Method-of-moments Gumbel fit with a KS goodness-of-fit check.

    ``scale = s sqrt(6) / pi`` and ``location = mean - gamma * scale`` where
    ``s`` is the sample standard deviation and ``gamma`` Euler's constant.

    Parameters
    ----------
    alpha : float
        Level of the attached KS test.
    min_samples : int
        Fewer observations raise :class:`TooFewSamples`.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, min_samples=100):
        self.alpha = alpha
        self.min_samples = min_samples

    def fit(self, X, y=None):
        x = check_sample(X, self.min_samples)
        s = float(np.std(x, ddof=1))
        if not s > 0:
            raise DegenerateSample("constant sample: Gumbel scale would be zero")
        self.scale_ = s * math.sqrt(6.0) / math.pi
        self.location_ = float(np.mean(x)) - EULER_GAMMA * self.scale_
        self.n_samples_ = x.size
        rep = ks_one_sample(x, lambda v: gumbel_cdf(v, self.location_, self.scale_),
                            alpha=self.alpha, name="gumbel_fit")
        rep.params = {"location": self.location_, "scale": self.scale_}
        self.report_ = rep
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        return (np.asarray(X, dtype=float) - self.location_) / self.scale_

    def cdf(self, X):
        check_is_fitted(self, "scale_")
        return gumbel_cdf(X, self.location_, self.scale_)

    def score_samples(self, X):
        z = self.transform(X)
        return -z - np.exp(-z) - math.log(self.scale_)


def fit_gumbel(samples, alpha=DEFAULT_ALPHA):
    """Return ``(location, scale, report)`` of a moment Gumbel fit."""
    est = GumbelMomentEstimator(alpha=alpha).fit(samples)
    return est.location_, est.scale_, est.report_


# --------------------------------------------------------------------------
# logarithmic correction regression
# --------------------------------------------------------------------------


@dataclass
class SlopeFit:
    """Least-squares fit of ``value ~ intercept + slope * log n``."""

    slope: float
    intercept: float
    slope_se: float
    residual_var: float
    count: int
    target: float | None = None

    def ci(self, level=0.95):
        if self.count <= 2:
            return -math.inf, math.inf
        q = stats.t.ppf(0.5 + level / 2, self.count - 2)
        return self.slope - q * self.slope_se, self.slope + q * self.slope_se

    def within(self, rel_tol):
        """``slope`` within ``rel_tol * |target|`` of the target."""
        return abs(self.slope - self.target) <= rel_tol * abs(self.target)


def _ols_log(n_values, values):
    x = np.log(np.asarray(n_values, dtype=float))
    y = np.asarray(values, dtype=float)
    if np.unique(x).size < 3:
        raise TooFewPoints("need at least three distinct n")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    slope = float(np.dot(xc, y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - intercept - slope * x
    dof = x.size - 2
    rv = float(np.dot(resid, resid) / dof) if dof > 0 else 0.0
    return slope, intercept, math.sqrt(rv / sxx), rv


class LogCorrectionRegressor(RegressorMixin, BaseEstimator):
    """Regress central values on ``log n``.

    ``X`` holds generation counts ``n`` (one column); ``y`` the centered
    medians. After fitting, ``slope_`` estimates the coefficient of
    ``log n`` and ``fit_`` holds the full :class:`SlopeFit`.

    Parameters
    ----------
    known_slope : float, optional
        Theoretical coefficient stored on the fit for comparison.
    min_points : int
    """

    def __init__(self, known_slope=None, min_points=4):
        self.known_slope = known_slope
        self.min_points = min_points

    def fit(self, X, y):
        n = check_sample(X, name="n")
        y = check_sample(y, name="y")
        if np.unique(n).size < self.min_points:
            raise TooFewPoints(f"need at least {self.min_points} distinct n values")
        if n.size != y.size:
            raise ValueError("X and y lengths differ")
        if np.any(n <= 0):
            raise ValueError("generation counts must be positive")
        slope, intercept, se, rv = _ols_log(n, y)
        self.slope_, self.intercept_ = slope, intercept
        self.fit_ = SlopeFit(slope, intercept, se, rv, int(n.size), self.known_slope)
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        return self.intercept_ + self.slope_ * np.log(check_sample(X, name="n"))


def fit_log_correction(points, known_slope=None, min_points=4):
    """Fit ``central value ~ a + b log n`` over a mapping ``n -> value``."""
    ns = sorted(points)
    est = LogCorrectionRegressor(known_slope, min_points).fit(ns, [points[n] for n in ns])
    return est.fit_


def intervals_disjoint(fits, level=0.95):
    """True when the confidence intervals of all fits are pairwise disjoint."""
    cis = sorted(f.ci(level) for f in fits)
    return all(hi < lo2 for (_, hi), (lo2, _) in zip(cis, cis[1:]))


# --------------------------------------------------------------------------
# spacings
# --------------------------------------------------------------------------


def spacings(values):
    """Gaps ``(v1, v2 - v1, ..., vk - v(k-1))`` of ascending values."""
    v = np.asarray(values, dtype=float)
    return np.diff(v, prepend=0.0, axis=-1)


def spacing_exponentiality(values, alpha=DEFAULT_ALPHA, name="spacing_exponentiality"):
    """Pool gaps of ascending point sets and KS-test them against Exp(1).

    ``values`` is a sequence of ascending arrays (one per replication, each
    with at least two points) or a 2-D array with one row per replication.
    """
    rows = [np.asarray(v, dtype=float) for v in values]
    if not rows or any(r.size < 2 for r in rows):
        raise TooFewSamples("each replication needs at least two points")
    if any(np.any(np.diff(r) < 0) or r[0] < 0 for r in rows):
        raise ValueError("values must be non-negative and ascending")
    gaps = np.concatenate([spacings(r) for r in rows])
    rep = ks_one_sample(gaps, exponential_cdf, alpha=alpha, name=name)
    rep.params = {"mean_gap": float(gaps.mean())}
    return rep
