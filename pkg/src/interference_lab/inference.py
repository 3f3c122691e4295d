"""Confidence intervals, coverage accounting, and normality diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

__all__ = [
    "ConfidenceInterval",
    "gaussian_ci",
    "chebyshev_ci",
    "coverage",
    "NormalityReport",
    "normality_diagnostics",
    "normal_cdf",
    "normal_quantile",
]


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# Acklam's rational approximation for the standard normal inverse CDF,
# polished with one Halley step against erfc; accurate to ~1e-15.
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)


def normal_quantile(q: float) -> float:
    """Standard normal quantile z_q via rational approximation plus refinement."""
    if not 0.0 < q < 1.0:
        raise ParameterError(f"quantile level must be in (0, 1), got {q}")
    p_low = 0.02425
    if q < p_low:
        u = math.sqrt(-2.0 * math.log(q))
        x = (
            ((((_C[0] * u + _C[1]) * u + _C[2]) * u + _C[3]) * u + _C[4]) * u + _C[5]
        ) / ((((_D[0] * u + _D[1]) * u + _D[2]) * u + _D[3]) * u + 1.0)
    elif q <= 1.0 - p_low:
        u = q - 0.5
        v = u * u
        x = (
            (((((_A[0] * v + _A[1]) * v + _A[2]) * v + _A[3]) * v + _A[4]) * v + _A[5])
            * u
            / (((((_B[0] * v + _B[1]) * v + _B[2]) * v + _B[3]) * v + _B[4]) * v + 1.0)
        )
    else:
        u = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -(
            ((((_C[0] * u + _C[1]) * u + _C[2]) * u + _C[3]) * u + _C[4]) * u + _C[5]
        ) / ((((_D[0] * u + _D[1]) * u + _D[2]) * u + _D[3]) * u + 1.0)
    # one Halley refinement
    e = normal_cdf(x) - q
    pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    u = e / pdf
    x -= u / (1.0 + 0.5 * x * u)
    return x


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    method: str
    level: float
    estimate: float
    var_hat: float
    bias_hat: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.lower > self.upper:
            raise ParameterError("interval endpoints out of order")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def covers(self, truth: float) -> bool:
        return self.lower <= truth <= self.upper


def gaussian_ci(
    estimate: float, var_hat: float, alpha: float, delta: float = 0.0
) -> ConfidenceInterval:
    """Normal-approximation interval with delta-inflated critical value.

    Half-width z_{1-alpha/2} / sqrt(1 - delta) * sqrt(var_hat); delta = 0
    gives the plain Gaussian interval.
    """
    if var_hat < 0:
        raise ParameterError("var_hat must be non-negative")
    if not 0.0 < alpha < 1.0:
        raise ParameterError("alpha must be in (0, 1)")
    if not 0.0 <= delta < 1.0:
        raise ParameterError("delta must be in [0, 1)")
    half = normal_quantile(1.0 - alpha / 2.0) / math.sqrt(1.0 - delta) * math.sqrt(var_hat)
    return ConfidenceInterval(
        lower=estimate - half,
        upper=estimate + half,
        method="gaussian-delta",
        level=1.0 - alpha,
        estimate=estimate,
        var_hat=var_hat,
        delta=delta,
    )


def chebyshev_ci(
    estimate: float, var_hat: float, bias_hat: float, delta: float
) -> ConfidenceInterval:
    """Bias-corrected Chebyshev interval at level 1 - delta.

    Centered on estimate - bias_hat with half-width sqrt(var_hat / delta).
    """
    if var_hat < 0:
        raise ParameterError("var_hat must be non-negative")
    if not 0.0 < delta < 1.0:
        raise ParameterError("delta must be in (0, 1)")
    center = estimate - bias_hat
    half = math.sqrt(var_hat / delta)
    return ConfidenceInterval(
        lower=center - half,
        upper=center + half,
        method="chebyshev-bias-corrected",
        level=1.0 - delta,
        estimate=estimate,
        var_hat=var_hat,
        bias_hat=bias_hat,
        delta=delta,
    )


def coverage(intervals, truth: float) -> tuple[float, float]:
    """Fraction of intervals containing the truth, with its binomial SE."""
    intervals = list(intervals)
    if not intervals:
        raise ParameterError("coverage needs at least one interval")
    hits = sum(1 for ci in intervals if ci.covers(truth))
    p = hits / len(intervals)
    se = math.sqrt(p * (1.0 - p) / len(intervals))
    return p, se


@dataclass(frozen=True)
class NormalityReport:
    n: int
    skewness: float
    excess_kurtosis: float
    jb_stat: float
    jb_pvalue: float
    ks_distance: float
    qq_points: np.ndarray  # (m, 2): theoretical, sample quantiles
    degenerate: bool = False


def normality_diagnostics(samples, qq_points: int = 200) -> NormalityReport:
    """Moment-based normality diagnostics for standardized estimates.

    Reports skewness, excess kurtosis, the Jarque-Bera-type statistic
    n (skew^2/6 + kurt^2/24) with its chi-square(2) tail probability
    exp(-JB/2), the Kolmogorov-Smirnov distance to the standard normal, and
    quantile pairs for Q-Q plotting. Requires at least 20 samples.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        x = x.ravel()
    n = x.size
    if n < 20:
        raise ParameterError(f"need at least 20 samples, got {n}")
    mean = float(x.mean())
    centered = x - mean
    m2 = float(np.mean(centered**2))
    xs = np.sort(x)
    grid = np.linspace(0, 1, min(qq_points, n) + 2)[1:-1]
    theo = np.array([normal_quantile(g) for g in grid])
    samp = np.quantile(xs, grid)
    qq = np.column_stack([theo, samp])

    cdf = 0.5 * np.vectorize(math.erfc)(-xs / math.sqrt(2.0))
    upper = np.arange(1, n + 1) / n - cdf
    lower = cdf - np.arange(0, n) / n
    ks = float(max(upper.max(), lower.max()))

    if m2 <= 0.0:
        return NormalityReport(
            n=n,
            skewness=0.0,
            excess_kurtosis=0.0,
            jb_stat=float("inf"),
            jb_pvalue=0.0,
            ks_distance=ks,
            qq_points=qq,
            degenerate=True,
        )
    skew = float(np.mean(centered**3) / m2**1.5)
    kurt = float(np.mean(centered**4) / m2**2 - 3.0)
    jb = n * (skew**2 / 6.0 + kurt**2 / 24.0)
    pvalue = math.exp(-jb / 2.0)
    return NormalityReport(
        n=n,
        skewness=skew,
        excess_kurtosis=kurt,
        jb_stat=jb,
        jb_pvalue=pvalue,
        ks_distance=ks,
        qq_points=qq,
    )
