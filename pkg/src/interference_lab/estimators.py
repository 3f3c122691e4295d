"""Horvitz-Thompson estimators and the stability-based combination estimators.

All operations are pure functions of their inputs. Observed outcomes enter as
an (n, T) float array, realized exposures as per-unit lists of exposure
values (time 1-based), and probabilities as an ``ExposureProbabilities``
table with the marginals (and, where needed, joints) filled in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, OverlapError, ParameterError
from .exposure import ExposureProbabilities, ExposureValue

__all__ = [
    "TecContrast",
    "TotalEffectContrast",
    "HtInput",
    "ht_tec",
    "ht_atec",
    "ht_total_effect",
    "ht_avg_total_effect",
    "EpsilonEstimate",
    "estimate_epsilon",
    "optimal_alpha_pair",
    "WeightSolution",
    "solve_weights",
    "convex_estimate",
]


@dataclass(frozen=True)
class TecContrast:
    """Exposure pair (k, k') shared by every unit."""

    k: ExposureValue
    kprime: ExposureValue

    def target(self, which: str, i: int, t: int) -> ExposureValue:
        return self.k if which == "k" else self.kprime


@dataclass(frozen=True)
class TotalEffectContrast:
    """Unit-specific all-treated / all-control exposures h^1, h^0.

    ``h1`` and ``h0`` are per-unit lists indexed by t-1 (as produced by
    ``outcomes.total_effect_exposures``).
    """

    h1: tuple
    h0: tuple

    def target(self, which: str, i: int, t: int) -> ExposureValue:
        source = self.h1 if which == "k" else self.h0
        return source[i][t - 1]


@dataclass
class HtInput:
    """Observed data plus the probability table backing the weights."""

    observed: np.ndarray
    exposures: list
    probs: ExposureProbabilities
    contrast: TecContrast | TotalEffectContrast

    def __post_init__(self):
        self.observed = np.asarray(self.observed, dtype=np.float64)
        if self.observed.ndim == 1:
            self.observed = self.observed[:, None]

    @property
    def n(self) -> int:
        return self.observed.shape[0]

    @property
    def T(self) -> int:
        return self.observed.shape[1]


def _check_overlap(inp: HtInput, t: int) -> None:
    offenders = []
    for i in range(inp.n):
        for which in ("k", "kprime"):
            target = inp.contrast.target(which, i, t)
            if inp.probs.marginal_at(i, t, target) <= 0.0:
                offenders.append(i)
                break
    if offenders:
        raise OverlapError(
            f"zero exposure probability at t={t} for units {offenders[:20]}"
            + ("..." if len(offenders) > 20 else ""),
            units=offenders,
        )


def ht_tec(inp: HtInput, t: int) -> float:
    """Inverse-probability-weighted exposure contrast at time t."""
    if not isinstance(inp.contrast, TecContrast):
        raise ParameterError("ht_tec needs a TecContrast")
    _check_overlap(inp, t)
    total = 0.0
    for i in range(inp.n):
        h = inp.exposures[i][t - 1]
        y = inp.observed[i, t - 1]
        if h == inp.contrast.k:
            total += y / inp.probs.marginal_at(i, t, inp.contrast.k)
        if h == inp.contrast.kprime:
            total -= y / inp.probs.marginal_at(i, t, inp.contrast.kprime)
    return total / inp.n


def ht_atec(inp: HtInput, times=None) -> float:
    """Temporal mean of the per-time exposure-contrast estimates."""
    times = range(1, inp.T + 1) if times is None else times
    vals = [ht_tec(inp, t) for t in times]
    if not vals:
        raise ParameterError("no time steps supplied")
    return float(np.mean(vals))


def ht_total_effect(inp: HtInput, t: int) -> float:
    """Estimated contrast between everyone-treated and everyone-control."""
    if not isinstance(inp.contrast, TotalEffectContrast):
        raise ParameterError("ht_total_effect needs a TotalEffectContrast")
    _check_overlap(inp, t)
    total = 0.0
    for i in range(inp.n):
        h = inp.exposures[i][t - 1]
        y = inp.observed[i, t - 1]
        h1 = inp.contrast.h1[i][t - 1]
        h0 = inp.contrast.h0[i][t - 1]
        if h == h1:
            total += y / inp.probs.marginal_at(i, t, h1)
        if h == h0:
            total -= y / inp.probs.marginal_at(i, t, h0)
    return total / inp.n


def ht_avg_total_effect(inp: HtInput, times=None) -> float:
    times = range(1, inp.T + 1) if times is None else times
    vals = [ht_total_effect(inp, t) for t in times]
    if not vals:
        raise ParameterError("no time steps supplied")
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Stability machinery


@dataclass(frozen=True)
class EpsilonEstimate:
    value: float
    informative: bool
    matches: int


def estimate_epsilon(observed: np.ndarray, exposures) -> EpsilonEstimate:
    """Data-driven lower bound on the stability parameter.

    Scans units whose exposure repeats across consecutive periods and takes
    the largest absolute outcome change. When no exposure ever repeats the
    estimate is 0 and flagged non-informative.
    """
    observed = np.asarray(observed, dtype=np.float64)
    n, T = observed.shape
    best = 0.0
    matches = 0
    for t in range(1, T):
        for i in range(n):
            if exposures[i][t - 1] == exposures[i][t]:
                matches += 1
                diff = abs(observed[i, t] - observed[i, t - 1])
                if diff > best:
                    best = diff
    return EpsilonEstimate(best, matches > 0, matches)


def optimal_alpha_pair(var_t: float, var_tp: float, eps: float, lag: int = 1) -> float:
    """MSE-optimal weight on the current-period estimate for a two-term mix."""
    if var_t < 0 or var_tp < 0:
        raise ParameterError("variances must be non-negative")
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    if lag < 1:
        raise ParameterError("lag must be >= 1")
    denom = 4.0 * lag * lag * eps * eps + var_t + var_tp
    if denom <= 0.0:
        raise DegenerateInputError("variances and eps are all zero")
    return float(min(1.0, max(0.0, 1.0 - var_t / denom)))


@dataclass(frozen=True)
class WeightSolution:
    """Solved weights for the k-step weighted combination estimator."""

    weights: np.ndarray
    objective: float
    bias_bound: float
    method: str

    @property
    def k(self) -> int:
        return len(self.weights)


def _weight_objective(alpha, variances, eps, bias_coef, cov=None):
    quad = float(np.sum(alpha**2 * variances))
    if cov is not None:
        quad += float(alpha @ cov @ alpha) - float(np.sum(alpha**2 * np.diag(cov)))
    drift = float(bias_coef @ alpha)
    return quad + 4.0 * drift * drift * eps * eps


def _solve_kkt(Q: np.ndarray, constraints: list[tuple[np.ndarray, float]]):
    """Minimize a'Qa subject to linear equalities via the KKT linear system."""
    k = Q.shape[0]
    m = len(constraints)
    kkt = np.zeros((k + m, k + m))
    rhs = np.zeros(k + m)
    kkt[:k, :k] = 2.0 * Q
    for row, (coef, value) in enumerate(constraints):
        kkt[k + row, :k] = coef
        kkt[:k, k + row] = coef
        rhs[k + row] = value
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateInputError(f"singular KKT system: {exc}") from exc
    return sol[:k]


def solve_weights(
    variances,
    eps: float,
    bias_cap: float | None = None,
    covariances: np.ndarray | None = None,
) -> WeightSolution:
    """Weights for combining the last k total-effect estimates.

    Minimizes the predicted MSE bound
        sum_i alpha_i^2 V_i (+ covariance cross terms)
        + 4 (sum_i (k-i) alpha_i)^2 eps^2
    subject to the weights summing to 1, and optionally to the worst-case
    bias 2*sum_i (k-i) alpha_i * eps not exceeding ``bias_cap``. Weight i=1
    is the oldest period (t-k+1), weight i=k the current one. The default
    assumes temporally independent assignments (zero covariances).
    """
    variances = np.asarray(variances, dtype=np.float64)
    k = variances.size
    if k < 2:
        raise ParameterError("need at least two periods to combine")
    if np.any(variances < 0):
        raise ParameterError("variances must be non-negative")
    if eps < 0:
        raise ParameterError("eps must be non-negative")
    bias_coef = np.arange(k - 1, -1, -1, dtype=np.float64)  # (k-1, k-2, ..., 0)

    Q = np.diag(variances) + 4.0 * eps * eps * np.outer(bias_coef, bias_coef)
    if covariances is not None:
        cov = np.asarray(covariances, dtype=np.float64)
        if cov.shape != (k, k):
            raise ParameterError("covariance matrix shape mismatch")
        Q = Q + cov - np.diag(np.diag(cov))
    ones = np.ones(k)

    if not np.any(Q):
        raise DegenerateInputError("all variances, covariances and eps are zero")

    alpha = _solve_kkt(Q, [(ones, 1.0)])
    method = "equality-KKT" if k > 2 else "closed-form-k2"
    drift = float(bias_coef @ alpha)

    if bias_cap is not None:
        if bias_cap < 0:
            raise ParameterError("bias_cap must be non-negative")
        if 2.0 * drift * eps > bias_cap + 1e-12:
            if eps <= 0:
                raise DegenerateInputError("positive drift with zero eps is impossible")
            capped = _solve_kkt(
                Q, [(ones, 1.0), (bias_coef, bias_cap / (2.0 * eps))]
            )
            alpha = capped
            method = "active-set-with-bias-cap"
            drift = float(bias_coef @ alpha)

    cov_arg = None
    if covariances is not None:
        cov_arg = np.asarray(covariances, dtype=np.float64)
    objective = _weight_objective(alpha, variances, eps, bias_coef, cov_arg)
    return WeightSolution(
        weights=alpha,
        objective=objective,
        bias_bound=2.0 * drift * eps,
        method=method,
    )


def convex_estimate(per_time_estimates, weights) -> float:
    """Weighted sum of per-period estimates; weights must sum to 1."""
    est = np.asarray(per_time_estimates, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if est.shape != w.shape:
        raise ParameterError("estimates and weights have different lengths")
    if abs(w.sum() - 1.0) > 1e-8:
        raise ParameterError(f"weights sum to {w.sum()}, expected 1")
    return float(est @ w)
