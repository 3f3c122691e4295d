"""True variances and estimable variance/covariance estimators.

Scaling conventions follow the source formulas and are stated per function:
exposure-contrast quantities are for Var(sqrt(n) * tau_hat) while
total-effect quantities are for Var(tau_hat) directly. Divide by n to move
from the first convention to an estimator-scale variance.

Pairs of units whose exposures are independent contribute nothing to any of
these expressions (their joint probabilities factorize, so every bracket
vanishes); passing ``dependent_pairs`` restricts the double sums accordingly.
When it is omitted, all pairs are used and joint tables must be available.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParameterError, PositivityError
from .estimators import TotalEffectContrast
from .exposure import ExposureProbabilities
from .outcomes import PotentialOutcomeTable

__all__ = [
    "VarianceReport",
    "true_var_tec",
    "true_var_cov_total_effect",
    "conservative_var_estimator_tec",
    "var_estimators_total_effect",
    "cov_estimator_total_effect",
    "household_closed_form",
    "atec_var_estimator",
]

ZERO_JOINT = 1e-15


@dataclass(frozen=True)
class VarianceReport:
    point: float
    kind: str
    inputs_hash: str = ""
    warnings: tuple[str, ...] = ()


def _hash_inputs(*parts) -> str:
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            digest.update(np.ascontiguousarray(part, dtype=np.float64).tobytes())
        else:
            digest.update(repr(part).encode())
    return digest.hexdigest()[:16]


def _require_exact(probs: ExposureProbabilities) -> None:
    if probs.method != "exact":
        raise ParameterError(
            "true-variance formulas require exact probabilities; "
            "Monte-Carlo tables are rejected for oracle use"
        )


def _all_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _joint(table: dict, a, b) -> float:
    return table.get((a, b), 0.0)


def true_var_tec(
    table: PotentialOutcomeTable,
    probs: ExposureProbabilities,
    k,
    kprime,
    t: int = 1,
    dependent_pairs=None,
) -> float:
    """Exact Var(sqrt(n) * tau_hat^{k,k'}_t) from the full table.

    Requires exact marginals and, for every dependent pair, the same-time
    joint table. Pairs outside ``dependent_pairs`` are treated as
    independent (their brackets are identically zero).
    """
    _require_exact(probs)
    n = table.n
    total = 0.0
    for i in range(n):
        pk = probs.marginal_at(i, t, k)
        pkp = probs.marginal_at(i, t, kprime)
        if pk <= 0.0 or pkp <= 0.0:
            raise ParameterError(f"unit {i} lacks overlap for the requested contrast")
        yk = table.value(i, t, k)
        ykp = table.value(i, t, kprime)
        total += pk * (1 - pk) * (yk / pk) ** 2
        total += pkp * (1 - pkp) * (ykp / pkp) ** 2
        total += 2.0 * yk * ykp
    pairs = _all_pairs(n) if dependent_pairs is None else dependent_pairs
    for i, j in pairs:
        try:
            joint = probs.pairwise_at(i, j, t)
        except KeyError as exc:
            raise ParameterError(f"missing joint probabilities for pair ({i},{j})") from exc
        pk_i = probs.marginal_at(i, t, k)
        pk_j = probs.marginal_at(j, t, k)
        pkp_i = probs.marginal_at(i, t, kprime)
        pkp_j = probs.marginal_at(j, t, kprime)
        yk_i, yk_j = table.value(i, t, k), table.value(j, t, k)
        ykp_i, ykp_j = table.value(i, t, kprime), table.value(j, t, kprime)
        # ordered pair (i,j) and (j,i) contributions written out explicitly
        total += 2.0 * (_joint(joint, k, k) - pk_i * pk_j) * yk_i * yk_j / (pk_i * pk_j)
        total += (
            2.0
            * (_joint(joint, kprime, kprime) - pkp_i * pkp_j)
            * ykp_i
            * ykp_j
            / (pkp_i * pkp_j)
        )
        total -= (
            2.0
            * (_joint(joint, k, kprime) - pk_i * pkp_j)
            * yk_i
            * ykp_j
            / (pk_i * pkp_j)
        )
        total -= (
            2.0
            * (_joint(joint, kprime, k) - pkp_i * pk_j)
            * yk_j
            * ykp_i
            / (pk_j * pkp_i)
        )
    return total / n


def _te_targets(table, probs, contrast: TotalEffectContrast, t: int):
    n = table.n
    h1 = [contrast.h1[i][t - 1] for i in range(n)]
    h0 = [contrast.h0[i][t - 1] for i in range(n)]
    p1 = np.array([probs.marginal_at(i, t, h1[i]) for i in range(n)])
    p0 = np.array([probs.marginal_at(i, t, h0[i]) for i in range(n)])
    if np.any(p1 <= 0) or np.any(p0 <= 0):
        bad = [i for i in range(n) if p1[i] <= 0 or p0[i] <= 0]
        raise ParameterError(f"units without overlap for h^1/h^0 at t={t}: {bad[:10]}")
    return h1, h0, p1, p0


def true_var_cov_total_effect(
    table: PotentialOutcomeTable,
    probs: ExposureProbabilities,
    contrast: TotalEffectContrast,
    t: int,
    tprime: int | None = None,
    dependent_pairs=None,
    crosstime_pairs=None,
) -> tuple[float, float]:
    """Exact (Var(tau_hat^TE_t), Cov(tau_hat^TE_t, tau_hat^TE_t')).

    The covariance is computed over ordered unit pairs, which reduces to the
    textbook 2-sum-over-i<j form whenever the cross-time joints are
    symmetric in the two units. ``crosstime_pairs`` lists the (i, j) pairs
    (including i == j automatically) whose cross-time joints are stored;
    omitted pairs use the product of marginals. With ``tprime=None`` only the
    variance is computed and the covariance returns 0.
    """
    _require_exact(probs)
    n = table.n
    h1, h0, p1, p0 = _te_targets(table, probs, contrast, t)
    y1 = np.array([table.value(i, t, h1[i]) for i in range(n)])
    y0 = np.array([table.value(i, t, h0[i]) for i in range(n)])

    var = float(
        np.sum(y1**2 * (1 - p1) / p1 + y0**2 * (1 - p0) / p0 + 2.0 * y1 * y0)
    )
    pairs = _all_pairs(n) if dependent_pairs is None else dependent_pairs
    for i, j in pairs:
        try:
            joint = probs.pairwise_at(i, j, t)
        except KeyError as exc:
            raise ParameterError(f"missing joint probabilities for pair ({i},{j})") from exc
        b11 = (_joint(joint, h1[i], h1[j]) - p1[i] * p1[j]) * y1[i] * y1[j] / (p1[i] * p1[j])
        b01 = (_joint(joint, h0[i], h1[j]) - p0[i] * p1[j]) * y0[i] * y1[j] / (p0[i] * p1[j])
        b10 = (_joint(joint, h1[i], h0[j]) - p1[i] * p0[j]) * y1[i] * y0[j] / (p1[i] * p0[j])
        b00 = (_joint(joint, h0[i], h0[j]) - p0[i] * p0[j]) * y0[i] * y0[j] / (p0[i] * p0[j])
        var += 2.0 * (b11 - b01 - b10 + b00)
    var /= n * n

    if tprime is None:
        return var, 0.0
    if tprime == t:
        raise ParameterError("covariance requires t != t'")

    h1p, h0p, p1p, p0p = _te_targets(table, probs, contrast, tprime)
    y1p = np.array([table.value(i, tprime, h1p[i]) for i in range(n)])
    y0p = np.array([table.value(i, tprime, h0p[i]) for i in range(n)])

    stored = set()
    if crosstime_pairs is not None:
        for i, j in crosstime_pairs:
            stored.add((i, j))

    def ct_joint(i, j):
        if crosstime_pairs is None or (i, j) in stored or (j, i) in stored or i == j:
            try:
                return probs.crosstime_at(i, t, j, tprime)
            except KeyError:
                pass
        left = {h1[i]: p1[i], h0[i]: p0[i]}
        right = {h1p[j]: p1p[j], h0p[j]: p0p[j]}
        return {(a, b): pa * pb for a, pa in left.items() for b, pb in right.items()}

    cov = 0.0
    for i in range(n):
        for j in range(n):
            joint = ct_joint(i, j)
            cov += (
                (_joint(joint, h1[i], h1p[j]) - p1[i] * p1p[j])
                * y1[i]
                * y1p[j]
                / (p1[i] * p1p[j])
            )
            cov -= (
                (_joint(joint, h0[i], h1p[j]) - p0[i] * p1p[j])
                * y0[i]
                * y1p[j]
                / (p0[i] * p1p[j])
            )
            cov -= (
                (_joint(joint, h1[i], h0p[j]) - p1[i] * p0p[j])
                * y1[i]
                * y0p[j]
                / (p1[i] * p0p[j])
            )
            cov += (
                (_joint(joint, h0[i], h0p[j]) - p0[i] * p0p[j])
                * y0[i]
                * y0p[j]
                / (p0[i] * p0p[j])
            )
    cov /= n * n
    return var, cov


def conservative_var_estimator_tec(
    observed: np.ndarray,
    exposures,
    probs: ExposureProbabilities,
    k,
    kprime,
    t: int = 1,
    dependent_pairs=None,
    within_unit_bound: bool = True,
) -> VarianceReport:
    """Single-draw conservative estimator of Var(sqrt(n) * tau_hat^{k,k'}_t).

    Unobservable cross products whose joint exposure probability is zero are
    replaced by half-sums of squares. With ``within_unit_bound`` the never
    co-observable within-unit product 2 Y_i(k) Y_i(k') is bounded the same
    way, which makes the expectation an upper bound for the true variance
    regardless of outcome signs. ``within_unit_bound=False`` drops that term,
    reproducing the shorter published form of the estimator: noticeably
    tighter in practice, but not almost-surely conservative (its expectation
    can fall below the truth when the within-unit products are large).
    """
    observed = np.asarray(observed, dtype=np.float64)
    y = observed[:, t - 1] if observed.ndim == 2 else observed
    n = y.size
    pk = np.empty(n)
    pkp = np.empty(n)
    ind_k = np.zeros(n, dtype=bool)
    ind_kp = np.zeros(n, dtype=bool)
    for i in range(n):
        pk[i] = probs.marginal_at(i, t, k)
        pkp[i] = probs.marginal_at(i, t, kprime)
        h = exposures[i][t - 1]
        ind_k[i] = h == k
        ind_kp[i] = h == kprime
    if np.any(pk <= 0) or np.any(pkp <= 0):
        bad = [i for i in range(n) if pk[i] <= 0 or pkp[i] <= 0]
        raise ParameterError(f"units without overlap: {bad[:10]}")

    total = float(np.sum(np.where(ind_k, (1 - pk) * (y / pk) ** 2, 0.0)))
    total += float(np.sum(np.where(ind_kp, (1 - pkp) * (y / pkp) ** 2, 0.0)))
    if within_unit_bound:
        # the within-unit cross product 2 Y_i(k) Y_i(k') is never observable
        # (pi_ii(k,k') = 0): bound it by the half-sum of squares like any
        # other zero-joint pair, keeping the expectation above the truth
        total += float(np.sum(np.where(ind_k, y * y / pk, 0.0)))
        total += float(np.sum(np.where(ind_kp, y * y / pkp, 0.0)))

    pairs = _all_pairs(n) if dependent_pairs is None else dependent_pairs
    for i, j in pairs:
        joint = probs.pairwise_at(i, j, t)
        for a, b in ((i, j), (j, i)):
            jkk = _joint(joint if a == i else _swap(joint), k, k)
            if jkk > ZERO_JOINT:
                if ind_k[a] and ind_k[b]:
                    total += (
                        (jkk - pk[a] * pk[b]) / jkk * (y[a] / pk[a]) * (y[b] / pk[b])
                    )
            else:
                total += _half_square(ind_k[a], y[a], pk[a]) + _half_square(
                    ind_k[b], y[b], pk[b]
                )
            jpp = _joint(joint if a == i else _swap(joint), kprime, kprime)
            if jpp > ZERO_JOINT:
                if ind_kp[a] and ind_kp[b]:
                    total += (
                        (jpp - pkp[a] * pkp[b])
                        / jpp
                        * (y[a] / pkp[a])
                        * (y[b] / pkp[b])
                    )
            else:
                total += _half_square(ind_kp[a], y[a], pkp[a]) + _half_square(
                    ind_kp[b], y[b], pkp[b]
                )
            jkp = _joint(joint if a == i else _swap(joint), k, kprime)
            if jkp > ZERO_JOINT:
                if ind_k[a] and ind_kp[b]:
                    total -= (
                        2.0
                        * (jkp - pk[a] * pkp[b])
                        / jkp
                        * (y[a] / pk[a])
                        * (y[b] / pkp[b])
                    )
            else:
                total += 2.0 * (
                    _half_square(ind_k[a], y[a], pk[a])
                    + _half_square(ind_kp[b], y[b], pkp[b])
                )
    return VarianceReport(
        point=total / n,
        kind="conservative-TEC",
        inputs_hash=_hash_inputs(y, k, kprime, t),
    )


def _swap(joint: dict) -> dict:
    return {(b, a): v for (a, b), v in joint.items()}


def _half_square(indicator: bool, y: float, prob: float) -> float:
    return (y * y) / (2.0 * prob) if indicator else 0.0


def var_estimators_total_effect(
    observed: np.ndarray,
    exposures,
    probs: ExposureProbabilities,
    contrast: TotalEffectContrast,
    t: int,
    dependent_pairs=None,
) -> tuple[VarianceReport, VarianceReport]:
    """Upper and lower single-draw estimators of Var(tau_hat^TE_t).

    The pair brackets the truth in expectation when all potential outcomes
    are non-negative; a warning is recorded when negative outcomes are seen.
    """
    observed = np.asarray(observed, dtype=np.float64)
    y = observed[:, t - 1] if observed.ndim == 2 else observed
    n = y.size
    h1 = [contrast.h1[i][t - 1] for i in range(n)]
    h0 = [contrast.h0[i][t - 1] for i in range(n)]
    p1 = np.array([probs.marginal_at(i, t, h1[i]) for i in range(n)])
    p0 = np.array([probs.marginal_at(i, t, h0[i]) for i in range(n)])
    if np.any(p1 <= 0) or np.any(p0 <= 0):
        bad = [i for i in range(n) if p1[i] <= 0 or p0[i] <= 0]
        raise ParameterError(f"units without overlap for h^1/h^0: {bad[:10]}")
    ind1 = np.array([exposures[i][t - 1] == h1[i] for i in range(n)])
    ind0 = np.array([exposures[i][t - 1] == h0[i] for i in range(n)])

    base = np.sum(np.where(ind1, (1 - p1) * (y / p1) ** 2, 0.0))
    base += np.sum(np.where(ind0, (1 - p0) * (y / p0) ** 2, 0.0))
    upper = float(base + np.sum(np.where(ind1, y * y / p1, 0.0)))
    upper += float(np.sum(np.where(ind0, y * y / p0, 0.0)))
    lower = float(base)

    pairs = _all_pairs(n) if dependent_pairs is None else dependent_pairs
    for i, j in pairs:
        joint = probs.pairwise_at(i, j, t)
        j11 = _joint(joint, h1[i], h1[j])
        j01 = _joint(joint, h0[i], h1[j])
        j10 = _joint(joint, h1[i], h0[j])
        j00 = _joint(joint, h0[i], h0[j])

        if j11 > ZERO_JOINT:
            term11 = (
                (j11 - p1[i] * p1[j]) / j11 * (y[i] / p1[i]) * (y[j] / p1[j])
                if ind1[i] and ind1[j]
                else 0.0
            )
            upper += 2.0 * term11
            lower += 2.0 * term11
        else:
            lower -= 2.0 * (
                _half_square(ind1[i], y[i], p1[i]) + _half_square(ind1[j], y[j], p1[j])
            )
        if j00 > ZERO_JOINT:
            term00 = (
                (j00 - p0[i] * p0[j]) / j00 * (y[i] / p0[i]) * (y[j] / p0[j])
                if ind0[i] and ind0[j]
                else 0.0
            )
            upper += 2.0 * term00
            lower += 2.0 * term00
        else:
            lower -= 2.0 * (
                _half_square(ind0[i], y[i], p0[i]) + _half_square(ind0[j], y[j], p0[j])
            )
        if j01 > ZERO_JOINT:
            term01 = (
                (j01 - p0[i] * p1[j]) / j01 * (y[i] / p0[i]) * (y[j] / p1[j])
                if ind0[i] and ind1[j]
                else 0.0
            )
            upper -= 2.0 * term01
            lower -= 2.0 * term01
        else:
            upper += 2.0 * (
                _half_square(ind0[i], y[i], p0[i]) + _half_square(ind1[j], y[j], p1[j])
            )
        if j10 > ZERO_JOINT:
            term10 = (
                (j10 - p1[i] * p0[j]) / j10 * (y[i] / p1[i]) * (y[j] / p0[j])
                if ind1[i] and ind0[j]
                else 0.0
            )
            upper -= 2.0 * term10
            lower -= 2.0 * term10
        else:
            upper += 2.0 * (
                _half_square(ind1[i], y[i], p1[i]) + _half_square(ind0[j], y[j], p0[j])
            )

    warnings = ()
    if np.any(y[ind1 | ind0] < 0):
        warnings = ("negative observed outcomes: upper/lower bracketing not guaranteed",)
    hash_ = _hash_inputs(y, t)
    return (
        VarianceReport(upper / (n * n), "upper-TE", hash_, warnings),
        VarianceReport(lower / (n * n), "lower-TE", hash_, warnings),
    )


def cov_estimator_total_effect(
    observed: np.ndarray,
    exposures,
    probs: ExposureProbabilities,
    contrast: TotalEffectContrast,
    t: int,
    tprime: int,
    dependent_pairs=None,
) -> VarianceReport:
    """Single-draw unbiased estimator of Cov(tau_hat^TE_t, tau_hat^TE_t').

    Every indicator term divides by a cross-time joint probability, so all
    joints needed by a dependent pair must be strictly positive; a zero
    joint raises a positivity error (no conservative substitution exists for
    the covariance). Pairs with factorizing joints contribute exactly zero.
    """
    if t == tprime:
        raise ParameterError("covariance requires t != t'")
    observed = np.asarray(observed, dtype=np.float64)
    n = observed.shape[0]
    yt = observed[:, t - 1]
    ytp = observed[:, tprime - 1]
    h1t = [contrast.h1[i][t - 1] for i in range(n)]
    h0t = [contrast.h0[i][t - 1] for i in range(n)]
    h1p = [contrast.h1[i][tprime - 1] for i in range(n)]
    h0p = [contrast.h0[i][tprime - 1] for i in range(n)]
    p1t = np.array([probs.marginal_at(i, t, h1t[i]) for i in range(n)])
    p0t = np.array([probs.marginal_at(i, t, h0t[i]) for i in range(n)])
    p1p = np.array([probs.marginal_at(i, tprime, h1p[i]) for i in range(n)])
    p0p = np.array([probs.marginal_at(i, tprime, h0p[i]) for i in range(n)])
    ind1t = np.array([exposures[i][t - 1] == h1t[i] for i in range(n)])
    ind0t = np.array([exposures[i][t - 1] == h0t[i] for i in range(n)])
    ind1p = np.array([exposures[i][tprime - 1] == h1p[i] for i in range(n)])
    ind0p = np.array([exposures[i][tprime - 1] == h0p[i] for i in range(n)])

    stored = None
    if dependent_pairs is not None:
        stored = set()
        for i, j in dependent_pairs:
            stored.add((i, j))
            stored.add((j, i))

    def ct_joint(i, j):
        if stored is None or (i, j) in stored or i == j:
            try:
                return probs.crosstime_at(i, t, j, tprime)
            except KeyError:
                pass
        left = {h1t[i]: p1t[i], h0t[i]: p0t[i]}
        right = {h1p[j]: p1p[j], h0p[j]: p0p[j]}
        return {(a, b): pa * pb for a, pa in left.items() for b, pb in right.items()}

    total = 0.0
    for i in range(n):
        for j in range(n):
            joint = ct_joint(i, j)
            for (hi, pi, indi, sign_i) in (
                (h1t[i], p1t[i], ind1t[i], 1.0),
                (h0t[i], p0t[i], ind0t[i], -1.0),
            ):
                for (hj, pj, indj, sign_j) in (
                    (h1p[j], p1p[j], ind1p[j], 1.0),
                    (h0p[j], p0p[j], ind0p[j], -1.0),
                ):
                    jt = _joint(joint, hi, hj)
                    numer = jt - pi * pj
                    if jt <= ZERO_JOINT:
                        if abs(numer) > ZERO_JOINT:
                            raise PositivityError(
                                f"zero cross-time joint for units ({i},{j}) at "
                                f"(t={t}, t'={tprime}); the covariance estimator "
                                "is undefined"
                            )
                        continue
                    if indi and indj:
                        total += (
                            sign_i
                            * sign_j
                            * numer
                            / jt
                            * (yt[i] / pi)
                            * (ytp[j] / pj)
                        )
    return VarianceReport(
        point=total / (n * n),
        kind="cov-TE",
        inputs_hash=_hash_inputs(yt, ytp, t, tprime),
    )


def household_closed_form(
    table: PotentialOutcomeTable,
    n_households: int,
    r: int,
    T: int,
    k=None,
    kprime=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form variance/covariance for the household carryover setting.

    Setting: Bernoulli(1/2) design, stratified-carryover map, ``n_households``
    households of equal size r, contrast k = (1,1,r-1,r-1) vs k' = (0,0,0,0).
    Returns per-period Var(X_t) for t = 1..T and lag-1 Cov(X_t, X_{t+1}) for
    t = 1..T-1, where X_t = sqrt(nr/T) (tau_hat^{k,k'}_t - tau^{k,k'}_t).

    Period 1 exposures read a single assignment column (the boundary
    convention), so its variance factor is 2^r - 1 instead of the
    steady-state 2^{2r} - 1; the lag-1 covariance factor is 2^r - 1 at every
    lag, boundary included.
    """
    if k is None:
        k = (1, 1, r - 1, r - 1)
    if kprime is None:
        kprime = (0, 0, 0, 0)
    if k != (1, 1, r - 1, r - 1) or kprime != (0, 0, 0, 0):
        raise ContractError(
            "closed form holds only for the all-treated vs all-control contrast"
        )
    if table.n != n_households * r:
        raise ContractError(
            f"table has {table.n} units, expected {n_households} households of size {r}"
        )
    if table.T < T:
        raise ContractError("table is shorter than the requested horizon")

    yk = np.array(
        [[table.value(i, t, k) for t in range(1, T + 1)] for i in range(table.n)]
    )
    ykp = np.array(
        [[table.value(i, t, kprime) for t in range(1, T + 1)] for i in range(table.n)]
    )
    scale = 1.0 / (n_households * r * T)

    variances = np.zeros(T)
    for t in range(T):
        factor = (2.0**r - 1.0) if t == 0 else (2.0 ** (2 * r) - 1.0)
        total = float(np.sum(factor * (yk[:, t] ** 2 + ykp[:, t] ** 2)))
        total += float(2.0 * np.sum(yk[:, t] * ykp[:, t]))
        for l in range(n_households):
            members = range(l * r, (l + 1) * r)
            sk = float(sum(yk[q, t] for q in members))
            skp = float(sum(ykp[q, t] for q in members))
            sqk = float(sum(yk[q, t] ** 2 for q in members))
            sqkp = float(sum(ykp[q, t] ** 2 for q in members))
            cross = float(sum(yk[q, t] * ykp[q, t] for q in members))
            total += factor * ((sk * sk - sqk) + (skp * skp - sqkp))
            total += 2.0 * (sk * skp - cross)
        variances[t] = scale * total

    covariances = np.zeros(max(T - 1, 0))
    cov_factor = 2.0**r - 1.0
    for t in range(T - 1):
        total = 0.0
        for l in range(n_households):
            members = list(range(l * r, (l + 1) * r))
            sk_t = float(sum(yk[q, t] for q in members))
            skp_t = float(sum(ykp[q, t] for q in members))
            sk_n = float(sum(yk[q, t + 1] for q in members))
            skp_n = float(sum(ykp[q, t + 1] for q in members))
            total += cov_factor * (sk_t * sk_n + skp_t * skp_n)
            total += skp_t * sk_n + sk_t * skp_n
        covariances[t] = scale * total
    return variances, covariances


def plugin_convex_variance(weights, per_time) -> VarianceReport:
    """Plug-in variance of a weighted combination of per-period estimates.

    Under temporally independent assignments the combination's variance is
    sum_i alpha_i^2 V_i; ``per_time`` holds the per-period variance estimates
    (floats or reports) aligned with ``weights``.
    """
    values = np.asarray(
        [p.point if isinstance(p, VarianceReport) else float(p) for p in per_time]
    )
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != values.shape:
        raise ParameterError("weights and per-time variances have different lengths")
    return VarianceReport(
        point=float(np.sum(w**2 * values)),
        kind="plugin-convex",
        inputs_hash=_hash_inputs(w, values),
    )


def atec_var_estimator(per_time) -> VarianceReport:
    """Variance estimate for the temporal-average estimator.

    ``per_time`` holds per-period estimates of Var(tau_hat_t) (estimator
    scale), as floats or VarianceReports; the aggregate is their sum over T^2.
    """
    values = [p.point if isinstance(p, VarianceReport) else float(p) for p in per_time]
    if not values:
        raise ParameterError("need at least one per-time report")
    T = len(values)
    return VarianceReport(
        point=float(np.sum(values)) / (T * T),
        kind="atec-aggregate",
        inputs_hash=_hash_inputs(np.asarray(values)),
    )
