"""Potential-outcome tables, data-generating processes, and estimands.

The assignment mechanism is the only source of randomness downstream: tables
are drawn once, then treated as fixed. Table cells are indexed by
(unit, time, exposure value); times are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CompletenessError, ParameterError
from .exposure import ExposureMap, ExposureValue, evaluate
from .population import InterferenceGraph

__all__ = [
    "PotentialOutcomeTable",
    "DgpSpec",
    "EstimandValue",
    "Tec",
    "Atec",
    "TotalEffect",
    "AvgTotalEffect",
    "generate",
    "true_estimand",
    "realize",
    "stability_violation",
    "total_effect_exposures",
]


class PotentialOutcomeTable:
    """Y_{i,t}(k) for every unit, time and supported exposure value.

    Stored densely per unit: ``support[i]`` lists unit i's exposure values and
    ``values[i]`` is a (T, len(support[i])) float array. Immutable by
    convention once built.
    """

    def __init__(self, n: int, T: int, support, values, bound: float | None = None):
        self.n = int(n)
        self.T = int(T)
        self.support = [tuple(s) for s in support]
        self.code_index = [{k: c for c, k in enumerate(s)} for c, s in enumerate(self.support)]
        self.values = [np.asarray(v, dtype=np.float64) for v in values]
        for i, v in enumerate(self.values):
            if v.shape != (self.T, len(self.support[i])):
                raise ParameterError(
                    f"value block for unit {i} has shape {v.shape}, expected "
                    f"({self.T}, {len(self.support[i])})"
                )
        self.bound = bound

    @classmethod
    def from_dict(cls, n: int, T: int, cells: dict, bound: float | None = None):
        """Build from a {(unit, time, exposure): value} mapping (time 1-based)."""
        support = [sorted({k for (i, _, k) in cells if i == u}) for u in range(n)]
        values = [np.full((T, len(s)), np.nan) for s in support]
        index = [{k: c for c, k in enumerate(s)} for s in support]
        for (i, t, k), y in cells.items():
            values[i][t - 1, index[i][k]] = y
        return cls(n, T, support, values, bound)

    def has(self, i: int, t: int, k: ExposureValue) -> bool:
        c = self.code_index[i].get(k)
        if c is None:
            return False
        return not math.isnan(self.values[i][t - 1, c])

    def value(self, i: int, t: int, k: ExposureValue) -> float:
        c = self.code_index[i].get(k)
        if c is None or math.isnan(self.values[i][t - 1, c]):
            raise CompletenessError(
                f"potential outcome missing for unit {i}, t={t}, exposure {k!r}"
            )
        return float(self.values[i][t - 1, c])

    def cells(self):
        for i in range(self.n):
            for t in range(1, self.T + 1):
                for c, k in enumerate(self.support[i]):
                    y = self.values[i][t - 1, c]
                    if not math.isnan(y):
                        yield i, t, k, float(y)

    def scaled(self, factor: float) -> "PotentialOutcomeTable":
        return PotentialOutcomeTable(
            self.n,
            self.T,
            self.support,
            [v * factor for v in self.values],
            None if self.bound is None else abs(factor) * self.bound,
        )


@dataclass(frozen=True)
class DgpSpec:
    """A named data-generating process for potential outcomes.

    Families:
      normal-linear           N(a*w + b*u + c, sd)
      poisson-linear          Poisson(a*w + b*u + c)
      bernoulli-linear        Bernoulli((a*w + b*u + c) / denom)
      normal-linear-temporal  N(a*w + b*u + c + shock_t, sd), shock_t ~ U{-1,+1}
                              drawn once per time step, shared across units
      stability-chain         Y_{.,1}(k) ~ N(start_mean, 1); each later step
                              drawn uniformly within +/- epsilon of the
                              previous value, so epsilon-weak stability holds
      appendix-group-size     N(w + 0.5*u + 5, 1)

    ``w``/``u`` are the map's (own assignment, neighbor statistic) features.
    """

    family: str
    params: dict = field(default_factory=dict)

    _FAMILIES = (
        "normal-linear",
        "poisson-linear",
        "bernoulli-linear",
        "normal-linear-temporal",
        "stability-chain",
        "appendix-group-size",
    )

    def __post_init__(self):
        if self.family not in self._FAMILIES:
            raise ParameterError(f"unknown DGP family {self.family!r}")
        if self.family == "bernoulli-linear" and self.params.get("denom", 18.0) <= 0:
            raise ParameterError("denom must be positive")
        if self.family == "stability-chain" and self.params.get("epsilon", 3.0) < 0:
            raise ParameterError("epsilon must be non-negative")


def _linear_mean(dgp: DgpSpec, w: float, u: float) -> float:
    a = dgp.params.get("a", 3.0)
    b = dgp.params.get("b", 2.0)
    c = dgp.params.get("c", 5.0)
    return a * w + b * u + c


def generate(
    dgp: DgpSpec,
    graph: InterferenceGraph,
    exposure_map: ExposureMap,
    n: int,
    T: int,
    rng: np.random.Generator,
) -> PotentialOutcomeTable:
    """Draw one potential-outcome table over the map's structural support."""
    if n != graph.n:
        raise ParameterError("n does not match graph")
    support = [exposure_map.structural_support(graph.degree(i)) for i in range(n)]
    values = [np.empty((T, len(s))) for s in support]
    bound: float | None = None

    if dgp.family == "stability-chain":
        eps = float(dgp.params.get("epsilon", 3.0))
        start_mean = float(dgp.params.get("start_mean", 10.0))
        for i, s in enumerate(support):
            start = rng.normal(start_mean, 1.0, size=len(s))
            values[i][0] = start
            for t in range(1, T):
                step = rng.uniform(-eps, eps, size=len(s))
                values[i][t] = values[i][t - 1] + step
        return PotentialOutcomeTable(n, T, support, values)

    shocks = None
    if dgp.family == "normal-linear-temporal":
        shocks = rng.choice((-1.0, 1.0), size=T)

    for i, s in enumerate(support):
        feats = [exposure_map.linear_features(k) for k in s]
        for c, (w, u) in enumerate(feats):
            if dgp.family == "normal-linear":
                sd = float(dgp.params.get("sd", 1.0))
                values[i][:, c] = rng.normal(_linear_mean(dgp, w, u), sd, size=T)
            elif dgp.family == "poisson-linear":
                lam = _linear_mean(dgp, w, u)
                if lam < 0:
                    raise ParameterError(f"negative Poisson rate {lam}")
                values[i][:, c] = rng.poisson(lam, size=T)
            elif dgp.family == "bernoulli-linear":
                a = dgp.params.get("a", 3.0)
                b = dgp.params.get("b", 2.0)
                cc = dgp.params.get("c", 2.0)
                denom = dgp.params.get("denom", 18.0)
                prob = (a * w + b * u + cc) / denom
                if not 0.0 <= prob <= 1.0:
                    raise ParameterError(f"Bernoulli mean {prob} outside [0, 1]")
                values[i][:, c] = (rng.random(T) < prob).astype(float)
                bound = 1.0
            elif dgp.family == "normal-linear-temporal":
                sd = float(dgp.params.get("sd", 1.0))
                values[i][:, c] = rng.normal(
                    _linear_mean(dgp, w, u) + shocks, sd
                )
            elif dgp.family == "appendix-group-size":
                values[i][:, c] = rng.normal(w + 0.5 * u + 5.0, 1.0, size=T)
    return PotentialOutcomeTable(n, T, support, values, bound)


# ---------------------------------------------------------------------------
# Estimands


@dataclass(frozen=True)
class Tec:
    t: int
    k: ExposureValue
    kprime: ExposureValue


@dataclass(frozen=True)
class Atec:
    k: ExposureValue
    kprime: ExposureValue


@dataclass(frozen=True)
class TotalEffect:
    t: int


@dataclass(frozen=True)
class AvgTotalEffect:
    pass


@dataclass(frozen=True)
class EstimandValue:
    kind: object
    value: float


def total_effect_exposures(
    exposure_map: ExposureMap, graph: InterferenceGraph, T: int
):
    """Per-(unit, time) exposures under all-ones and all-zeros assignment.

    Returns (h1, h0): each a list of per-unit lists indexed by t-1.
    """
    n = graph.n
    ones = np.ones((n, T), dtype=np.int8)
    zeros = np.zeros((n, T), dtype=np.int8)
    h1 = [
        [evaluate(exposure_map, ones, graph, i, t) for t in range(1, T + 1)]
        for i in range(n)
    ]
    h0 = [
        [evaluate(exposure_map, zeros, graph, i, t) for t in range(1, T + 1)]
        for i in range(n)
    ]
    return h1, h0


def _tec_at(table: PotentialOutcomeTable, t: int, k, kprime) -> float:
    total = 0.0
    for i in range(table.n):
        total += table.value(i, t, k) - table.value(i, t, kprime)
    return total / table.n


def _total_effect_at(table, t, h1, h0) -> float:
    total = 0.0
    for i in range(table.n):
        total += table.value(i, t, h1[i][t - 1]) - table.value(i, t, h0[i][t - 1])
    return total / table.n


def true_estimand(
    table: PotentialOutcomeTable,
    kind,
    exposure_map: ExposureMap | None = None,
    graph: InterferenceGraph | None = None,
) -> EstimandValue:
    """Exact population contrast computed from the full table (no randomness)."""
    if isinstance(kind, Tec):
        return EstimandValue(kind, _tec_at(table, kind.t, kind.k, kind.kprime))
    if isinstance(kind, Atec):
        vals = [_tec_at(table, t, kind.k, kind.kprime) for t in range(1, table.T + 1)]
        return EstimandValue(kind, float(np.mean(vals)))
    if isinstance(kind, (TotalEffect, AvgTotalEffect)):
        if exposure_map is None or graph is None:
            raise ParameterError("total-effect estimands need the exposure map and graph")
        h1, h0 = total_effect_exposures(exposure_map, graph, table.T)
        if isinstance(kind, TotalEffect):
            return EstimandValue(kind, _total_effect_at(table, kind.t, h1, h0))
        vals = [_total_effect_at(table, t, h1, h0) for t in range(1, table.T + 1)]
        return EstimandValue(kind, float(np.mean(vals)))
    raise ParameterError(f"unknown estimand kind {kind!r}")


def realize(table: PotentialOutcomeTable, exposures) -> np.ndarray:
    """Observed outcome matrix: Y_{i,t} = table(i, t, H_{i,t}), exactly.

    ``exposures`` is the realized exposure matrix as per-unit lists (the
    output of ``eval_matrix``).
    """
    n, T = table.n, table.T
    out = np.empty((n, T))
    for i in range(n):
        row = exposures[i]
        if len(row) != T:
            raise ParameterError("exposure matrix shape does not match table")
        for t in range(1, T + 1):
            out[i, t - 1] = table.value(i, t, row[t - 1])
    return out


def stability_violation(table: PotentialOutcomeTable) -> float:
    """Smallest epsilon such that the table is epsilon-weakly stable.

    Maximal absolute one-step change of any potential-outcome cell; 0 when
    T = 1. Cells missing at either endpoint are skipped.
    """
    worst = 0.0
    for i in range(table.n):
        block = table.values[i]
        if block.shape[0] < 2:
            continue
        diffs = np.abs(np.diff(block, axis=0))
        if diffs.size:
            with np.errstate(invalid="ignore"):
                m = np.nanmax(diffs)
            if not math.isnan(m):
                worst = max(worst, float(m))
    return worst
