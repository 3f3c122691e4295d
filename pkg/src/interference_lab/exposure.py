"""Exposure mappings and the exposure-probability engine.

Exposure values are canonical tuples of ints and exact ``Fraction`` objects
(never floats), so dictionary keys are exact. Time indices in public APIs are
1-based, matching the estimand definitions; unit indices are 0-based.

Maps of order p depend on assignment columns t-p+1..t. For t < p the missing
columns are filled with the earliest available column (the boundary
convention), so exposures at t=1 under an order-2 map are "diagonal": both
periods read the same column.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import EnumerationCapError, ParameterError
from .design import Design
from .population import InterferenceGraph

__all__ = [
    "ExposureValue",
    "ExposureMap",
    "SelfOnly",
    "SelfAndAnyNeighbor",
    "SelfAndFractionBuckets",
    "SelfAndFraction",
    "TwoPeriodSelfAndFraction",
    "StratifiedCarryover",
    "evaluate",
    "eval_matrix",
    "ExposureProbabilities",
    "ExposureProbabilityEngine",
    "marginal_probs",
    "pairwise_probs",
    "crosstime_probs",
]

ExposureValue = tuple

DEFAULT_LOCAL_CAP_BITS = 22
DEFAULT_MC_REPS = 100_000


class ExposureMap(ABC):
    """Deterministic summary of the relevant assignment window for one unit."""

    p: int = 1
    name: str = "exposure"

    @abstractmethod
    def value_from_features(
        self, w_cols: tuple[int, ...], counts: tuple[int, ...], degree: int
    ) -> ExposureValue:
        """Exposure value from per-column own assignments and treated-neighbor counts.

        ``w_cols`` and ``counts`` have length p (boundary-padded by the caller).
        """

    @abstractmethod
    def linear_features(self, value: ExposureValue) -> tuple[float, float]:
        """(own assignment, neighbor statistic) pair used by the linear DGPs."""

    def structural_support(self, degree: int) -> list[ExposureValue]:
        """All values attainable for a unit of the given degree, over any design."""
        out = set()
        counts = range(degree + 1) if degree > 0 else (0,)
        import itertools

        for w_cols in itertools.product((0, 1), repeat=self.p):
            for cnts in itertools.product(counts, repeat=self.p):
                out.add(self.value_from_features(tuple(w_cols), tuple(cnts), degree))
        return sorted(out)

    def __repr__(self):
        return self.name


def _fraction(count: int, degree: int) -> Fraction:
    # isolated units have no treated-neighbor fraction; 0 by convention
    if degree == 0:
        return Fraction(0, 1)
    return Fraction(count, degree)


@dataclass(frozen=True, repr=False)
class SelfOnly(ExposureMap):
    """k = own current assignment."""

    p: int = field(default=1, init=False)
    name = "self-only"

    def value_from_features(self, w_cols, counts, degree):
        return (w_cols[-1],)

    def linear_features(self, value):
        return float(value[0]), 0.0


@dataclass(frozen=True, repr=False)
class SelfAndAnyNeighbor(ExposureMap):
    """k = (own assignment, 1{at least one treated neighbor})."""

    p: int = field(default=1, init=False)
    name = "self-any-neighbor"

    def value_from_features(self, w_cols, counts, degree):
        return (w_cols[-1], 1 if counts[-1] > 0 else 0)

    def linear_features(self, value):
        return float(value[0]), float(value[1])


@dataclass(frozen=True, repr=False)
class SelfAndFractionBuckets(ExposureMap):
    """k = (own assignment, bucket of the treated-neighbor fraction).

    Buckets are half-open on the right with the last bucket closed: with
    thresholds (1/4, 1/2, 3/4) the bucket index is the number of thresholds
    less than or equal to the fraction.
    """

    thresholds: tuple[Fraction, ...] = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
    p: int = field(default=1, init=False)
    name = "self-fraction-buckets"

    def __post_init__(self):
        ts = tuple(Fraction(t) for t in self.thresholds)
        if any(not 0 < t < 1 for t in ts):
            raise ParameterError("bucket thresholds must lie strictly inside (0, 1)")
        if list(ts) != sorted(set(ts)):
            raise ParameterError("bucket thresholds must be strictly increasing")
        object.__setattr__(self, "thresholds", ts)

    def bucket(self, frac: Fraction) -> int:
        return sum(1 for t in self.thresholds if frac >= t)

    def value_from_features(self, w_cols, counts, degree):
        return (w_cols[-1], self.bucket(_fraction(counts[-1], degree)))

    def linear_features(self, value):
        return float(value[0]), float(value[1])


@dataclass(frozen=True, repr=False)
class SelfAndFraction(ExposureMap):
    """k = (own assignment, exact treated-neighbor fraction)."""

    p: int = field(default=1, init=False)
    name = "self-fraction"

    def value_from_features(self, w_cols, counts, degree):
        return (w_cols[-1], _fraction(counts[-1], degree))

    def linear_features(self, value):
        return float(value[0]), float(value[1])


@dataclass(frozen=True, repr=False)
class TwoPeriodSelfAndFraction(ExposureMap):
    """k = (own previous, own current, previous fraction, current fraction)."""

    p: int = field(default=2, init=False)
    name = "two-period-self-fraction"

    def value_from_features(self, w_cols, counts, degree):
        return (
            w_cols[0],
            w_cols[1],
            _fraction(counts[0], degree),
            _fraction(counts[1], degree),
        )

    def linear_features(self, value):
        return float(value[1]), float(value[3])


@dataclass(frozen=True, repr=False)
class StratifiedCarryover(ExposureMap):
    """k = (own previous, own current, previous treated-neighbor count, current count)."""

    p: int = field(default=2, init=False)
    name = "stratified-carryover"

    def value_from_features(self, w_cols, counts, degree):
        return (w_cols[0], w_cols[1], counts[0], counts[1])

    def linear_features(self, value):
        return float(value[1]), float(value[3])


def _window_columns(t: int, p: int) -> list[int]:
    """Physical 1-based columns feeding the exposure at time t, left-padded."""
    if t < 1:
        raise ParameterError("time indices are 1-based")
    cols = list(range(max(1, t - p + 1), t + 1))
    return [cols[0]] * (p - len(cols)) + cols


def evaluate(
    exposure_map: ExposureMap,
    W,
    graph: InterferenceGraph,
    i: int,
    t: int,
) -> ExposureValue:
    """Realized exposure H_{i,t} for an assignment matrix (time 1-based)."""
    values = W.values if hasattr(W, "values") else np.asarray(W)
    if t > values.shape[1]:
        raise ParameterError(f"t={t} exceeds the panel length {values.shape[1]}")
    cols = _window_columns(t, exposure_map.p)
    nbrs = list(graph.neighbors(i))
    w_cols = tuple(int(values[i, c - 1]) for c in cols)
    counts = tuple(int(values[nbrs, c - 1].sum()) if nbrs else 0 for c in cols)
    return exposure_map.value_from_features(w_cols, counts, graph.degree(i))


def eval_matrix(exposure_map: ExposureMap, W, graph: InterferenceGraph):
    """All realized exposures as a list of per-unit lists (n x T)."""
    values = W.values if hasattr(W, "values") else np.asarray(W)
    n, T = values.shape
    return [
        [evaluate(exposure_map, values, graph, i, t) for t in range(1, T + 1)]
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# Probability tables


class ExposureProbabilities:
    """Marginal, pairwise and cross-time exposure probabilities.

    For order-p maps the marginal law of H_{i,t} is the same for all t >= p
    ("steady" tables); earlier times are stored separately. Probabilities of
    unrecorded exposures read as 0.
    """

    def __init__(self, p: int, method: str = "exact"):
        self.p = p
        self.method = method
        self.marginal: dict[tuple[int, ExposureValue], float] = {}
        self.boundary: dict[tuple[int, int, ExposureValue], float] = {}
        self.pairwise: dict[tuple[int, int], dict] = {}
        self.pairwise_boundary: dict[tuple[int, int, int], dict] = {}
        self.crosstime: dict[tuple, dict] = {}
        self.se: dict = {}

    # -- writers ------------------------------------------------------------

    def set_marginal(self, i: int, table: dict, t: int | None = None):
        if t is not None and t < self.p:
            for k, v in table.items():
                self.boundary[(t, i, k)] = v
        else:
            for k, v in table.items():
                self.marginal[(i, k)] = v

    def set_pairwise(self, i: int, j: int, table: dict, t: int | None = None):
        if t is not None and t < self.p:
            self.pairwise_boundary[(t, i, j)] = dict(table)
        else:
            self.pairwise[(i, j)] = dict(table)

    def set_crosstime(self, i: int, t: int, j: int, tp: int, table: dict):
        self.crosstime[self._ct_key(i, t, j, tp)] = dict(table)

    def _ct_key(self, i, t, j, tp):
        if t > tp:
            raise ParameterError("crosstime keys must have t < t'")
        if t >= self.p:
            return (i, j, "steady", tp - t)
        return (i, j, t, tp)

    # -- readers ------------------------------------------------------------

    def marginal_at(self, i: int, t: int, k: ExposureValue) -> float:
        if t < self.p:
            return self.boundary.get((t, i, k), 0.0)
        return self.marginal.get((i, k), 0.0)

    def has_marginals_for(self, i: int, t: int) -> bool:
        if t < self.p:
            return any(key[0] == t and key[1] == i for key in self.boundary)
        return any(key[0] == i for key in self.marginal)

    def pairwise_at(self, i: int, j: int, t: int) -> dict:
        if t < self.p:
            table = self.pairwise_boundary.get((t, i, j))
            if table is None:
                swapped = self.pairwise_boundary.get((t, j, i))
                table = (
                    {(b, a): v for (a, b), v in swapped.items()}
                    if swapped is not None
                    else None
                )
        else:
            table = self.pairwise.get((i, j))
            if table is None:
                swapped = self.pairwise.get((j, i))
                table = (
                    {(b, a): v for (a, b), v in swapped.items()}
                    if swapped is not None
                    else None
                )
        if table is None:
            raise KeyError(f"no pairwise table for units ({i}, {j}) at t={t}")
        return table

    def crosstime_at(self, i: int, t: int, j: int, tp: int) -> dict:
        if t == tp:
            raise ParameterError("crosstime requires t != t'")
        if t > tp:
            flipped = self.crosstime_at(j, tp, i, t)
            return {(b, a): v for (a, b), v in flipped.items()}
        if min(t, tp) >= self.p and tp - t >= self.p:
            # disjoint windows under temporal independence: product of marginals
            left = {k: v for (u, k), v in self.marginal.items() if u == i}
            right = {k: v for (u, k), v in self.marginal.items() if u == j}
            return {
                (a, b): pa * pb
                for a, pa in left.items()
                for b, pb in right.items()
                if pa * pb > 0.0
            }
        table = self.crosstime.get(self._ct_key(i, t, j, tp))
        if table is None:
            raise KeyError(f"no crosstime table for ({i},{t}) x ({j},{tp})")
        return table

    def support(self, i: int, t: int) -> list[ExposureValue]:
        if t < self.p:
            return sorted(
                k for (tt, u, k), v in self.boundary.items() if tt == t and u == i and v > 0
            )
        return sorted(k for (u, k), v in self.marginal.items() if u == i and v > 0)


# ---------------------------------------------------------------------------
# Exact engine


def _mixed_radix_encode(columns: list[np.ndarray], radices: list[int]) -> np.ndarray:
    code = np.zeros_like(columns[0], dtype=np.int64)
    for col, radix in zip(columns, radices):
        code = code * radix + col.astype(np.int64)
    return code


class ExposureProbabilityEngine:
    """Exact (or Monte-Carlo) joint distributions of exposures.

    Exact mode enumerates the assignments of the union of the involved
    closed neighborhoods over the involved time window, weighting each local
    assignment by its marginal design probability; temporal independence
    lets columns factorize.
    """

    def __init__(
        self,
        exposure_map: ExposureMap,
        design: Design,
        graph: InterferenceGraph,
        cap_bits: int = DEFAULT_LOCAL_CAP_BITS,
        mc_reps: int | None = None,
        rng: np.random.Generator | None = None,
        chunk: int = 1 << 16,
    ):
        self.map = exposure_map
        self.design = design
        self.graph = graph
        self.cap_bits = cap_bits
        self.mc_reps = mc_reps
        self.rng = rng
        self.chunk = chunk
        self._table_cache: dict[tuple[int, ...], np.ndarray] = {}

    # -- exact path ----------------------------------------------------------

    def _local_table(self, units: tuple[int, ...]) -> np.ndarray:
        if units not in self._table_cache:
            self._table_cache[units] = self.design.local_prob_table(units)
        return self._table_cache[units]

    def joint(self, pairs: list[tuple[int, int]]) -> dict:
        """Joint distribution of (H_{i1,t1}, ..., H_{im,tm}).

        Keys are tuples of exposure values in the order of ``pairs`` (a single
        pair yields 1-tuples). Falls back to Monte Carlo when the local bit
        count exceeds the cap and ``mc_reps`` is set; raises otherwise.
        """
        windows = [_window_columns(t, self.map.p) for _, t in pairs]
        cols = sorted({c for win in windows for c in win})
        units = sorted({u for i, _ in pairs for u in self.graph.closed_neighborhood(i)})
        bits = len(units) * len(cols)
        if bits > self.cap_bits:
            if self.mc_reps is None:
                raise EnumerationCapError(
                    f"exact exposure enumeration needs {bits} bits (cap {self.cap_bits}); "
                    "enable Monte-Carlo mode to proceed"
                )
            return self._joint_mc(pairs)[0]
        return self._joint_exact(pairs, units, cols, windows)

    def joint_with_se(self, pairs: list[tuple[int, int]]) -> tuple[dict, dict]:
        """Like ``joint`` but also returns per-cell standard errors.

        Exact enumeration has zero standard error; Monte-Carlo cells carry
        the binomial standard error of their frequency.
        """
        windows = [_window_columns(t, self.map.p) for _, t in pairs]
        cols = sorted({c for win in windows for c in win})
        units = sorted({u for i, _ in pairs for u in self.graph.closed_neighborhood(i)})
        bits = len(units) * len(cols)
        if bits > self.cap_bits:
            if self.mc_reps is None:
                raise EnumerationCapError(
                    f"exact exposure enumeration needs {bits} bits (cap {self.cap_bits}); "
                    "enable Monte-Carlo mode to proceed"
                )
            return self._joint_mc(pairs)
        table = self._joint_exact(pairs, units, cols, windows)
        return table, {key: 0.0 for key in table}

    def _joint_exact(self, pairs, units, cols, windows) -> dict:
        m = len(units)
        pos = {u: b for b, u in enumerate(units)}
        col_idx = {c: ci for ci, c in enumerate(cols)}
        table = self._local_table(tuple(units))
        col_mask = np.uint64((1 << m) - 1)

        degrees = [self.graph.degree(i) for i, _ in pairs]
        self_bits = []
        nbr_masks = []
        for (i, _), win in zip(pairs, windows):
            self_bits.append([col_idx[c] * m + pos[i] for c in win])
            masks = []
            for c in win:
                mask = 0
                for v in self.graph.neighbors(i):
                    mask |= 1 << (col_idx[c] * m + pos[v])
                masks.append(np.uint64(mask))
            nbr_masks.append(masks)

        radices = []
        for d in degrees:
            radices.extend([2] * self.map.p)
            radices.extend([d + 1] * self.map.p)

        total_states = 1 << (m * len(cols))
        acc: dict[int, float] = {}
        code_samples: dict[int, tuple] = {}
        for start in range(0, total_states, self.chunk):
            states = np.arange(
                start, min(start + self.chunk, total_states), dtype=np.uint64
            )
            prob = np.ones(states.size, dtype=np.float64)
            for ci in range(len(cols)):
                col_bits = (states >> np.uint64(ci * m)) & col_mask
                prob *= table[col_bits.astype(np.int64)]
            live = prob > 0.0
            if not live.any():
                continue
            states = states[live]
            prob = prob[live]

            features: list[np.ndarray] = []
            for (self_b, masks) in zip(self_bits, nbr_masks):
                for b in self_b:
                    features.append(
                        ((states >> np.uint64(b)) & np.uint64(1)).astype(np.int64)
                    )
                for mask in masks:
                    features.append(np.bitwise_count(states & mask).astype(np.int64))
            codes = _mixed_radix_encode(features, radices)
            uniq, inv = np.unique(codes, return_inverse=True)
            sums = np.bincount(inv, weights=prob, minlength=uniq.size)
            for code, psum in zip(uniq.tolist(), sums.tolist()):
                acc[code] = acc.get(code, 0.0) + psum

        out: dict[tuple, float] = {}
        for code, psum in acc.items():
            value = self._decode(code, radices, degrees)
            out[value] = out.get(value, 0.0) + psum
        return out

    def _decode(self, code: int, radices: list[int], degrees: list[int]) -> tuple:
        digits = []
        for radix in reversed(radices):
            digits.append(code % radix)
            code //= radix
        digits.reverse()
        values = []
        p = self.map.p
        for pi, d in enumerate(degrees):
            base = pi * 2 * p
            w_cols = tuple(digits[base : base + p])
            counts = tuple(digits[base + p : base + 2 * p])
            values.append(self.map.value_from_features(w_cols, counts, d))
        return tuple(values)

    # -- Monte-Carlo path ----------------------------------------------------

    def _joint_mc(self, pairs) -> tuple[dict, dict]:
        if self.rng is None:
            raise ParameterError("Monte-Carlo exposure probabilities need an rng")
        reps = int(self.mc_reps or DEFAULT_MC_REPS)
        max_col = max(t for _, t in pairs)
        n = self.graph.n
        counts: dict[tuple, int] = {}
        chunk = max(1, min(reps, max(1, (1 << 22) // max(1, n * max_col))))
        done = 0
        while done < reps:
            b = min(chunk, reps - done)
            for _ in range(b):
                W = np.stack(
                    [self.design.sample_column(n, self.rng) for _ in range(max_col)],
                    axis=1,
                )
                key = tuple(
                    evaluate(self.map, W, self.graph, i, t) for i, t in pairs
                )
                counts[key] = counts.get(key, 0) + 1
            done += b
        probs = {k: c / reps for k, c in counts.items()}
        ses = {k: float(np.sqrt(p * (1 - p) / reps)) for k, p in probs.items()}
        return probs, ses

    # -- convenience ---------------------------------------------------------

    def marginal(self, i: int, t: int | None = None) -> dict:
        t = self.map.p if t is None else t
        return {k[0]: v for k, v in self.joint([(i, t)]).items()}

    def pairwise(self, i: int, j: int, t: int | None = None) -> dict:
        if i == j:
            raise ParameterError("pairwise probabilities need distinct units")
        t = self.map.p if t is None else t
        return {(k[0], k[1]): v for k, v in self.joint([(i, t), (j, t)]).items()}

    def crosstime(self, i: int, t: int, j: int, tp: int) -> dict:
        if t == tp:
            raise ParameterError("crosstime requires t != t'")
        return {(k[0], k[1]): v for k, v in self.joint([(i, t), (j, tp)]).items()}


# ---------------------------------------------------------------------------
# Module-level operations (spec surface)


def marginal_probs(
    exposure_map: ExposureMap,
    design: Design,
    graph: InterferenceGraph,
    cap_bits: int = DEFAULT_LOCAL_CAP_BITS,
    mc_reps: int | None = None,
    rng: np.random.Generator | None = None,
) -> ExposureProbabilities:
    """Marginal exposure probabilities for every unit.

    Fills the steady-state table (t >= p) and, for order-p maps with p > 1,
    the boundary tables for t < p.
    """
    engine = ExposureProbabilityEngine(
        exposure_map, design, graph, cap_bits=cap_bits, mc_reps=mc_reps, rng=rng
    )
    method = "exact"
    probs = ExposureProbabilities(exposure_map.p, method)
    for i in range(graph.n):
        bits = len(graph.closed_neighborhood(i)) * exposure_map.p
        mc_cell = bits > cap_bits and mc_reps is not None
        if mc_cell:
            method = "monte-carlo"
        table, ses = engine.joint_with_se([(i, exposure_map.p)])
        probs.set_marginal(i, {key[0]: v for key, v in table.items()})
        if mc_cell:
            for key, se in ses.items():
                probs.se[(i, key[0])] = se
        for t in range(1, exposure_map.p):
            probs.set_marginal(i, engine.marginal(i, t), t=t)
    probs.method = method
    return probs


def pairwise_probs(
    exposure_map: ExposureMap,
    design: Design,
    graph: InterferenceGraph,
    i: int,
    j: int,
    t: int | None = None,
    cap_bits: int = DEFAULT_LOCAL_CAP_BITS,
    mc_reps: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict:
    """Joint law of (H_i, H_j) at a common time (default: steady state)."""
    engine = ExposureProbabilityEngine(
        exposure_map, design, graph, cap_bits=cap_bits, mc_reps=mc_reps, rng=rng
    )
    return engine.pairwise(i, j, t)


def crosstime_probs(
    exposure_map: ExposureMap,
    design: Design,
    graph: InterferenceGraph,
    i: int,
    t: int,
    j: int,
    tp: int,
    cap_bits: int = DEFAULT_LOCAL_CAP_BITS,
    mc_reps: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict:
    """Joint law of (H_{i,t}, H_{j,t'}) for t != t'."""
    engine = ExposureProbabilityEngine(
        exposure_map, design, graph, cap_bits=cap_bits, mc_reps=mc_reps, rng=rng
    )
    return engine.crosstime(i, t, j, tp)
