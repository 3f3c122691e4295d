"""Vectorized building blocks for the replication scenarios.

The general estimators in ``estimators``/``variance`` are the reference
implementations; these classes evaluate the same formulas across whole
batches of assignment draws at once. Tests pin the two paths together on
small instances.

Exposures are handled as per-unit integer codes. ``value_to_code`` defines
the code space per map; a per-unit code -> table-column lookup bridges codes
to potential-outcome arrays (code spaces may be larger than the attained
support, e.g. bucket maps with coarse degrees).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import ParameterError
from ..exposure import (
    ExposureMap,
    SelfAndAnyNeighbor,
    SelfAndFraction,
    SelfAndFractionBuckets,
    SelfOnly,
    StratifiedCarryover,
    TwoPeriodSelfAndFraction,
)
from ..outcomes import PotentialOutcomeTable
from ..population import GroupPartition, InterferenceGraph

__all__ = [
    "value_to_code",
    "code_space",
    "NeighborCounter",
    "TableArrays",
    "encode_exposures",
    "PairedVarianceTEC",
    "PairedVarianceTE",
    "dependent_pairs_graph",
    "dependent_pairs_partition",
]


def _frac_to_count(frac, degree: int) -> int:
    value = Fraction(frac) * degree
    if value.denominator != 1:
        raise ParameterError(f"fraction {frac} is not attainable at degree {degree}")
    return int(value)


def value_to_code(exposure_map: ExposureMap, value, degree: int) -> int:
    if isinstance(exposure_map, SelfOnly):
        return int(value[0])
    if isinstance(exposure_map, SelfAndAnyNeighbor):
        return 2 * int(value[0]) + int(value[1])
    if isinstance(exposure_map, SelfAndFractionBuckets):
        nb = len(exposure_map.thresholds) + 1
        return nb * int(value[0]) + int(value[1])
    if isinstance(exposure_map, SelfAndFraction):
        return (degree + 1) * int(value[0]) + _frac_to_count(value[1], degree)
    if isinstance(exposure_map, TwoPeriodSelfAndFraction):
        d1 = degree + 1
        code = 2 * int(value[0]) + int(value[1])
        return (code * d1 + _frac_to_count(value[2], degree)) * d1 + _frac_to_count(
            value[3], degree
        )
    if isinstance(exposure_map, StratifiedCarryover):
        d1 = degree + 1
        code = 2 * int(value[0]) + int(value[1])
        return (code * d1 + int(value[2])) * d1 + int(value[3])
    raise ParameterError(f"no code layout for map {exposure_map!r}")


def code_space(exposure_map: ExposureMap, degree: int) -> int:
    if isinstance(exposure_map, SelfOnly):
        return 2
    if isinstance(exposure_map, SelfAndAnyNeighbor):
        return 4
    if isinstance(exposure_map, SelfAndFractionBuckets):
        return 2 * (len(exposure_map.thresholds) + 1)
    if isinstance(exposure_map, SelfAndFraction):
        return 2 * (degree + 1)
    if isinstance(exposure_map, (TwoPeriodSelfAndFraction, StratifiedCarryover)):
        return 4 * (degree + 1) ** 2
    raise ParameterError(f"no code layout for map {exposure_map!r}")


class NeighborCounter:
    """Treated-neighbor counts for batches of assignment columns."""

    def __init__(self, structure):
        if isinstance(structure, GroupPartition):
            self.mode = "partition"
            starts = []
            pos = 0
            for g, members in enumerate(structure.groups):
                if list(members) != list(range(pos, pos + len(members))):
                    raise ParameterError("partition groups must be contiguous for batching")
                starts.append(pos)
                pos += len(members)
            self.starts = np.asarray(starts)
            self.group_of = np.asarray(structure.group_of)
            self.degrees = np.asarray(
                [len(structure.groups[g]) - 1 for g in structure.group_of]
            )
        elif isinstance(structure, InterferenceGraph):
            self.mode = "graph"
            n = structure.n
            adj = np.zeros((n, n), dtype=np.float64)
            for i, nbrs in enumerate(structure.adjacency):
                adj[i, list(nbrs)] = 1.0
            self.adj = adj
            self.degrees = np.asarray([structure.degree(i) for i in range(n)])
        else:
            raise ParameterError("structure must be a GroupPartition or InterferenceGraph")

    def counts(self, w: np.ndarray) -> np.ndarray:
        """w: (..., n) int -> treated-neighbor counts (..., n)."""
        if self.mode == "partition":
            sums = np.add.reduceat(w, self.starts, axis=-1)
            return sums[..., self.group_of] - w
        flat = w.reshape(-1, w.shape[-1]).astype(np.float64)
        out = flat @ self.adj
        return np.rint(out).astype(np.int64).reshape(w.shape)


class TableArrays:
    """Dense view of a potential-outcome table keyed by exposure codes."""

    def __init__(self, table: PotentialOutcomeTable, exposure_map: ExposureMap, degrees):
        n, T = table.n, table.T
        self.n, self.T = n, T
        spaces = [code_space(exposure_map, int(degrees[i])) for i in range(n)]
        self.space = max(spaces)
        kmax = max(len(s) for s in table.support)
        self.values = np.full((n, T, kmax), np.nan)
        self.col_of_code = np.full((n, self.space), -1, dtype=np.int64)
        for i in range(n):
            self.values[i, :, : len(table.support[i])] = table.values[i]
            for col, k in enumerate(table.support[i]):
                self.col_of_code[i, value_to_code(exposure_map, k, int(degrees[i]))] = col

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        """codes: (B, n, T) int -> observed outcomes (B, n, T)."""
        B = codes.shape[0]
        cols = self.col_of_code[np.arange(self.n)[None, :, None], codes]
        if (cols < 0).any():
            raise ParameterError("realized exposure outside the table support")
        t_idx = np.arange(self.T)[None, None, :]
        return self.values[np.arange(self.n)[None, :, None], t_idx, cols]


def encode_exposures(
    exposure_map: ExposureMap,
    w: np.ndarray,
    counts: np.ndarray,
    degrees: np.ndarray,
) -> np.ndarray:
    """Vectorized exposure codes for a panel batch.

    ``w`` and ``counts`` are (..., n, T) arrays; for order-2 maps the
    previous-period features at t=1 reuse column 1 (the boundary convention).
    Returns integer codes matching ``value_to_code``.
    """
    deg = degrees.reshape((1,) * (w.ndim - 2) + (-1, 1))
    if isinstance(exposure_map, SelfOnly):
        return w.astype(np.int64)
    if isinstance(exposure_map, SelfAndAnyNeighbor):
        return 2 * w.astype(np.int64) + (counts > 0)
    if isinstance(exposure_map, SelfAndFractionBuckets):
        nb = len(exposure_map.thresholds) + 1
        safe_deg = np.maximum(deg, 1)
        bucket = np.zeros(counts.shape, dtype=np.int64)
        for thr in exposure_map.thresholds:
            bucket += counts * thr.denominator >= thr.numerator * safe_deg
        bucket[np.broadcast_to(deg == 0, bucket.shape)] = 0
        return nb * w.astype(np.int64) + bucket
    if isinstance(exposure_map, SelfAndFraction):
        return (deg + 1) * w.astype(np.int64) + counts
    if isinstance(exposure_map, (TwoPeriodSelfAndFraction, StratifiedCarryover)):
        w_prev = np.concatenate([w[..., :1], w[..., :-1]], axis=-1)
        c_prev = np.concatenate([counts[..., :1], counts[..., :-1]], axis=-1)
        if isinstance(exposure_map, StratifiedCarryover):
            d1 = deg + 1
            code = 2 * w_prev.astype(np.int64) + w
            return (code * d1 + c_prev) * d1 + counts
        d1 = deg + 1
        code = 2 * w_prev.astype(np.int64) + w
        return (code * d1 + c_prev) * d1 + counts
    raise ParameterError(f"no vectorized encoder for map {exposure_map!r}")


def dependent_pairs_graph(graph: InterferenceGraph) -> list[tuple[int, int]]:
    """Unordered pairs with intersecting closed neighborhoods."""
    closed = [set(graph.closed_neighborhood(i)) for i in range(graph.n)]
    touching: dict[int, set[int]] = {}
    for i, cl in enumerate(closed):
        for u in cl:
            touching.setdefault(u, set()).add(i)
    pairs = set()
    for members in touching.values():
        ms = sorted(members)
        for a_idx, a in enumerate(ms):
            for b in ms[a_idx + 1 :]:
                pairs.add((a, b))
    return sorted(pairs)


def dependent_pairs_partition(partition: GroupPartition) -> list[tuple[int, int]]:
    """Unordered within-group pairs (clique interference + group designs)."""
    pairs = []
    for members in partition.groups:
        ms = sorted(members)
        for a_idx, a in enumerate(ms):
            for b in ms[a_idx + 1 :]:
                pairs.append((a, b))
    return pairs


@dataclass
class _BracketArrays:
    ai: np.ndarray
    aj: np.ndarray
    weight: np.ndarray


def _build_bracket(entries):
    if not entries:
        return None
    ai, aj, w = zip(*entries)
    return _BracketArrays(np.asarray(ai), np.asarray(aj), np.asarray(w, dtype=np.float64))


def _bracket_sum(bracket, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    if bracket is None:
        return 0.0
    return (left[:, bracket.ai] * right[:, bracket.aj] * bracket.weight).sum(axis=1)


class PairedVarianceTEC:
    """Batched conservative variance estimator for a shared (k, k') contrast.

    Produces estimates of Var(sqrt(n) * tau_hat^{k,k'}) for each draw in a
    batch; equals ``variance.conservative_var_estimator_tec`` draw for draw.
    ``joints[(i, j)]`` must give the same-time joint exposure table of each
    dependent pair.
    """

    def __init__(self, pk, pkp, code_k, code_kp, pairs, joints, k, kprime,
                 within_unit_bound: bool = True):
        self.n = len(pk)
        self.pk = np.asarray(pk, dtype=np.float64)
        self.pkp = np.asarray(pkp, dtype=np.float64)
        self.code_k = np.asarray(code_k)
        self.code_kp = np.asarray(code_kp)
        # unit terms, optionally plus the within-unit bound for 2 Y(k) Y(k')
        diag = 1.0 if within_unit_bound else 0.0
        self.coef_k = (1 - self.pk) / self.pk**2 + diag / self.pk
        self.coef_kp = (1 - self.pkp) / self.pkp**2 + diag / self.pkp
        same_k, same_kp, cross = [], [], []
        for i, j in pairs:
            table = joints[(i, j)]
            for a, b in ((i, j), (j, i)):
                # table keys are (value at i, value at j); same-exposure joints
                # are symmetric, the cross joint flips with the order
                jkk = table.get((k, k), 0.0)
                if jkk > 0.0:
                    same_k.append(
                        (a, b, (jkk - self.pk[a] * self.pk[b]) / (jkk * self.pk[a] * self.pk[b]))
                    )
                else:
                    self.coef_k[a] += 1.0 / (2.0 * self.pk[a])
                    self.coef_k[b] += 1.0 / (2.0 * self.pk[b])
                jpp = table.get((kprime, kprime), 0.0)
                if jpp > 0.0:
                    same_kp.append(
                        (a, b, (jpp - self.pkp[a] * self.pkp[b]) / (jpp * self.pkp[a] * self.pkp[b]))
                    )
                else:
                    self.coef_kp[a] += 1.0 / (2.0 * self.pkp[a])
                    self.coef_kp[b] += 1.0 / (2.0 * self.pkp[b])
                jkp = table.get((k, kprime), 0.0) if a == i else table.get((kprime, k), 0.0)
                if jkp > 0.0:
                    cross.append(
                        (
                            a,
                            b,
                            -2.0 * (jkp - self.pk[a] * self.pkp[b]) / (jkp * self.pk[a] * self.pkp[b]),
                        )
                    )
                else:
                    self.coef_k[a] += 1.0 / self.pk[a]
                    self.coef_kp[b] += 1.0 / self.pkp[b]
        self.same_k = _build_bracket(same_k)
        self.same_kp = _build_bracket(same_kp)
        self.cross = _build_bracket(cross)

    def value(self, codes: np.ndarray, y: np.ndarray) -> np.ndarray:
        """codes, y: (B, n) for one time step -> (B,) variance estimates."""
        ind_k = codes == self.code_k[None, :]
        ind_kp = codes == self.code_kp[None, :]
        xk = np.where(ind_k, y, 0.0)
        xkp = np.where(ind_kp, y, 0.0)
        total = (xk**2) @ self.coef_k + (xkp**2) @ self.coef_kp
        total += _bracket_sum(self.same_k, xk, xk)
        total += _bracket_sum(self.same_kp, xkp, xkp)
        total += _bracket_sum(self.cross, xk, xkp)
        return total / self.n


class PairedVarianceTE:
    """Batched upper/lower variance estimators for the total effect.

    Returns estimates of Var(tau_hat^TE) per draw; matches
    ``variance.var_estimators_total_effect`` draw for draw. Targets h^1/h^0
    are unit-specific codes; joints are per dependent pair.
    """

    def __init__(self, p1, p0, code1, code0, pairs, joints, h1_values, h0_values):
        self.n = len(p1)
        self.p1 = np.asarray(p1, dtype=np.float64)
        self.p0 = np.asarray(p0, dtype=np.float64)
        self.code1 = np.asarray(code1)
        self.code0 = np.asarray(code0)
        base1 = (1 - self.p1) / self.p1**2
        base0 = (1 - self.p0) / self.p0**2
        self.u1 = base1 + 1.0 / self.p1
        self.u0 = base0 + 1.0 / self.p0
        self.d1 = base1.copy()
        self.d0 = base0.copy()
        self.dz1 = np.zeros(self.n)
        self.dz0 = np.zeros(self.n)
        self.uz1 = np.zeros(self.n)
        self.uz0 = np.zeros(self.n)
        same11, same00, cross01, cross10 = [], [], [], []
        for i, j in pairs:
            table = joints[(i, j)]
            h1i, h1j = h1_values[i], h1_values[j]
            h0i, h0j = h0_values[i], h0_values[j]
            j11 = table.get((h1i, h1j), 0.0)
            j00 = table.get((h0i, h0j), 0.0)
            j01 = table.get((h0i, h1j), 0.0)
            j10 = table.get((h1i, h0j), 0.0)
            if j11 > 0.0:
                same11.append(
                    (i, j, 2.0 * (j11 - self.p1[i] * self.p1[j]) / (j11 * self.p1[i] * self.p1[j]))
                )
            else:
                self.dz1[i] -= 1.0 / self.p1[i]
                self.dz1[j] -= 1.0 / self.p1[j]
            if j00 > 0.0:
                same00.append(
                    (i, j, 2.0 * (j00 - self.p0[i] * self.p0[j]) / (j00 * self.p0[i] * self.p0[j]))
                )
            else:
                self.dz0[i] -= 1.0 / self.p0[i]
                self.dz0[j] -= 1.0 / self.p0[j]
            if j01 > 0.0:
                cross01.append(
                    (i, j, -2.0 * (j01 - self.p0[i] * self.p1[j]) / (j01 * self.p0[i] * self.p1[j]))
                )
            else:
                self.uz0[i] += 1.0 / self.p0[i]
                self.uz1[j] += 1.0 / self.p1[j]
            if j10 > 0.0:
                cross10.append(
                    (i, j, -2.0 * (j10 - self.p1[i] * self.p0[j]) / (j10 * self.p1[i] * self.p0[j]))
                )
            else:
                self.uz1[i] += 1.0 / self.p1[i]
                self.uz0[j] += 1.0 / self.p0[j]
        self.same11 = _build_bracket(same11)
        self.same00 = _build_bracket(same00)
        self.cross01 = _build_bracket(cross01)
        self.cross10 = _build_bracket(cross10)

    def value(self, codes: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ind1 = codes == self.code1[None, :]
        ind0 = codes == self.code0[None, :]
        x1 = np.where(ind1, y, 0.0)
        x0 = np.where(ind0, y, 0.0)
        sq1 = x1**2
        sq0 = x0**2
        shared = _bracket_sum(self.same11, x1, x1) + _bracket_sum(self.same00, x0, x0)
        shared += _bracket_sum(self.cross01, x0, x1) + _bracket_sum(self.cross10, x1, x0)
        upper = sq1 @ (self.u1 + self.uz1) + sq0 @ (self.u0 + self.uz0) + shared
        lower = sq1 @ (self.d1 + self.dz1) + sq0 @ (self.d0 + self.dz0) + shared
        nn = self.n * self.n
        return upper / nn, lower / nn
