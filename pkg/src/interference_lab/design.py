"""Assignment mechanisms: sampling, pointwise probabilities, exhaustive support.

All panel designs are temporally independent (columns of the assignment
matrix are i.i.d. from the cross-sectional base design); this matches the
standing assumption behind every downstream estimator. Designs are immutable
and sampling takes an explicit generator, so parallel replications never
share random state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationCapError, ParameterError
from .population import GroupPartition

__all__ = [
    "Bernoulli",
    "TwoStage",
    "ClusterRandomized",
    "PanelDesign",
    "AssignmentMatrix",
    "sample",
    "prob_of",
    "enumerate_support",
]

DEFAULT_ENUMERATION_CAP = 24


def _check_prob(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must be in [0, 1], got {value}")
    return float(value)


def _popcount(states: np.ndarray) -> np.ndarray:
    return np.bitwise_count(states)


@dataclass(frozen=True)
class Bernoulli:
    """Each unit treated independently with probability p at every time step."""

    p: float
    family = "bernoulli"

    def __post_init__(self):
        _check_prob(self.p, "p")

    def sample_column(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return (rng.random(n) < self.p).astype(np.int8)

    def column_prob(self, w: np.ndarray) -> float:
        w = np.asarray(w)
        ones = int(w.sum())
        return self.p**ones * (1.0 - self.p) ** (w.size - ones)

    def local_prob_table(self, units: tuple[int, ...]) -> np.ndarray:
        """P(W_units = bits) for every local assignment, marginal over the rest.

        Index bit b of the table corresponds to units[b].
        """
        m = len(units)
        states = np.arange(1 << m, dtype=np.uint64)
        ones = _popcount(states).astype(np.float64)
        return self.p**ones * (1.0 - self.p) ** (m - ones)


@dataclass(frozen=True)
class TwoStage:
    """Group-level arms, then independent unit assignment within each group.

    Each group draws a latent high/low arm with probability p_arm per time
    step (arms are re-drawn independently across time); units are then
    treated independently with probability p_high or p_low.
    """

    p_arm: float
    p_high: float
    p_low: float
    partition: GroupPartition
    family = "two-stage"

    def __post_init__(self):
        _check_prob(self.p_arm, "p_arm")
        _check_prob(self.p_high, "p_high")
        _check_prob(self.p_low, "p_low")

    def sample_column(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n != self.partition.n:
            raise ParameterError("n does not match partition")
        arms = rng.random(self.partition.n_groups) < self.p_arm
        probs = np.where(arms, self.p_high, self.p_low)[np.asarray(self.partition.group_of)]
        return (rng.random(n) < probs).astype(np.int8)

    def column_prob(self, w: np.ndarray) -> float:
        w = np.asarray(w)
        if w.size != self.partition.n:
            raise ParameterError("assignment length does not match partition")
        total = 1.0
        for members in self.partition.groups:
            ones = int(w[list(members)].sum())
            size = len(members)
            high = self.p_high**ones * (1.0 - self.p_high) ** (size - ones)
            low = self.p_low**ones * (1.0 - self.p_low) ** (size - ones)
            total *= self.p_arm * high + (1.0 - self.p_arm) * low
        return total

    def local_prob_table(self, units: tuple[int, ...]) -> np.ndarray:
        m = len(units)
        states = np.arange(1 << m, dtype=np.uint64)
        table = np.ones(1 << m, dtype=np.float64)
        pos_of = {u: b for b, u in enumerate(units)}
        by_group: dict[int, list[int]] = {}
        for u in units:
            by_group.setdefault(self.partition.group_of[u], []).append(pos_of[u])
        for positions in by_group.values():
            mask = np.uint64(sum(1 << b for b in positions))
            ones = _popcount(states & mask).astype(np.float64)
            size = len(positions)
            high = self.p_high**ones * (1.0 - self.p_high) ** (size - ones)
            low = self.p_low**ones * (1.0 - self.p_low) ** (size - ones)
            table *= self.p_arm * high + (1.0 - self.p_arm) * low
        return table


@dataclass(frozen=True)
class ClusterRandomized:
    """One coin per cluster per time step, shared by all cluster members."""

    p: float
    partition: GroupPartition
    family = "cluster"

    def __post_init__(self):
        _check_prob(self.p, "p")

    def sample_column(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n != self.partition.n:
            raise ParameterError("n does not match partition")
        arms = (rng.random(self.partition.n_groups) < self.p).astype(np.int8)
        return arms[np.asarray(self.partition.group_of)]

    def column_prob(self, w: np.ndarray) -> float:
        w = np.asarray(w)
        if w.size != self.partition.n:
            raise ParameterError("assignment length does not match partition")
        total = 1.0
        for members in self.partition.groups:
            vals = w[list(members)]
            if vals.min() != vals.max():
                return 0.0
            total *= self.p if vals[0] == 1 else (1.0 - self.p)
        return total

    def local_prob_table(self, units: tuple[int, ...]) -> np.ndarray:
        m = len(units)
        states = np.arange(1 << m, dtype=np.uint64)
        table = np.ones(1 << m, dtype=np.float64)
        pos_of = {u: b for b, u in enumerate(units)}
        by_group: dict[int, list[int]] = {}
        for u in units:
            by_group.setdefault(self.partition.group_of[u], []).append(pos_of[u])
        for positions in by_group.values():
            mask = np.uint64(sum(1 << b for b in positions))
            ones = states & mask
            all_ones = ones == mask
            all_zero = ones == np.uint64(0)
            factor = np.where(all_ones, self.p, np.where(all_zero, 1.0 - self.p, 0.0))
            table *= factor
        return table


Design = Bernoulli | TwoStage | ClusterRandomized


@dataclass(frozen=True)
class PanelDesign:
    """A cross-sectional design repeated independently over T time steps."""

    base: Design
    T: int

    def __post_init__(self):
        if self.T < 1:
            raise ParameterError("T must be >= 1")


@dataclass(frozen=True)
class AssignmentMatrix:
    """Realized n x T binary treatment panel."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int8)
        if vals.ndim != 2:
            raise ParameterError("assignment matrix must be 2-dimensional")
        if not np.isin(vals, (0, 1)).all():
            raise ParameterError("assignment entries must be 0 or 1")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


def sample(panel_design: PanelDesign, n: int, rng: np.random.Generator) -> AssignmentMatrix:
    """Draw one assignment matrix; columns are i.i.d. from the base design."""
    cols = [panel_design.base.sample_column(n, rng) for _ in range(panel_design.T)]
    return AssignmentMatrix(np.stack(cols, axis=1))


def prob_of(design: Design, w) -> float:
    """Exact probability mass of one cross-sectional assignment vector."""
    return design.column_prob(np.asarray(w))


def _column_support(design: Design, n: int):
    if isinstance(design, ClusterRandomized):
        n_groups = design.partition.n_groups
        group_of = np.asarray(design.partition.group_of)
        for arms in itertools.product((0, 1), repeat=n_groups):
            arms_arr = np.asarray(arms, dtype=np.int8)
            prob = float(
                np.prod(np.where(arms_arr == 1, design.p, 1.0 - design.p))
            )
            if prob > 0.0:
                yield arms_arr[group_of], prob
        return
    for bits in itertools.product((0, 1), repeat=n):
        w = np.asarray(bits, dtype=np.int8)
        prob = design.column_prob(w)
        if prob > 0.0:
            yield w, prob


def _enumeration_bits(design: Design, n: int, T: int) -> int:
    bits = n * T
    if isinstance(design, TwoStage):
        # latent arms add one binary dimension per group per step
        bits += design.partition.n_groups * T
    return bits


def enumerate_support(
    panel_design: PanelDesign, n: int, cap_bits: int = DEFAULT_ENUMERATION_CAP
):
    """Yield every positive-probability assignment matrix with its exact mass.

    Probabilities sum to 1 up to float round-off. Raises when the instance
    needs more binary dimensions than ``cap_bits``.
    """
    bits = _enumeration_bits(panel_design.base, n, panel_design.T)
    if bits > cap_bits:
        raise EnumerationCapError(
            f"instance too large for enumeration: {bits} binary dimensions "
            f"(cap {cap_bits})"
        )
    column_points = list(_column_support(panel_design.base, n))
    for combo in itertools.product(column_points, repeat=panel_design.T):
        matrix = np.stack([w for w, _ in combo], axis=1)
        prob = 1.0
        for _, p in combo:
            prob *= p
        yield AssignmentMatrix(matrix), prob
