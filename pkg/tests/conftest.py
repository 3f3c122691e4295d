"""Shared enumeration oracles and instance generators for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from interference_lab.design import (
    Bernoulli,
    ClusterRandomized,
    PanelDesign,
    TwoStage,
    enumerate_support,
)
from interference_lab.exposure import (
    ExposureProbabilities,
    ExposureProbabilityEngine,
    SelfAndAnyNeighbor,
    SelfOnly,
    StratifiedCarryover,
    eval_matrix,
)
from interference_lab.outcomes import PotentialOutcomeTable, realize
from interference_lab.population import GroupPartition, gen_erdos_renyi, partition_to_graph


def build_probs(exposure_map, design, graph, T, crosstime=True):
    """Exact probability tables for every unit, pair, and (optionally) time pair."""
    eng = ExposureProbabilityEngine(exposure_map, design, graph)
    probs = ExposureProbabilities(exposure_map.p)
    n = graph.n
    for i in range(n):
        probs.set_marginal(i, eng.marginal(i))
        for t in range(1, exposure_map.p):
            probs.set_marginal(i, eng.marginal(i, t), t=t)
    for i in range(n):
        for j in range(i + 1, n):
            probs.set_pairwise(i, j, eng.pairwise(i, j))
            for t in range(1, exposure_map.p):
                probs.set_pairwise(i, j, eng.pairwise(i, j, t), t=t)
    if crosstime:
        for t in range(1, T + 1):
            for tp in range(t + 1, T + 1):
                for i in range(n):
                    for j in range(n):
                        probs.set_crosstime(i, t, j, tp, eng.crosstime(i, t, j, tp))
    return probs


def enumerate_draws(design, exposure_map, graph, table, T):
    """Yield (probability, exposures, observed) over the full assignment support."""
    for W, p in enumerate_support(PanelDesign(design, T), graph.n):
        H = eval_matrix(exposure_map, W, graph)
        Y = realize(table, H)
        yield p, H, Y


def expectation(design, exposure_map, graph, table, T, fn):
    """E[fn(H, Y)] over the full assignment support."""
    total = 0.0
    for p, H, Y in enumerate_draws(design, exposure_map, graph, table, T):
        total += p * fn(H, Y)
    return total


def random_instance(rng, design_family=None, map_name=None, nonnegative=True,
                    epsilon=None):
    """A random small instance: (design, map, graph, table, T, contrast).

    Designs cover all three families; maps cover the order-1 and order-2
    variants used by the exact-oracle acceptance sweep. Group-structured maps
    get equal group sizes so the contrast is shared by every unit.
    """
    design_family = design_family or rng.choice(["bernoulli", "two-stage", "cluster"])
    map_name = map_name or rng.choice(["self-only", "any-neighbor", "carryover"])
    T = int(rng.integers(1, 3))
    if map_name == "carryover":
        T = 2
        r = int(rng.integers(2, 4))
        groups = 1 if r == 3 else int(rng.integers(1, 3))
        partition = GroupPartition.from_sizes([r] * groups)
        graph = partition_to_graph(partition)
        exposure_map = StratifiedCarryover()
        k = (1, 1, r - 1, r - 1)
        kp = (0, 0, 0, 0)
    else:
        n = int(rng.integers(2, 6))
        min_size = 2 if (design_family == "cluster" and map_name == "any-neighbor") else 1
        if design_family in ("two-stage", "cluster") or rng.random() < 0.5:
            sizes = []
            left = n
            while left > 0:
                if left < 2 * min_size:
                    s = left
                else:
                    s = int(rng.integers(min_size, min(3, left - min_size) + 1))
                sizes.append(s)
                left -= s
            partition = GroupPartition.from_sizes(sizes)
            graph = partition_to_graph(partition)
        else:
            partition = GroupPartition.from_sizes([n])
            graph = gen_erdos_renyi(n, float(rng.uniform(0.3, 0.9)), rng)
        if map_name == "self-only":
            exposure_map = SelfOnly()
            k, kp = (1,), (0,)
        elif design_family == "cluster":
            # cluster-mates share assignments: treated-with-no-treated-neighbor
            # is unreachable, so contrast the two saturated exposures
            exposure_map = SelfAndAnyNeighbor()
            k, kp = (1, 1), (0, 0)
        else:
            exposure_map = SelfAndAnyNeighbor()
            k, kp = (1, 0), (0, 0)
    n = graph.n
    if design_family == "bernoulli":
        design = Bernoulli(float(rng.uniform(0.25, 0.75)))
    elif design_family == "two-stage":
        design = TwoStage(
            float(rng.uniform(0.3, 0.7)),
            float(rng.uniform(0.6, 0.95)),
            float(rng.uniform(0.05, 0.4)),
            partition,
        )
    else:
        design = ClusterRandomized(float(rng.uniform(0.25, 0.75)), partition)

    cells = {}
    for i in range(n):
        for value in exposure_map.structural_support(graph.degree(i)):
            for t in range(1, T + 1):
                if epsilon is not None and t > 1:
                    prev = cells[(i, t - 1, value)]
                    step = float(rng.uniform(-epsilon, epsilon))
                    if nonnegative:
                        step = max(step, -prev)  # stay non-negative, still eps-stable
                    cells[(i, t, value)] = prev + step
                elif nonnegative:
                    cells[(i, t, value)] = float(rng.uniform(0.0, 2.0))
                else:
                    cells[(i, t, value)] = float(rng.normal(0.0, 1.0))
    table = PotentialOutcomeTable.from_dict(n, T, cells)
    return design, exposure_map, graph, table, T, (k, kp)


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)
