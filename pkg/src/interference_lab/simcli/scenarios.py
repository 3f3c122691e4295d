"""The replication scenarios behind the CLI.

Each ``run_*`` function takes a resolved config and returns
``(rows, extras)``: result rows for the CSV plus in-memory artifacts
(standardized samples, Q-Q points, RMSE curves) for tests and figure
rendering. Replications are split into fixed-size batches, each with its own
counter-based random stream, so results are byte-identical for any thread
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..design import Bernoulli, ClusterRandomized, TwoStage
from ..errors import AssumptionError, ConfigError, DegenerateInputError, OverlapError
from ..estimators import solve_weights
from ..exposure import (
    ExposureProbabilities,
    ExposureProbabilityEngine,
    SelfAndAnyNeighbor,
    SelfAndFraction,
    SelfAndFractionBuckets,
    SelfOnly,
    StratifiedCarryover,
)
from ..inference import normal_quantile, normality_diagnostics
from ..io import ResultRow, config_hash
from ..outcomes import DgpSpec, Tec, TotalEffect, Atec, generate, true_estimand
from ..population import GroupPartition, gen_erdos_renyi, partition_to_graph
from ..streams import stream
from ..variance import true_var_tec
from .config import effective_reps
from .engine import (
    NeighborCounter,
    PairedVarianceTE,
    PairedVarianceTEC,
    TableArrays,
    dependent_pairs_graph,
    dependent_pairs_partition,
    encode_exposures,
    value_to_code,
)

__all__ = [
    "run_scenario",
    "run_clt_tec",
    "run_clt_atec",
    "run_stability_rmse",
    "run_stability_ci",
    "run_epsilon_sensitivity",
    "run_group_size",
    "run_household_mixed",
]

_MAPS = {
    "self-only": SelfOnly,
    "self-any-neighbor": SelfAndAnyNeighbor,
    "self-fraction-buckets": SelfAndFractionBuckets,
    "self-fraction": SelfAndFraction,
    "stratified-carryover": StratifiedCarryover,
}


def _make_map(name: str):
    try:
        return _MAPS[name]()
    except KeyError:
        raise ConfigError(f"unknown exposure map {name!r}") from None


def _make_design(cfg_design: dict, partition: GroupPartition | None):
    variant = cfg_design.get("variant", "bernoulli")
    if variant == "bernoulli":
        return Bernoulli(float(cfg_design.get("p", 0.5)))
    if variant == "two-stage":
        if partition is None:
            raise ConfigError("two-stage design needs a group partition")
        return TwoStage(
            float(cfg_design.get("p_arm", 0.5)),
            float(cfg_design.get("p_high", 0.9)),
            float(cfg_design.get("p_low", 0.1)),
            partition,
        )
    if variant == "cluster":
        if partition is None:
            raise ConfigError("cluster design needs a group partition")
        return ClusterRandomized(float(cfg_design.get("p", 0.5)), partition)
    raise ConfigError(f"unknown design variant {variant!r}")


def _contrast_values(cfg: dict):
    k = tuple(cfg["contrast"]["k"])
    kp = tuple(cfg["contrast"]["kprime"])
    return k, kp


def draw_group_sizes(n: int, gmin: int, gmax: int, rng) -> list[int]:
    """Group sizes uniform on [gmin, gmax] summing exactly to n."""
    if not 1 <= gmin <= gmax:
        raise ConfigError("need 1 <= group_min <= group_max")
    if n < gmin:
        raise ConfigError(f"population {n} smaller than the minimum group size")
    sizes: list[int] = []
    remaining = n
    while remaining > 0:
        if remaining <= gmax:
            if remaining >= gmin:
                sizes.append(remaining)
            else:
                # fold the remainder into the previous group, splitting if needed
                last = sizes.pop() + remaining
                if last <= gmax:
                    sizes.append(last)
                else:
                    a = max(gmin, last - gmax)
                    sizes.extend([a, last - a])
            break
        hi = min(gmax, remaining - gmin)
        s = int(rng.integers(gmin, hi + 1)) if hi > gmin else gmin
        sizes.append(s)
        remaining -= s
    return sizes


def _batch_grid(reps: int, n: int, T: int) -> list[tuple[int, int]]:
    size = max(32, min(512, int(4e6 / max(1, n * T))))
    return [(start, min(size, reps - start)) for start in range(0, reps, size)]


def _run_batches(batches, fn, threads: int):
    if threads <= 1:
        return [fn(bi, start, size) for bi, (start, size) in enumerate(batches)]
    results = [None] * len(batches)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {
            pool.submit(fn, bi, start, size): bi
            for bi, (start, size) in enumerate(batches)
        }
        for fut, bi in futures.items():
            results[bi] = fut.result()
    return [results[i] for i in range(len(batches))]


def _sample_batch(design, group_of, n: int, T: int, size: int, rng) -> np.ndarray:
    """(size, n, T) assignment batch; draw order is fixed per design."""
    if isinstance(design, Bernoulli):
        return (rng.random((size, n, T)) < design.p).astype(np.int8)
    G = design.partition.n_groups
    arms = rng.random((size, G, T))
    if isinstance(design, ClusterRandomized):
        return (arms < design.p).astype(np.int8)[:, group_of, :]
    probs = np.where(arms < design.p_arm, design.p_high, design.p_low)[:, group_of, :]
    return (rng.random((size, n, T)) < probs).astype(np.int8)


def _group_probability_cache(exposure_map, design_cfg, sizes, k, kp):
    """Exact marginal/pairwise tables per distinct group size.

    Group designs are exchangeable within groups and the shipped maps are
    symmetric in neighbors, so probabilities depend on the group size only.
    """
    cache = {}
    for g in sorted(set(sizes)):
        part = GroupPartition.from_sizes([g])
        graph = partition_to_graph(part)
        design = _make_design(design_cfg, part)
        eng = ExposureProbabilityEngine(exposure_map, design, graph)
        marginal = eng.marginal(0)
        pair = eng.pairwise(0, 1) if g >= 2 else {}
        cache[g] = {"marginal": marginal, "pair": pair}
    return cache


def _probs_from_cache(cache, partition: GroupPartition, p: int) -> ExposureProbabilities:
    probs = ExposureProbabilities(p, "exact")
    for members in partition.groups:
        g = len(members)
        for u in members:
            probs.set_marginal(u, cache[g]["marginal"])
        ms = sorted(members)
        for a_idx, a in enumerate(ms):
            for b in ms[a_idx + 1 :]:
                probs.set_pairwise(a, b, cache[g]["pair"])
    return probs


def _row_factory(cfg, reps):
    chash = config_hash({k: v for k, v in cfg.items()})
    seed = cfg["seed"]
    scenario = cfg["scenario"]

    def row(n, T, metric, value, se=None):
        return ResultRow(scenario, n, T, reps, metric, float(value), se, seed, chash)

    return row


def _normality_rows(row, report, n, T, suffix=""):
    return [
        row(n, T, f"skewness{suffix}", report.skewness),
        row(n, T, f"excess_kurtosis{suffix}", report.excess_kurtosis),
        row(n, T, f"jb_stat{suffix}", report.jb_stat),
        row(n, T, f"jb_pvalue{suffix}", report.jb_pvalue),
        row(n, T, f"ks_distance{suffix}", report.ks_distance),
    ]


# ---------------------------------------------------------------------------
# CLT scenarios


def run_clt_tec(cfg: dict):
    """Cross-sectional exposure-contrast CLT study: coverage plus diagnostics."""
    reps = effective_reps(cfg)
    exposure_map = _make_map(cfg["map"])
    k, kp = _contrast_values(cfg)
    dgp = DgpSpec(cfg["dgp"]["family"], {a: b for a, b in cfg["dgp"].items() if a != "family"})
    z = normal_quantile(1.0 - cfg["alpha"] / 2.0)
    inflate = 1.0 / math.sqrt(1.0 - cfg["delta"])
    row = _row_factory(cfg, reps)
    rows, extras = [], {"n": {}}

    for idx, n_label in enumerate(cfg["n"]):
        rng_struct = stream(cfg["seed"], "structure", idx)
        if cfg.get("partition_file"):
            from ..io import read_partition_csv

            loaded = read_partition_csv(cfg["partition_file"])
            sizes = [len(g) for g in loaded.groups]
            n_label = loaded.n_groups if cfg["n_is"] == "households" else loaded.n
        elif cfg["n_is"] == "households":
            sizes = [
                int(rng_struct.integers(cfg["group_min"], cfg["group_max"] + 1))
                for _ in range(n_label)
            ]
        elif cfg["n_is"] == "units":
            sizes = draw_group_sizes(n_label, cfg["group_min"], cfg["group_max"], rng_struct)
        else:
            raise ConfigError("n_is must be 'households' or 'units'")
        partition = GroupPartition.from_sizes(sizes)
        n = partition.n
        graph = partition_to_graph(partition)
        design = _make_design(cfg["design"], partition)
        table = generate(dgp, graph, exposure_map, n, 1, stream(cfg["seed"], "outcomes", idx))

        counter = NeighborCounter(partition)
        degrees = counter.degrees
        cache = _group_probability_cache(exposure_map, cfg["design"], sizes, k, kp)
        probs = _probs_from_cache(cache, partition, exposure_map.p)
        pk = np.array([probs.marginal_at(i, 1, k) for i in range(n)])
        pkp = np.array([probs.marginal_at(i, 1, kp) for i in range(n)])
        if np.any(pk <= 0) or np.any(pkp <= 0):
            bad = [i for i in range(n) if pk[i] <= 0 or pkp[i] <= 0]
            raise OverlapError(f"contrast unreachable for units {bad[:10]}", bad)

        pairs = dependent_pairs_partition(partition)
        joints = {pair: probs.pairwise_at(pair[0], pair[1], 1) for pair in pairs}
        true_tec = true_estimand(table, Tec(1, k, kp)).value
        true_var = true_var_tec(table, probs, k, kp, 1, dependent_pairs=pairs)

        tables = TableArrays(table, exposure_map, degrees)
        code_k = np.array([value_to_code(exposure_map, k, int(d)) for d in degrees])
        code_kp = np.array([value_to_code(exposure_map, kp, int(d)) for d in degrees])
        vhat_engine = PairedVarianceTEC(
            pk, pkp, code_k, code_kp, pairs, joints, k, kp,
            within_unit_bound=cfg["variance_variant"] == "conservative",
        )
        group_of = np.asarray(partition.group_of)

        def batch(bi, start, size):
            rng = stream(cfg["seed"], "replications", idx, bi)
            w = _sample_batch(design, group_of, n, 1, size, rng)
            counts = counter.counts(w[..., 0])[..., None]
            codes = encode_exposures(exposure_map, w, counts, degrees)[..., 0]
            y = tables.lookup(codes[..., None])[..., 0]
            est = (
                np.where(codes == code_k, y, 0.0) / pk
                - np.where(codes == code_kp, y, 0.0) / pkp
            ).mean(axis=1)
            vhat = vhat_engine.value(codes, y)
            return est, vhat

        parts = _run_batches(_batch_grid(reps, n, 1), batch, cfg["threads"])
        est = np.concatenate([p[0] for p in parts])
        vhat = np.concatenate([p[1] for p in parts])

        half = z * inflate * np.sqrt(np.maximum(vhat, 0.0) / n)
        covered = np.abs(est - true_tec) <= half
        cov = covered.mean()
        cov_se = math.sqrt(cov * (1 - cov) / reps)
        if true_var > 0:
            standardized = (est - true_tec) / math.sqrt(true_var / n)
            ratio = vhat / true_var
            q25, q75 = np.quantile(ratio, [0.25, 0.75])
        else:
            # degenerate table: estimates are exactly constant, intervals are
            # points, coverage counts exact hits
            standardized = est - true_tec
            q25 = q75 = float("nan")
        report = normality_diagnostics(standardized)

        rows += [
            row(n_label, 1, "coverage", cov, cov_se),
            row(n_label, 1, "mean_estimate", est.mean()),
            row(n_label, 1, "true_tec", true_tec),
            row(n_label, 1, "true_var_scaled", true_var),
            row(n_label, 1, "var_ratio_q25", q25),
            row(n_label, 1, "var_ratio_q75", q75),
            row(n_label, 1, "mean_ci_halfwidth", half.mean()),
        ]
        rows += _normality_rows(row, report, n_label, 1)
        extras["n"][n_label] = {
            "standardized": standardized,
            "coverage": cov,
            "report": report,
            "qq": report.qq_points,
        }
    return rows, extras


def run_clt_atec(cfg: dict):
    """Panel ATEC CLT study with per-period conservative variance estimates."""
    reps = effective_reps(cfg)
    exposure_map = _make_map(cfg["map"])
    k, kp = _contrast_values(cfg)
    dgp = DgpSpec(cfg["dgp"]["family"], {a: b for a, b in cfg["dgp"].items() if a != "family"})
    z = normal_quantile(1.0 - cfg["alpha"] / 2.0)
    inflate = 1.0 / math.sqrt(1.0 - cfg["delta"])
    row = _row_factory(cfg, reps)
    rows, extras = [], {"n": {}}
    if cfg["design"].get("variant") == "two-stage":
        extras["notes"] = [
            "two-stage arms are re-randomized independently at every time step"
        ]

    for idx, n in enumerate(cfg["n"]):
        T = cfg["T"] if isinstance(cfg["T"], int) else int(math.isqrt(n))
        gmax = (
            cfg["group_max"]
            if isinstance(cfg["group_max"], int)
            else max(cfg["group_min"], int(round(n ** (1 / 3))))
        )
        rng_struct = stream(cfg["seed"], "structure", idx)
        sizes = draw_group_sizes(n, cfg["group_min"], gmax, rng_struct)
        partition = GroupPartition.from_sizes(sizes)
        graph = partition_to_graph(partition)
        design = _make_design(cfg["design"], partition)
        table = generate(dgp, graph, exposure_map, n, T, stream(cfg["seed"], "outcomes", idx))

        counter = NeighborCounter(partition)
        degrees = counter.degrees
        cache = _group_probability_cache(exposure_map, cfg["design"], sizes, k, kp)
        probs = _probs_from_cache(cache, partition, exposure_map.p)
        pk = np.array([probs.marginal_at(i, 1, k) for i in range(n)])
        pkp = np.array([probs.marginal_at(i, 1, kp) for i in range(n)])
        if np.any(pk <= 0) or np.any(pkp <= 0):
            bad = [i for i in range(n) if pk[i] <= 0 or pkp[i] <= 0]
            raise OverlapError(f"contrast unreachable for units {bad[:10]}", bad)

        pairs = dependent_pairs_partition(partition)
        joints = {pair: probs.pairwise_at(pair[0], pair[1], 1) for pair in pairs}
        true_atec = true_estimand(table, Atec(k, kp)).value
        true_var_t = np.array(
            [true_var_tec(table, probs, k, kp, t, dependent_pairs=pairs) for t in range(1, T + 1)]
        )
        true_var_atec = true_var_t.sum() / (n * T * T)

        tables = TableArrays(table, exposure_map, degrees)
        code_k = np.array([value_to_code(exposure_map, k, int(d)) for d in degrees])
        code_kp = np.array([value_to_code(exposure_map, kp, int(d)) for d in degrees])
        vhat_engine = PairedVarianceTEC(
            pk, pkp, code_k, code_kp, pairs, joints, k, kp,
            within_unit_bound=cfg["variance_variant"] == "conservative",
        )
        group_of = np.asarray(partition.group_of)

        def batch(bi, start, size):
            rng = stream(cfg["seed"], "replications", idx, bi)
            w = _sample_batch(design, group_of, n, T, size, rng)
            counts = np.stack([counter.counts(w[..., t]) for t in range(T)], axis=-1)
            codes = encode_exposures(exposure_map, w, counts, degrees)
            y = tables.lookup(codes)
            ind_k = codes == code_k[None, :, None]
            ind_kp = codes == code_kp[None, :, None]
            est_t = (
                np.where(ind_k, y, 0.0) / pk[None, :, None]
                - np.where(ind_kp, y, 0.0) / pkp[None, :, None]
            ).mean(axis=1)
            vhat_t = np.stack(
                [vhat_engine.value(codes[..., t], y[..., t]) for t in range(T)], axis=1
            )
            return est_t.mean(axis=1), vhat_t.sum(axis=1) / (n * T * T)

        parts = _run_batches(_batch_grid(reps, n, T), batch, cfg["threads"])
        est = np.concatenate([p[0] for p in parts])
        var_hat = np.concatenate([p[1] for p in parts])

        half = z * inflate * np.sqrt(np.maximum(var_hat, 0.0))
        covered = np.abs(est - true_atec) <= half
        cov = covered.mean()
        cov_se = math.sqrt(cov * (1 - cov) / reps)
        if true_var_atec > 0:
            standardized = (est - true_atec) / math.sqrt(true_var_atec)
        else:
            standardized = est - true_atec
        report = normality_diagnostics(standardized)

        rows += [
            row(n, T, "coverage", cov, cov_se),
            row(n, T, "mean_estimate", est.mean()),
            row(n, T, "true_atec", true_atec),
        ]
        rows += _normality_rows(row, report, n, T)
        extras["n"][n] = {
            "standardized": standardized,
            "coverage": cov,
            "report": report,
            "qq": report.qq_points,
        }
    return rows, extras


# ---------------------------------------------------------------------------
# Stability scenarios


def _stability_setup(cfg, n, structure_key):
    """Shared precompute for the ER-graph total-effect scenarios."""
    if cfg.get("graph_file"):
        from ..io import read_edge_csv

        graph = read_edge_csv(cfg["graph_file"], n=n)
    else:
        if "er_p" in cfg:
            p_edge = cfg["er_p"]
        else:
            p_edge = cfg["er_base_p"] * cfg["er_base_n"] / n
        graph = gen_erdos_renyi(
            n, min(1.0, p_edge), stream(cfg["seed"], "structure", *structure_key)
        )
    exposure_map = SelfAndFraction()
    T = cfg["T"]
    dgp = DgpSpec("stability-chain", {"epsilon": cfg["epsilon"]})
    table = generate(
        dgp, graph, exposure_map, n, T, stream(cfg["seed"], "outcomes", *structure_key)
    )
    p = cfg["design_p"]
    design = Bernoulli(p)
    counter = NeighborCounter(graph)
    degrees = counter.degrees
    # saturation exposures: pi(h1) = p^(1+d), pi(h0) = (1-p)^(1+d)
    p1 = p ** (1.0 + degrees)
    p0 = (1.0 - p) ** (1.0 + degrees)
    code1 = 2 * degrees + 1  # w=1, count=d in the (d+1)-radix fraction code
    code0 = np.zeros(n, dtype=np.int64)
    closed = [set(graph.closed_neighborhood(i)) for i in range(n)]
    pairs = dependent_pairs_graph(graph)
    h1_values = [(1, _one_fraction(d)) for d in degrees]
    h0_values = [(0, _zero_fraction()) for _ in range(n)]
    joints = {}
    for i, j in pairs:
        u = len(closed[i] | closed[j])
        joints[(i, j)] = {
            (h1_values[i], h1_values[j]): p**u,
            (h0_values[i], h0_values[j]): (1.0 - p) ** u,
        }
    vhat_engine = PairedVarianceTE(p1, p0, code1, code0, pairs, joints, h1_values, h0_values)
    true_te = true_estimand(table, TotalEffect(cfg["t_target"]), exposure_map, graph).value
    tables = TableArrays(table, exposure_map, degrees)
    return {
        "graph": graph,
        "map": exposure_map,
        "table": table,
        "tables": tables,
        "design": design,
        "counter": counter,
        "degrees": degrees,
        "p1": p1,
        "p0": p0,
        "code1": code1,
        "code0": code0,
        "vhat": vhat_engine,
        "true_te": true_te,
        "T": T,
    }


def _one_fraction(degree):
    from fractions import Fraction

    return Fraction(1, 1) if degree > 0 else Fraction(0, 1)


def _zero_fraction():
    from fractions import Fraction

    return Fraction(0, 1)


def _stability_batches(cfg, setup, reps, structure_key, needed_t):
    """Per-replication HT paths, variance estimates and epsilon estimates."""
    n = setup["degrees"].size
    T = setup["T"]
    exposure_map = setup["map"]
    counter = setup["counter"]
    tables = setup["tables"]
    degrees = setup["degrees"]
    p1, p0 = setup["p1"], setup["p0"]
    code1, code0 = setup["code1"], setup["code0"]

    def batch(bi, start, size):
        rng = stream(cfg["seed"], "replications", *structure_key, bi)
        w = _sample_batch(setup["design"], None, n, T, size, rng)
        counts = np.stack([counter.counts(w[..., t]) for t in range(T)], axis=-1)
        codes = encode_exposures(exposure_map, w, counts, degrees)
        y = tables.lookup(codes)
        ind1 = codes == code1[None, :, None]
        ind0 = codes == code0[None, :, None]
        est_t = (
            np.where(ind1, y, 0.0) / p1[None, :, None]
            - np.where(ind0, y, 0.0) / p0[None, :, None]
        ).mean(axis=1)
        vu = {}
        vd = {}
        for t in needed_t:
            vu[t], vd[t] = setup["vhat"].value(codes[..., t - 1], y[..., t - 1])
        same = codes[..., 1:] == codes[..., :-1]
        diffs = np.abs(y[..., 1:] - y[..., :-1])
        eps_hat = np.where(same, diffs, 0.0).max(axis=(1, 2))
        informative = same.any(axis=(1, 2))
        return est_t, vu, vd, eps_hat, informative

    batches = _batch_grid(reps, n, T)
    parts = _run_batches(batches, batch, cfg["threads"])
    est_t = np.concatenate([p[0] for p in parts])
    vu = {t: np.concatenate([p[1][t] for p in parts]) for t in needed_t}
    vd = {t: np.concatenate([p[2][t] for p in parts]) for t in needed_t}
    eps_hat = np.concatenate([p[3] for p in parts])
    informative = np.concatenate([p[4] for p in parts])
    return est_t, vu, vd, eps_hat, informative


def _combination_estimates(est_t, vhat, eps, t_target, k):
    """Weighted combination estimate per replication (vectorized over reps)."""
    reps = est_t.shape[0]
    if k == 1:
        return est_t[:, t_target - 1]
    if k == 2:
        v_cur = vhat[t_target]
        v_prev = vhat[t_target - 1]
        denom = 4.0 * eps**2 + v_cur + v_prev
        alpha = np.where(denom > 0, 1.0 - v_cur / np.where(denom > 0, denom, 1.0), 0.5)
        alpha = np.clip(alpha, 0.0, 1.0)
        return alpha * est_t[:, t_target - 1] + (1.0 - alpha) * est_t[:, t_target - 2]
    times = list(range(t_target - k + 1, t_target + 1))
    cols = [t - 1 for t in times]
    corner = np.zeros(k)
    corner[-1] = 1.0  # pure current-period HT when the objective degenerates
    out = np.empty(reps)
    for r in range(reps):
        variances = [max(vhat[t][r], 0.0) for t in times]
        try:
            weights = solve_weights(variances, eps[r]).weights
        except DegenerateInputError:
            weights = corner
        out[r] = float(np.dot(weights, est_t[r, cols]))
    return out


def run_stability_rmse(cfg: dict):
    """RMSE comparison of the HT and weighted-combination estimators."""
    reps = effective_reps(cfg, floor=20)
    t_target = cfg["t_target"]
    kmax = max(max(cfg["k_steps"]), 2)
    row = _row_factory(cfg, reps)
    rows, extras = [], {"n": {}}
    use_upper = cfg["variance"] == "upper"
    for idx, n in enumerate(cfg["n"]):
        setup = _stability_setup(cfg, n, (idx,))
        needed = list(range(t_target - kmax + 1, t_target + 1))
        est_t, vu, vd, eps_hat, informative = _stability_batches(
            cfg, setup, reps, (idx,), needed
        )
        vhat = vu if use_upper else vd
        true_te = setup["true_te"]
        results = {"ht": est_t[:, t_target - 1]}
        for k in cfg["k_steps"]:
            results[f"k{k}"] = _combination_estimates(est_t, vhat, eps_hat, t_target, k)
        rmses = {}
        curve = {}
        for name, est in results.items():
            rmse = float(np.sqrt(np.mean((est - true_te) ** 2)))
            rmses[name] = rmse
            curve[1 if name == "ht" else int(name[1:])] = rmse
            rows.append(row(n, cfg["T"], f"rmse_{name}", rmse))
        rows.append(row(n, cfg["T"], "true_total_effect", true_te))
        rows.append(row(n, cfg["T"], "mean_eps_hat", eps_hat.mean()))
        rows.append(row(n, cfg["T"], "uninformative_eps", float((~informative).sum())))
        if (~informative).any():
            extras.setdefault("notes", []).append(
                f"n={n}: {int((~informative).sum())} replications never repeated an "
                "exposure; their epsilon estimate is 0 and the combination weights "
                "degrade toward pooling"
            )
        extras["n"][n] = {
            "rmse": rmses,
            "rmse_curve": {"rmse": curve},
            "eps_hat": eps_hat,
            "true": true_te,
        }
    return rows, extras


def run_epsilon_sensitivity(cfg: dict):
    """RMSE of the combination estimators as the epsilon plug-in is scaled."""
    reps = effective_reps(cfg, floor=20)
    t_target = cfg["t_target"]
    kmax = max(max(cfg["k_steps"]), 2)
    row = _row_factory(cfg, reps)
    rows, extras = [], {"n": {}}
    use_upper = cfg["variance"] == "upper"
    for idx, n in enumerate(cfg["n"]):
        setup = _stability_setup(cfg, n, (idx,))
        needed = list(range(t_target - kmax + 1, t_target + 1))
        est_t, vu, vd, eps_hat, _ = _stability_batches(cfg, setup, reps, (idx,), needed)
        vhat = vu if use_upper else vd
        true_te = setup["true_te"]
        ht_rmse = float(np.sqrt(np.mean((est_t[:, t_target - 1] - true_te) ** 2)))
        table = {"ht": {}}
        for mult in cfg["multipliers"]:
            rows.append(row(n, cfg["T"], f"rmse_ht_mult{mult:g}", ht_rmse))
            table["ht"][mult] = ht_rmse
            for k in cfg["k_steps"]:
                est = _combination_estimates(est_t, vhat, eps_hat * mult, t_target, k)
                rmse = float(np.sqrt(np.mean((est - true_te) ** 2)))
                rows.append(row(n, cfg["T"], f"rmse_k{k}_mult{mult:g}", rmse))
                table.setdefault(f"k{k}", {})[mult] = rmse
        extras["n"][n] = {"rmse": table, "true": true_te}
    return rows, extras


def run_stability_ci(cfg: dict):
    """Coverage and length of the Gaussian and Chebyshev intervals (k = 2)."""
    reps = effective_reps(cfg, floor=50)
    t_target = cfg["t_target"]
    z = normal_quantile(1.0 - cfg["alpha"] / 2.0)
    delta = cfg["delta_chebyshev"]
    row = _row_factory(cfg, reps)
    rows, extras = [], {"networks": {}}
    n = cfg["n"][0] if isinstance(cfg["n"], list) else cfg["n"]
    for net in range(cfg["networks"]):
        setup = _stability_setup(cfg, n, (net,))
        needed = [t_target - 1, t_target]
        est_t, vu, vd, eps_hat, _ = _stability_batches(cfg, setup, reps, (net,), needed)
        true_te = setup["true_te"]
        cur, prev = est_t[:, t_target - 1], est_t[:, t_target - 2]
        net_res = {}
        for flavor, vhat in (("vu", vu), ("vd", vd)):
            v_cur = np.maximum(vhat[t_target], 0.0)
            v_prev = np.maximum(vhat[t_target - 1], 0.0)
            denom = 4.0 * eps_hat**2 + v_cur + v_prev
            alpha = np.where(denom > 0, 1.0 - v_cur / np.where(denom > 0, denom, 1.0), 0.5)
            alpha = np.clip(alpha, 0.0, 1.0)
            tau_c = alpha * cur + (1.0 - alpha) * prev
            var_c = alpha**2 * v_cur + (1.0 - alpha) ** 2 * v_prev
            bias_hat = (1.0 - alpha) * (prev - cur)
            g_half = z * np.sqrt(var_c)
            c_half = np.sqrt(var_c / delta)
            g_cov = np.abs(tau_c - true_te) <= g_half
            c_cov = np.abs(tau_c - bias_hat - true_te) <= c_half
            for method, cov, half in (
                ("gaussian", g_cov, g_half),
                ("chebyshev", c_cov, c_half),
            ):
                pc = cov.mean()
                se = math.sqrt(pc * (1 - pc) / reps)
                rows.append(row(n, cfg["T"], f"coverage_{method}_{flavor}_net{net}", pc, se))
                rows.append(row(n, cfg["T"], f"length_{method}_{flavor}_net{net}", 2 * half.mean()))
                net_res[(method, flavor)] = {"coverage": pc, "length": 2 * half.mean()}
        extras["networks"][net] = net_res
    return rows, extras


# ---------------------------------------------------------------------------
# Group-size and household scenarios


def run_group_size(cfg: dict):
    """Normal-approximation quality by group size under a Bernoulli design."""
    reps = effective_reps(cfg)
    exposure_map = _make_map(cfg["map"])
    k, kp = _contrast_values(cfg)
    dgp = DgpSpec(cfg["dgp"]["family"], {a: b for a, b in cfg["dgp"].items() if a != "family"})
    row = _row_factory(cfg, reps)
    rows, extras = [], {"cells": {}}
    design_cfg = {"variant": "bernoulli", "p": cfg["design_p"]}

    for r_idx, r in enumerate(cfg["r"]):
        for n_idx, n in enumerate(cfg["n"]):
            if n % r != 0:
                raise ConfigError(f"population {n} not divisible by group size {r}")
            partition = GroupPartition.from_sizes([r] * (n // r))
            graph = partition_to_graph(partition)
            idx = r_idx * len(cfg["n"]) + n_idx
            table = generate(
                dgp, graph, exposure_map, n, 1, stream(cfg["seed"], "outcomes", idx)
            )
            counter = NeighborCounter(partition)
            degrees = counter.degrees
            cache = _group_probability_cache(exposure_map, design_cfg, [r], k, kp)
            probs = _probs_from_cache(cache, partition, exposure_map.p)
            pk = np.array([probs.marginal_at(i, 1, k) for i in range(n)])
            pkp = np.array([probs.marginal_at(i, 1, kp) for i in range(n)])
            if np.any(pk <= 0) or np.any(pkp <= 0):
                raise OverlapError(f"contrast unreachable at group size {r}")
            pairs = dependent_pairs_partition(partition)
            true_tec = true_estimand(table, Tec(1, k, kp)).value
            true_var = true_var_tec(table, probs, k, kp, 1, dependent_pairs=pairs)
            tables = TableArrays(table, exposure_map, degrees)
            code_k = np.array([value_to_code(exposure_map, k, int(d)) for d in degrees])
            code_kp = np.array([value_to_code(exposure_map, kp, int(d)) for d in degrees])
            design = _make_design(design_cfg, partition)

            def batch(bi, start, size):
                rng = stream(cfg["seed"], "replications", idx, bi)
                w = _sample_batch(design, None, n, 1, size, rng)
                counts = counter.counts(w[..., 0])[..., None]
                codes = encode_exposures(exposure_map, w, counts, degrees)[..., 0]
                y = tables.lookup(codes[..., None])[..., 0]
                return (
                    np.where(codes == code_k, y, 0.0) / pk
                    - np.where(codes == code_kp, y, 0.0) / pkp
                ).mean(axis=1)

            parts = _run_batches(_batch_grid(reps, n, 1), batch, cfg["threads"])
            est = np.concatenate(parts)
            standardized = (est - true_tec) / math.sqrt(true_var / n)
            report = normality_diagnostics(standardized)
            rows += _normality_rows(row, report, n, 1, suffix=f"_r{r}")
            extras["cells"][(r, n)] = {
                "standardized": standardized,
                "report": report,
                "qq": report.qq_points,
            }
    return rows, extras


def run_household_mixed(cfg: dict):
    """Mixed interference: household carryover ATEC, standardized by closed forms."""
    from ..variance import household_closed_form

    reps = effective_reps(cfg)
    r = cfg["r"]
    exposure_map = StratifiedCarryover()
    k = (1, 1, r - 1, r - 1)
    kp = (0, 0, 0, 0)
    dgp = DgpSpec(cfg["dgp"]["family"], {a: b for a, b in cfg["dgp"].items() if a != "family"})
    row = _row_factory(cfg, reps)
    rows, extras = [], {"n": {}}
    p = cfg["design_p"]
    if abs(p - 0.5) > 1e-12:
        raise ConfigError("household closed forms require the Bernoulli(1/2) design")

    for idx, households in enumerate(cfg["n"]):
        N = households * r
        T = cfg["T"] if isinstance(cfg["T"], int) else max(2, math.ceil(households**1.2))
        partition = GroupPartition.from_sizes([r] * households)
        graph = partition_to_graph(partition)
        table = generate(
            dgp, graph, exposure_map, N, T, stream(cfg["seed"], "outcomes", idx)
        )
        variances, covariances = household_closed_form(table, households, r, T, k, kp)
        b_sq = float(variances.sum() + 2.0 * covariances.sum())
        if b_sq <= 1e-12:
            raise AssumptionError(
                "closed-form variance of the average contrast vanishes; the "
                "nondegenerate-variance condition for mixed interference fails"
            )
        true_atec = true_estimand(table, Atec(k, kp)).value
        counter = NeighborCounter(partition)
        degrees = counter.degrees
        tables = TableArrays(table, exposure_map, degrees)
        code_k = np.array([value_to_code(exposure_map, k, r - 1)] * N)
        code_kp = np.array([value_to_code(exposure_map, kp, r - 1)] * N)
        pi_k = np.array([0.5**r] + [0.5 ** (2 * r)] * (T - 1))
        design = Bernoulli(p)

        def batch(bi, start, size):
            rng = stream(cfg["seed"], "replications", idx, bi)
            w = _sample_batch(design, None, N, T, size, rng)
            counts = np.stack([counter.counts(w[..., t]) for t in range(T)], axis=-1)
            codes = encode_exposures(exposure_map, w, counts, degrees)
            y = tables.lookup(codes)
            ind_k = codes == code_k[None, :, None]
            ind_kp = codes == code_kp[None, :, None]
            est_t = (
                np.where(ind_k, y, 0.0) / pi_k[None, None, :]
                - np.where(ind_kp, y, 0.0) / pi_k[None, None, :]
            ).mean(axis=1)
            return est_t.mean(axis=1)

        parts = _run_batches(_batch_grid(reps, N, T), batch, cfg["threads"])
        est = np.concatenate(parts)
        scale = math.sqrt(households * r * T)
        standardized = scale * (est - true_atec) / math.sqrt(b_sq)
        report = normality_diagnostics(standardized)
        rows += [
            row(N, T, "true_atec", true_atec),
            row(N, T, "closed_form_var_scaled", b_sq),
        ]
        rows += _normality_rows(row, report, N, T)
        if cfg["mc_check"]:
            mc_var = float(np.var(scale * (est - true_atec), ddof=1))
            rows.append(row(N, T, "mc_var_scaled", mc_var))
            rows.append(
                row(N, T, "mc_var_se", mc_var * math.sqrt(2.0 / (reps - 1)))
            )
        extras["n"][households] = {
            "standardized": standardized,
            "report": report,
            "qq": report.qq_points,
            "b_sq": b_sq,
        }
    return rows, extras


_RUNNERS = {
    "clt-tec": run_clt_tec,
    "clt-atec": run_clt_atec,
    "stability-rmse": run_stability_rmse,
    "stability-ci": run_stability_ci,
    "epsilon-sensitivity": run_epsilon_sensitivity,
    "group-size": run_group_size,
    "household-mixed": run_household_mixed,
}


def run_scenario(cfg: dict):
    return _RUNNERS[cfg["scenario"]](cfg)
