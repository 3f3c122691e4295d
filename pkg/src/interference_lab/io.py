"""CSV and JSON interchange formats.

Exposure values serialize as their components joined by ``|``, with exact
fractions written ``num/den`` (e.g. ``1|2/3``). Floats are written with
``repr`` so equal inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .exposure import ExposureValue
from .outcomes import PotentialOutcomeTable
from .population import GroupPartition, InterferenceGraph

__all__ = [
    "exposure_key",
    "parse_exposure_key",
    "write_edge_csv",
    "read_edge_csv",
    "write_partition_csv",
    "read_partition_csv",
    "write_probability_csv",
    "write_outcome_csv",
    "read_outcome_csv",
    "write_qq_csv",
    "ResultRow",
    "write_results_csv",
    "write_manifest",
    "config_hash",
]


def exposure_key(value: ExposureValue) -> str:
    parts = []
    for part in value:
        if isinstance(part, Fraction):
            parts.append(f"{part.numerator}/{part.denominator}")
        else:
            parts.append(str(int(part)))
    return "|".join(parts)


def parse_exposure_key(key: str) -> ExposureValue:
    parts = []
    for chunk in key.split("|"):
        if "/" in chunk:
            num, den = chunk.split("/")
            parts.append(Fraction(int(num), int(den)))
        else:
            parts.append(int(chunk))
    return tuple(parts)


def _fmt(x) -> str:
    return repr(float(x))


def write_edge_csv(graph: InterferenceGraph, path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["unit_a", "unit_b"])
        for a, b in graph.edges():
            writer.writerow([a, b])


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if rows and not rows[0][0].strip().lstrip("-").isdigit():
        rows = rows[1:]  # header
    return rows


def read_edge_csv(path, n: int | None = None, one_indexed: bool = False) -> InterferenceGraph:
    """Two integer columns per row; a non-numeric first row is treated as a header."""
    rows = _read_rows(path)
    shift = 1 if one_indexed else 0
    edges = [(int(r[0]) - shift, int(r[1]) - shift) for r in rows]
    if n is None:
        n = max((max(a, b) for a, b in edges), default=-1) + 1
    return InterferenceGraph.from_edges(n, edges)


def write_partition_csv(partition: GroupPartition, path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["unit", "group"])
        for g, members in enumerate(partition.groups):
            for u in members:
                writer.writerow([u, g])


def read_partition_csv(path, one_indexed: bool = False) -> GroupPartition:
    rows = _read_rows(path)
    shift = 1 if one_indexed else 0
    groups: dict[int, list[int]] = {}
    for r in rows:
        groups.setdefault(int(r[1]) - shift, []).append(int(r[0]) - shift)
    n = sum(len(v) for v in groups.values())
    ordered = [tuple(sorted(groups[g])) for g in sorted(groups)]
    return GroupPartition(n, tuple(ordered))


def write_probability_csv(probs, path) -> None:
    """Marginal exposure probabilities: unit, exposure, probability, method, se."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "exposure", "probability", "method", "se"])
        for (i, k), p in sorted(probs.marginal.items(), key=lambda kv: (kv[0][0], exposure_key(kv[0][1]))):
            se = probs.se.get((i, k), "")
            writer.writerow([i, exposure_key(k), _fmt(p), probs.method, se and _fmt(se)])


def write_outcome_csv(table: PotentialOutcomeTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "time", "exposure", "value"])
        for i, t, k, y in table.cells():
            writer.writerow([i, t, exposure_key(k), _fmt(y)])


def read_outcome_csv(path, n: int | None = None, T: int | None = None) -> PotentialOutcomeTable:
    rows = _read_rows(path)
    cells = {}
    for r in rows:
        cells[(int(r[0]), int(r[1]), parse_exposure_key(r[2]))] = float(r[3])
    if n is None:
        n = max(i for (i, _, _) in cells) + 1
    if T is None:
        T = max(t for (_, t, _) in cells)
    return PotentialOutcomeTable.from_dict(n, T, cells)


def write_qq_csv(qq_points: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theoretical_quantile", "sample_quantile"])
        for theo, samp in qq_points:
            writer.writerow([_fmt(theo), _fmt(samp)])


@dataclass(frozen=True)
class ResultRow:
    scenario: str
    n: int
    T: int
    reps: int
    metric: str
    value: float
    se: float | None
    seed: int
    config_hash: str


def write_results_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scenario", "n", "T", "reps", "metric", "value", "se", "seed", "config_hash"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.scenario,
                    row.n,
                    row.T,
                    row.reps,
                    row.metric,
                    _fmt(row.value),
                    "" if row.se is None else _fmt(row.se),
                    row.seed,
                    row.config_hash,
                ]
            )


_RUNTIME_KEYS = frozenset({"threads", "out", "figures"})


def config_hash(config: dict) -> str:
    """Hash of the result-determining config fields.

    Runtime-only knobs (worker count, output paths, figure rendering) do not
    affect the numbers and are excluded, so reruns across thread counts carry
    the same provenance hash.
    """
    canon = json.dumps(
        {k: v for k, v in config.items() if k not in _RUNTIME_KEYS},
        sort_keys=True,
        separators=(",", ":"),
        default=str,
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def write_manifest(path, *, scenario, config, seed, scale, wall_time_s, outputs,
                   notes=()) -> None:
    import platform

    from . import __version__

    manifest = {
        "scenario": scenario,
        "config_hash": config_hash(config),
        "config": config,
        "seed": seed,
        "scale": scale,
        "wall_time_s": round(wall_time_s, 3),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "interference_lab": __version__,
        },
        "outputs": [str(p) for p in outputs],
        "notes": list(notes),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
