"""Command-line entry point.

    interference-lab <scenario> [--config PATH] [--scale full|half|quarter]
                     [--seed N] [--out DIR] [--threads N]
                     [--figures | --no-figures]

Exit codes: 0 success, 2 config error, 3 assumption-violation abort
(overlap / positivity / vanishing variance), 4 enumeration-cap error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from ..errors import (
    AssumptionError,
    ConfigError,
    EnumerationCapError,
    OverlapError,
    PositivityError,
)
from ..io import write_manifest, write_qq_csv, write_results_csv
from .config import SCENARIOS, load_config, resolve_config
from .scenarios import run_scenario


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="interference-lab",
        description="Simulation studies for panel experiments with interference",
    )
    parser.add_argument("scenario", choices=sorted(SCENARIOS))
    parser.add_argument("--config", help="YAML or JSON config file")
    parser.add_argument("--scale", choices=["full", "half", "quarter"], default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None)
    figs = parser.add_mutually_exclusive_group()
    figs.add_argument("--figures", dest="figures", action="store_true", default=None)
    figs.add_argument("--no-figures", dest="figures", action="store_false")
    return parser


def _export_artifacts(cfg, extras, out_dir: Path) -> list[Path]:
    outputs = []
    scenario = cfg["scenario"]
    render = cfg["figures"]
    if render:
        from . import figures

    def qq_and_figs(tag, data):
        if "qq" in data:
            qq_path = out_dir / f"qq_{scenario}_{tag}.csv"
            write_qq_csv(data["qq"], qq_path)
            outputs.append(qq_path)
        if render and "standardized" in data:
            hist_path = out_dir / f"hist_{scenario}_{tag}.png"
            figures.histogram_png(data["standardized"], hist_path, f"{scenario} {tag}")
            outputs.append(hist_path)
        if render and "qq" in data:
            png_path = out_dir / f"qq_{scenario}_{tag}.png"
            figures.qq_png(data["qq"], png_path, f"{scenario} {tag}")
            outputs.append(png_path)

    for n, data in extras.get("n", {}).items():
        qq_and_figs(f"n{n}", data)
        curves = data.get("rmse_curve")
        if curves is None and isinstance(data.get("rmse"), dict):
            first = next(iter(data["rmse"].values()), None)
            curves = data["rmse"] if isinstance(first, dict) else None
        if render and curves:
            rmse_path = out_dir / f"rmse_{scenario}_n{n}.png"
            figures.rmse_png(curves, rmse_path, f"{scenario} n={n}")
            outputs.append(rmse_path)
    for (r, n), data in extras.get("cells", {}).items():
        qq_and_figs(f"r{r}_n{n}", data)
    return outputs


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        overrides = load_config(args.config) if args.config else {}
        cfg = resolve_config(
            args.scenario,
            overrides,
            scale=args.scale,
            seed=args.seed,
            out=args.out,
            threads=args.threads,
            figures=args.figures,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    try:
        rows, extras = run_scenario(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OverlapError, PositivityError, AssumptionError) as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return 3
    except EnumerationCapError as exc:
        print(f"enumeration cap: {exc}", file=sys.stderr)
        return 4
    wall = time.perf_counter() - started

    csv_path = out_dir / f"{cfg['scenario']}.csv"
    write_results_csv(rows, csv_path)
    outputs = [csv_path] + _export_artifacts(cfg, extras, out_dir)
    manifest_path = out_dir / f"{cfg['scenario']}_manifest.json"
    write_manifest(
        manifest_path,
        scenario=cfg["scenario"],
        config=cfg,
        seed=cfg["seed"],
        scale=cfg["scale"],
        wall_time_s=wall,
        outputs=outputs,
        notes=extras.get("notes", ()),
    )
    print(f"wrote {csv_path} ({len(rows)} rows) in {wall:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
