import filecmp
import json

import numpy as np
import pytest

from interference_lab.errors import ConfigError
from interference_lab.simcli.cli import main
from interference_lab.simcli.config import (
    SCENARIOS,
    effective_reps,
    load_config,
    resolve_config,
)
from interference_lab.simcli.scenarios import draw_group_sizes, run_scenario


class TestConfig:
    def test_defaults_resolve(self):
        for scenario in SCENARIOS:
            cfg = resolve_config(scenario)
            assert cfg["scenario"] == scenario
            assert cfg["reps"] >= 1

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            resolve_config("clt-tec", {"bogus": 1})

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError):
            resolve_config("not-a-scenario")

    def test_scenario_mismatch(self):
        with pytest.raises(ConfigError, match="config file is for scenario"):
            resolve_config("clt-tec", {"scenario": "group-size"})

    def test_bad_scale(self):
        with pytest.raises(ConfigError):
            resolve_config("clt-tec", {"scale": "tiny"})

    def test_type_check(self):
        with pytest.raises(ConfigError):
            resolve_config("clt-tec", {"reps": "many"})

    def test_yaml_and_json_mirror(self, tmp_path):
        ypath = tmp_path / "cfg.yaml"
        ypath.write_text("scenario: stability-rmse\nreps: 7\nn: [50]\n")
        jpath = tmp_path / "cfg.json"
        jpath.write_text(json.dumps({"scenario": "stability-rmse", "reps": 7, "n": [50]}))
        assert load_config(ypath) == load_config(jpath)

    def test_effective_reps(self):
        cfg = resolve_config("clt-tec", {"reps": 1000, "scale": "quarter"})
        assert effective_reps(cfg) == 250
        cfg = resolve_config("clt-tec", {"reps": 100, "scale": "quarter"})
        assert effective_reps(cfg) == 50  # floor

    def test_cli_overrides_win(self):
        cfg = resolve_config("clt-tec", {"seed": 1}, seed=42)
        assert cfg["seed"] == 42


class TestGroupSizes:
    def test_sizes_in_range_and_sum(self, rng):
        for n in range(4, 60):
            sizes = draw_group_sizes(n, 2, 4, rng)
            assert sum(sizes) == n
            assert all(2 <= s <= 4 for s in sizes)

    def test_single_group(self, rng):
        assert draw_group_sizes(3, 3, 3, rng) == [3]

    def test_too_small(self, rng):
        with pytest.raises(ConfigError):
            draw_group_sizes(1, 2, 4, rng)


class TestScenarioSmoke:
    @staticmethod
    def _mean_within_mc_error(z):
        # standardized replication draws: mean within 4 Monte-Carlo SEs of 0
        assert abs(z.mean()) <= 4.0 * z.std(ddof=1) / np.sqrt(z.size)

    def test_unbiasedness_clt_scenarios(self):
        cfg = resolve_config("clt-tec", {"n": [40], "n_is": "units", "reps": 3000})
        _, extras = run_scenario(cfg)
        self._mean_within_mc_error(extras["n"][40]["standardized"])

        cfg = resolve_config("clt-atec", {"n": [36], "T": 3, "reps": 2000})
        _, extras = run_scenario(cfg)
        self._mean_within_mc_error(extras["n"][36]["standardized"])

    def test_unbiasedness_group_and_household(self):
        cfg = resolve_config("group-size", {"r": [2], "n": [32], "reps": 3000})
        _, extras = run_scenario(cfg)
        self._mean_within_mc_error(extras["cells"][(2, 32)]["standardized"])

        cfg = resolve_config("household-mixed", {"n": [4], "reps": 2000, "T": 6})
        _, extras = run_scenario(cfg)
        self._mean_within_mc_error(extras["n"][4]["standardized"])

    def test_unbiasedness_stability(self):
        cfg = resolve_config("stability-rmse", {"n": [60], "reps": 2000})
        _, extras = run_scenario(cfg)
        data = extras["n"][60]
        # raw HT draws around the true total effect
        cfg_rerun = resolve_config("stability-rmse", {"n": [60], "reps": 2000})
        from interference_lab.simcli.scenarios import _stability_batches, _stability_setup

        setup = _stability_setup(cfg_rerun, 60, (0,))
        est_t, _, _, _, _ = _stability_batches(cfg_rerun, setup, 2000, (0,), [20])
        draws = est_t[:, 19] - setup["true_te"]
        self._mean_within_mc_error(draws)

    def test_degenerate_dgp_full_coverage(self):
        cfg = resolve_config(
            "clt-tec",
            {
                "n": [30],
                "n_is": "units",
                "reps": 300,
                "dgp": {"family": "normal-linear", "a": 0, "b": 0, "c": 0, "sd": 0},
            },
        )
        rows, extras = run_scenario(cfg)
        vals = {r.metric: r.value for r in rows}
        assert vals["coverage"] == 1.0  # point intervals covering the zero contrast
        assert vals["mean_estimate"] == 0.0
        assert extras["n"][30]["report"].degenerate

    def test_stability_k1_equals_ht(self):
        cfg = resolve_config("stability-rmse", {"n": [40], "reps": 60, "k_steps": [1, 2]})
        _, extras = run_scenario(cfg)
        rmse = extras["n"][40]["rmse"]
        assert rmse["k1"] == rmse["ht"]

    def test_epsilon_multiplier_one_matches_rmse_run(self):
        common = {"n": [40], "reps": 60, "seed": 9}
        cfg_eps = resolve_config("epsilon-sensitivity", {**common, "multipliers": [1.0]})
        _, ex_eps = run_scenario(cfg_eps)
        cfg_rmse = resolve_config("stability-rmse", common)
        _, ex_rmse = run_scenario(cfg_rmse)
        table = ex_eps["n"][40]["rmse"]
        assert table["ht"][1.0] == pytest.approx(ex_rmse["n"][40]["rmse"]["ht"])
        assert table["k2"][1.0] == pytest.approx(ex_rmse["n"][40]["rmse"]["k2"])

    def test_household_zero_variance_guard(self):
        from interference_lab.errors import AssumptionError

        cfg = resolve_config(
            "household-mixed",
            {
                "n": [2],
                "reps": 100,
                "T": 4,
                "dgp": {"family": "normal-linear", "a": 0, "b": 0, "c": 0, "sd": 0},
            },
        )
        with pytest.raises(AssumptionError):
            run_scenario(cfg)

    def test_household_closed_form_vs_mc(self):
        cfg = resolve_config("household-mixed", {"n": [4], "reps": 4000, "T": 5})
        rows, _ = run_scenario(cfg)
        vals = {r.metric: r.value for r in rows if r.n == 8}
        se = vals["mc_var_se"]
        assert abs(vals["mc_var_scaled"] - vals["closed_form_var_scaled"]) <= 4 * se


class TestCli:
    def test_run_writes_outputs(self, tmp_path):
        rc = main(
            [
                "stability-rmse",
                "--out",
                str(tmp_path),
                "--seed",
                "6",
                "--threads",
                "1",
                "--no-figures",
                "--config",
                str(self._cfg(tmp_path, {"n": [40], "reps": 30})),
            ]
        )
        assert rc == 0
        assert (tmp_path / "stability-rmse.csv").exists()
        manifest = json.loads((tmp_path / "stability-rmse_manifest.json").read_text())
        assert manifest["seed"] == 6
        assert manifest["config_hash"]

    @staticmethod
    def _cfg(tmp_path, payload):
        import yaml

        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(payload))
        return path

    def test_figures_rendered(self, tmp_path):
        rc = main(
            [
                "group-size",
                "--out",
                str(tmp_path),
                "--threads",
                "1",
                "--config",
                str(self._cfg(tmp_path, {"r": [2], "n": [16], "reps": 200})),
            ]
        )
        assert rc == 0
        assert (tmp_path / "hist_group-size_r2_n16.png").exists()
        assert (tmp_path / "qq_group-size_r2_n16.png").exists()
        assert (tmp_path / "qq_group-size_r2_n16.csv").exists()

    def test_config_error_exit_code(self, tmp_path):
        rc = main(
            [
                "clt-tec",
                "--out",
                str(tmp_path),
                "--config",
                str(self._cfg(tmp_path, {"bogus_key": 3})),
            ]
        )
        assert rc == 2

    def test_assumption_violation_exit_code(self, tmp_path):
        cfg = self._cfg(
            tmp_path,
            {
                "n": [2],
                "reps": 50,
                "T": 4,
                "dgp": {"family": "normal-linear", "a": 0, "b": 0, "c": 0, "sd": 0},
            },
        )
        rc = main(["household-mixed", "--out", str(tmp_path), "--config", str(cfg)])
        assert rc == 3

    def test_enumeration_cap_exit_code(self, tmp_path):
        # a size-30 household exceeds the exact-enumeration bit cap
        cfg = self._cfg(tmp_path, {"r": [30], "n": [30], "reps": 50})
        rc = main(["group-size", "--out", str(tmp_path), "--config", str(cfg)])
        assert rc == 4

    def test_determinism_across_threads(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg = self._cfg(tmp_path, {"n": [60], "reps": 80})
        for out, threads in ((out1, "1"), (out2, "3")):
            rc = main(
                [
                    "stability-ci",
                    "--out",
                    str(out),
                    "--threads",
                    threads,
                    "--no-figures",
                    "--config",
                    str(cfg),
                ]
            )
            assert rc == 0
        assert filecmp.cmp(out1 / "stability-ci.csv", out2 / "stability-ci.csv", shallow=False)
