import numpy as np
import pytest

from interference_lab.errors import ContractError, ParameterError, PositivityError
from interference_lab.estimators import HtInput, TecContrast, TotalEffectContrast, ht_tec, ht_total_effect
from interference_lab.exposure import (
    ExposureProbabilities,
    SelfOnly,
    StratifiedCarryover,
)
from interference_lab.outcomes import (
    PotentialOutcomeTable,
    Tec,
    TotalEffect,
    total_effect_exposures,
)
from interference_lab.population import GroupPartition, partition_to_graph
from interference_lab.variance import (
    VarianceReport,
    atec_var_estimator,
    conservative_var_estimator_tec,
    cov_estimator_total_effect,
    household_closed_form,
    true_var_cov_total_effect,
    true_var_tec,
    var_estimators_total_effect,
)
from tests.conftest import build_probs, enumerate_draws, random_instance


def moments_over_support(design, m, graph, table, T, fn):
    """Mean/variance of a per-draw statistic over the full support."""
    vals, probs = [], []
    for p, H, Y in enumerate_draws(design, m, graph, table, T):
        vals.append(fn(H, Y))
        probs.append(p)
    vals, probs = np.asarray(vals), np.asarray(probs)
    mean = float(probs @ vals)
    return mean, float(probs @ (vals - mean) ** 2)


class TestTrueVarTec:
    def test_zero_table(self):
        cells = {(i, 1, k): 0.0 for i in range(2) for k in [(0,), (1,)]}
        table = PotentialOutcomeTable.from_dict(2, 1, cells)
        probs = ExposureProbabilities(1)
        for i in range(2):
            probs.set_marginal(i, {(0,): 0.5, (1,): 0.5})
            probs.set_pairwise(0, 1, {((a,), (b,)): 0.25 for a in (0, 1) for b in (0, 1)})
        assert true_var_tec(table, probs, (1,), (0,)) == 0.0

    def test_independent_units_hand_case(self, rng):
        from interference_lab.design import Bernoulli

        design = Bernoulli(0.5)
        m = SelfOnly()
        graph = partition_to_graph(GroupPartition(2, ((0,), (1,))))
        cells = {(i, 1, (1,)): 1.0 for i in range(2)}
        cells.update({(i, 1, (0,)): 0.0 for i in range(2)})
        table = PotentialOutcomeTable.from_dict(2, 1, cells)
        probs = build_probs(m, design, graph, 1, crosstime=False)
        formula = true_var_tec(table, probs, (1,), (0,))
        contrast = TecContrast((1,), (0,))
        _, var_enum = moments_over_support(
            design, m, graph, table, 1,
            lambda H, Y: ht_tec(HtInput(Y, H, probs, contrast), 1),
        )
        assert formula == pytest.approx(2 * var_enum, abs=1e-12)

    def test_matches_enumeration_sweep(self, rng):
        for _ in range(8):
            design, m, graph, table, T, (k, kp) = random_instance(rng, nonnegative=False)
            probs = build_probs(m, design, graph, T, crosstime=False)
            contrast = TecContrast(k, kp)
            _, var_enum = moments_over_support(
                design, m, graph, table, T,
                lambda H, Y: ht_tec(HtInput(Y, H, probs, contrast), T),
            )
            formula = true_var_tec(table, probs, k, kp, T)
            assert formula == pytest.approx(graph.n * var_enum, abs=1e-10)

    def test_rejects_mc_probabilities(self):
        probs = ExposureProbabilities(1, method="monte-carlo")
        with pytest.raises(ParameterError):
            true_var_tec(None, probs, (1,), (0,))


class TestProp6:
    def test_matches_enumeration(self, rng):
        for _ in range(6):
            design, m, graph, table, T, _ = random_instance(rng, nonnegative=False)
            if T < 2:
                continue
            probs = build_probs(m, design, graph, T)
            h1, h0 = total_effect_exposures(m, graph, T)
            contrast = TotalEffectContrast(tuple(h1), tuple(h0))
            stats = []
            weights = []
            for p, H, Y in enumerate_draws(design, m, graph, table, T):
                inp = HtInput(Y, H, probs, contrast)
                stats.append((ht_total_effect(inp, T), ht_total_effect(inp, T - 1)))
                weights.append(p)
            stats, weights = np.asarray(stats), np.asarray(weights)
            mean = weights @ stats
            var_enum = weights @ (stats[:, 0] - mean[0]) ** 2
            cov_enum = weights @ ((stats[:, 0] - mean[0]) * (stats[:, 1] - mean[1]))
            var_f, cov_f = true_var_cov_total_effect(table, probs, contrast, T, T - 1)
            assert var_f == pytest.approx(var_enum, abs=1e-10)
            assert cov_f == pytest.approx(cov_enum, abs=1e-10)

    def test_self_only_zero_covariance(self, rng):
        design, m, graph, table, T, _ = random_instance(rng, map_name="self-only")
        if T < 2:
            design, m, graph, table, T, _ = random_instance(rng, map_name="self-only")
        probs = build_probs(m, design, graph, 2)
        h1, h0 = total_effect_exposures(m, graph, 2)
        contrast = TotalEffectContrast(tuple(h1), tuple(h0))
        if table.T >= 2:
            _, cov = true_var_cov_total_effect(table, probs, contrast, 2, 1)
            assert cov == pytest.approx(0.0, abs=1e-12)


class TestProp2Conservative:
    def test_zero_outcomes(self):
        probs = ExposureProbabilities(1)
        probs.set_marginal(0, {(1,): 0.5, (0,): 0.5})
        rep = conservative_var_estimator_tec(np.zeros((1, 1)), [[(1,)]], probs, (1,), (0,))
        assert rep.point == 0.0
        assert rep.kind == "conservative-TEC"

    def test_conservative_over_sweep_any_sign(self, rng):
        for _ in range(8):
            design, m, graph, table, T, (k, kp) = random_instance(rng, nonnegative=False)
            probs = build_probs(m, design, graph, T, crosstime=False)
            contrast = TecContrast(k, kp)
            e_vhat = 0.0
            for p, H, Y in enumerate_draws(design, m, graph, table, T):
                e_vhat += p * conservative_var_estimator_tec(Y, H, probs, k, kp, T).point
            _, var_enum = moments_over_support(
                design, m, graph, table, T,
                lambda H, Y: ht_tec(HtInput(Y, H, probs, contrast), T),
            )
            assert e_vhat - graph.n * var_enum >= -1e-10

    def test_zero_joint_branch_exercised(self, rng):
        # clique + any-neighbor: the (1,0)/(0,0) cross joints vanish
        design, m, graph, table, T, (k, kp) = random_instance(
            rng, design_family="bernoulli", map_name="any-neighbor"
        )
        probs = build_probs(m, design, graph, T, crosstime=False)
        zero_found = False
        for i in range(graph.n):
            for j in range(i + 1, graph.n):
                joint = probs.pairwise_at(i, j, T)
                if joint.get((k, kp), 0.0) == 0.0 and set(graph.neighbors(i)) & {j}:
                    zero_found = True
        contrast = TecContrast(k, kp)
        e_vhat = 0.0
        for p, H, Y in enumerate_draws(design, m, graph, table, T):
            e_vhat += p * conservative_var_estimator_tec(Y, H, probs, k, kp, T).point
        _, var_enum = moments_over_support(
            design, m, graph, table, T,
            lambda H, Y: ht_tec(HtInput(Y, H, probs, contrast), T),
        )
        assert e_vhat >= graph.n * var_enum - 1e-10

    def test_published_variant_drops_within_unit_terms(self, rng):
        design, m, graph, table, T, (k, kp) = random_instance(rng)
        probs = build_probs(m, design, graph, T, crosstime=False)
        for p, H, Y in enumerate_draws(design, m, graph, table, T):
            full = conservative_var_estimator_tec(Y, H, probs, k, kp, T).point
            short = conservative_var_estimator_tec(
                Y, H, probs, k, kp, T, within_unit_bound=False
            ).point
            diag = 0.0
            for i in range(graph.n):
                h = H[i][T - 1]
                y = Y[i, T - 1]
                if h == k:
                    diag += y * y / probs.marginal_at(i, T, k)
                if h == kp:
                    diag += y * y / probs.marginal_at(i, T, kp)
            assert full - short == pytest.approx(diag / graph.n, abs=1e-12)
            break


class TestProp8Bracketing:
    def test_zero_outcomes(self):
        g = partition_to_graph(GroupPartition(2, ((0, 1),)))
        from interference_lab.design import Bernoulli
        from interference_lab.exposure import SelfAndAnyNeighbor

        m = SelfAndAnyNeighbor()
        probs = build_probs(m, Bernoulli(0.5), g, 1, crosstime=False)
        h1, h0 = total_effect_exposures(m, g, 1)
        contrast = TotalEffectContrast(tuple(h1), tuple(h0))
        up, dn = var_estimators_total_effect(
            np.zeros((2, 1)), [[(1, 1)], [(1, 1)]], probs, contrast, 1
        )
        assert up.point == 0.0 and dn.point == 0.0

    def test_bracketing_over_sweep(self, rng):
        for _ in range(8):
            design, m, graph, table, T, _ = random_instance(rng, nonnegative=True)
            probs = build_probs(m, design, graph, T, crosstime=False)
            h1, h0 = total_effect_exposures(m, graph, T)
            contrast = TotalEffectContrast(tuple(h1), tuple(h0))
            e_up = e_dn = 0.0
            for p, H, Y in enumerate_draws(design, m, graph, table, T):
                up, dn = var_estimators_total_effect(Y, H, probs, contrast, T)
                e_up += p * up.point
                e_dn += p * dn.point
            _, var_enum = moments_over_support(
                design, m, graph, table, T,
                lambda H, Y: ht_total_effect(HtInput(Y, H, probs, contrast), T),
            )
            assert e_up - var_enum >= -1e-10
            assert var_enum - e_dn >= -1e-10

    def test_negative_outcome_warning(self, rng):
        design, m, graph, table, T, _ = random_instance(rng)
        probs = build_probs(m, design, graph, T, crosstime=False)
        h1, h0 = total_effect_exposures(m, graph, T)
        contrast = TotalEffectContrast(tuple(h1), tuple(h0))
        for p, H, Y in enumerate_draws(design, m, graph, table, T):
            up, dn = var_estimators_total_effect(-np.abs(Y) - 1.0, H, probs, contrast, T)
            assert up.warnings and dn.warnings
            break


class TestProp9Covariance:
    def test_self_only_identically_zero(self, rng):
        design, m, graph, table, T, _ = random_instance(rng, map_name="self-only")
        if T < 2:
            return
        probs = build_probs(m, design, graph, T)
        h1, h0 = total_effect_exposures(m, graph, T)
        contrast = TotalEffectContrast(tuple(h1), tuple(h0))
        for p, H, Y in enumerate_draws(design, m, graph, table, T):
            rep = cov_estimator_total_effect(Y, H, probs, contrast, T, T - 1)
            assert rep.point == pytest.approx(0.0, abs=1e-12)

    def test_positivity_error_on_household_lag_one(self, rng):
        design, m, graph, table, T, _ = random_instance(
            rng, design_family="bernoulli", map_name="carryover"
        )
        probs = build_probs(m, design, graph, T)
        h1, h0 = total_effect_exposures(m, graph, T)
        contrast = TotalEffectContrast(tuple(h1), tuple(h0))
        for p, H, Y in enumerate_draws(design, m, graph, table, T):
            with pytest.raises(PositivityError):
                cov_estimator_total_effect(Y, H, probs, contrast, 2, 1)
            break

    def test_same_time_rejected(self, rng):
        design, m, graph, table, T, _ = random_instance(rng, map_name="self-only")
        probs = build_probs(m, design, graph, T)
        h1, h0 = total_effect_exposures(m, graph, T)
        contrast = TotalEffectContrast(tuple(h1), tuple(h0))
        with pytest.raises(ParameterError):
            cov_estimator_total_effect(
                np.zeros((graph.n, T)), [[(0,)] * T] * graph.n, probs, contrast, 1, 1
            )


class TestHouseholdClosedForm:
    @staticmethod
    def _household_instance(rng, n_households=1, r=2, T=2, constant=None):
        part = GroupPartition.from_sizes([r] * n_households)
        graph = partition_to_graph(part)
        m = StratifiedCarryover()
        cells = {}
        for i in range(graph.n):
            for k in m.structural_support(graph.degree(i)):
                for t in range(1, T + 1):
                    cells[(i, t, k)] = constant if constant is not None else float(rng.uniform(0, 2))
        return graph, m, PotentialOutcomeTable.from_dict(graph.n, T, cells)

    def test_zero_table(self, rng):
        graph, m, table = self._household_instance(rng, constant=0.0)
        var, cov = household_closed_form(table, 1, 2, 2)
        assert not var.any() and not cov.any()

    def test_matches_enumeration(self, rng):
        from interference_lab.design import Bernoulli

        design = Bernoulli(0.5)
        for n_households, r, T in ((1, 2, 2), (2, 2, 2), (1, 3, 2)):
            graph, m, table = self._household_instance(rng, n_households, r, T)
            probs = build_probs(m, design, graph, T)
            k = (1, 1, r - 1, r - 1)
            kp = (0, 0, 0, 0)
            contrast = TecContrast(k, kp)
            stats, weights = [], []
            for p, H, Y in enumerate_draws(design, m, graph, table, T):
                inp = HtInput(Y, H, probs, contrast)
                stats.append([ht_tec(inp, t) for t in range(1, T + 1)])
                weights.append(p)
            stats, weights = np.asarray(stats), np.asarray(weights)
            mean = weights @ stats
            scale = graph.n / T  # Var(X_t) = (n r / T) Var(tau_hat_t)
            var_f, cov_f = household_closed_form(table, n_households, r, T, k, kp)
            for t in range(T):
                var_enum = weights @ (stats[:, t] - mean[t]) ** 2
                assert var_f[t] == pytest.approx(scale * var_enum, abs=1e-10)
            for t in range(T - 1):
                cov_enum = weights @ (
                    (stats[:, t] - mean[t]) * (stats[:, t + 1] - mean[t + 1])
                )
                assert cov_f[t] == pytest.approx(scale * cov_enum, abs=1e-10)

    def test_scaling_quadratic(self, rng):
        graph, m, table = self._household_instance(rng, 2, 2, 3)
        v1, c1 = household_closed_form(table, 2, 2, 3)
        v2, c2 = household_closed_form(table.scaled(3.0), 2, 2, 3)
        assert np.allclose(v2, 9 * v1) and np.allclose(c2, 9 * c1)

    def test_contract_errors(self, rng):
        graph, m, table = self._household_instance(rng, 2, 2, 2)
        with pytest.raises(ContractError):
            household_closed_form(table, 2, 2, 2, k=(1, 0, 1, 1))
        with pytest.raises(ContractError):
            household_closed_form(table, 3, 2, 2)


class TestPluginConvex:
    def test_pair_identity(self):
        from interference_lab.variance import plugin_convex_variance

        rep = plugin_convex_variance([0.25, 0.75], [2.0, 4.0])
        assert rep.kind == "plugin-convex"
        assert rep.point == pytest.approx(0.25**2 * 2 + 0.75**2 * 4)

    def test_length_mismatch(self):
        from interference_lab.variance import plugin_convex_variance

        with pytest.raises(ParameterError):
            plugin_convex_variance([1.0], [1.0, 2.0])


class TestAtecAggregate:
    def test_single_report(self):
        rep = atec_var_estimator([VarianceReport(2.0, "upper-TE")])
        assert rep.point == 2.0

    def test_equal_reports(self):
        rep = atec_var_estimator([1.5] * 5)
        assert rep.point == pytest.approx(1.5 / 5)

    def test_hand_sum(self, rng):
        vals = rng.uniform(0, 3, size=4)
        rep = atec_var_estimator(list(vals))
        assert rep.point == pytest.approx(vals.sum() / 16)

    def test_empty(self):
        with pytest.raises(ParameterError):
            atec_var_estimator([])
