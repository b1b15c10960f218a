"""End-to-end p-value machinery: request validation, scale estimators,
the chi and F tests, Bonferroni, and the plug-in variants."""
import math

import numpy as np
import pytest

from cluster_sieve.core import DataMatrix, Method, interval_contains
from cluster_sieve.distributions import TruncatedDistSpec, truncated_survival
from cluster_sieve import inference as inf
from cluster_sieve.kmeans import KMeansConfig
from cluster_sieve.selection import SelectionRule

from conftest import blocked_means, gauss_data


def request(
    X,
    K,
    rule=None,
    variance=None,
    account=False,
    seed=0,
):
    return inf.TestRequest(
        data=X,
        kmeans_cfg=KMeansConfig(K=K, seed=seed),
        rule=rule if rule is not None else SelectionRule.fixed_all(K),
        variance=variance if variance is not None else inf.VarianceSpec.known(1.0),
        account_selection=account,
    )


class TestSpecs:
    def test_variance_kinds(self):
        with pytest.raises(ValueError):
            inf.VarianceSpec(kind="guessed")
        with pytest.raises(ValueError):
            inf.VarianceSpec.known(0.0)
        with pytest.raises(ValueError):
            inf.VarianceSpec.known(-1.0)
        with pytest.raises(ValueError):
            inf.VarianceSpec(kind="unknown", sigma=1.0)
        assert inf.VarianceSpec.plug_in_sample().sigma is None

    def test_account_selection_needs_data_dependent_rule(self):
        X = gauss_data(0, 12, 2)
        with pytest.raises(ValueError):
            request(X, 2, rule=SelectionRule.fixed([(0, 1)]), account=True)
        # fine with a rank rule
        request(X, 2, rule=SelectionRule.top_g(1), account=True)


class TestScaleEstimators:
    def test_sample_estimator_frozen_value(self):
        X = DataMatrix(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]]))
        # deviations are +-1 in each coordinate: sqrt(8 / (3*2))
        assert inf.sigma_hat_sample(X) == pytest.approx(1.1547005383792515, rel=1e-14)

    def test_median_estimator_frozen_value(self):
        X = DataMatrix(np.array([[0.0], [1.0], [100.0]]))
        # column median 1, squared deviations (1, 0, 9801), median 1
        assert inf.sigma_hat_med(X) == pytest.approx(
            math.sqrt(1.0 / inf.CHI1_MEDIAN), rel=1e-14
        )
        assert inf.sigma_hat_med(X) == pytest.approx(1.482602218505602, rel=1e-12)

    def test_median_estimator_ignores_minority_signal(self):
        rng = np.random.default_rng(8)
        base = rng.normal(size=(200, 10))
        spiked = base.copy()
        spiked[:, 0] += 40.0 * np.sign(rng.normal(size=200))
        med_clean = inf.sigma_hat_med(DataMatrix(base))
        med_spiked = inf.sigma_hat_med(DataMatrix(spiked))
        assert abs(med_spiked - med_clean) < 0.15
        # while the sample estimator blows up
        assert inf.sigma_hat_sample(DataMatrix(spiked)) > 5.0

    def test_consistency_on_pure_noise(self):
        X = gauss_data(3, 4000, 5, sigma=2.0)
        assert inf.sigma_hat_sample(X) == pytest.approx(2.0, rel=0.05)
        assert inf.sigma_hat_med(X) == pytest.approx(2.0, rel=0.05)


class TestKnownSigma:
    def test_separated_clusters_reject(self):
        mu = blocked_means(40, 2, [(0.0, 0.0), (12.0, 0.0)])
        X = gauss_data(1, 40, 2, mu=mu)
        res = inf.test_known_sigma(request(X, 2))
        assert res.method is Method.KNOWN_SIGMA
        assert not res.degenerate
        assert res.p_value < 1e-6
        assert res.df_num == 2  # q * rank for K=2
        assert res.df_den is None

    def test_statistic_lies_in_truncation(self):
        for seed in range(5):
            X = gauss_data(seed, 24, 2)
            res = inf.test_known_sigma(request(X, 3, seed=seed))
            if res.degenerate:
                continue
            assert interval_contains(res.truncation, res.statistic, tol=1e-9)

    def test_pvalue_matches_direct_survival(self):
        X = gauss_data(7, 21, 2)
        res = inf.test_known_sigma(request(X, 3))
        spec = TruncatedDistSpec.chi(res.df_num, res.truncation)
        assert res.p_value == pytest.approx(
            truncated_survival(res.statistic, spec), abs=1e-15
        )

    def test_pairs_tested_reported(self):
        X = gauss_data(2, 18, 2)
        res = inf.test_known_sigma(request(X, 3))
        assert res.diagnostics["pairs_tested"] == [[0, 1], [0, 2], [1, 2]]

    def test_rejects_unknown_variance_kind(self):
        X = gauss_data(0, 12, 2)
        with pytest.raises(ValueError):
            inf.test_known_sigma(request(X, 2, variance=inf.VarianceSpec.unknown()))

    def test_degenerate_data_gives_na(self):
        X = DataMatrix(np.zeros((6, 2)))
        res = inf.test_known_sigma(
            inf.TestRequest(
                data=X,
                kmeans_cfg=KMeansConfig(K=2, init_indices=(0, 1)),
                rule=SelectionRule.fixed_all(2),
                variance=inf.VarianceSpec.known(1.0),
            )
        )
        assert res.degenerate
        assert math.isnan(res.p_value)
        assert "reason" in res.diagnostics


class TestReductions:
    def test_single_fixed_pair_equals_pairwise(self):
        X = gauss_data(4, 20, 2)
        req = request(X, 3, rule=SelectionRule.fixed([(0, 2)]))
        joint = inf.test_known_sigma(req)
        pair = inf.test_pairwise_known(request(X, 3), 0, 2)
        assert pair.method is Method.PAIRWISE_KNOWN
        assert pair.statistic == joint.statistic
        assert pair.p_value == joint.p_value
        assert pair.df_num == joint.df_num
        assert pair.truncation == joint.truncation

    def test_pairwise_order_does_not_matter(self):
        X = gauss_data(6, 20, 2)
        a = inf.test_pairwise_known(request(X, 3), 2, 0)
        b = inf.test_pairwise_known(request(X, 3), 0, 2)
        assert a.p_value == b.p_value

    def test_bonferroni_matches_manual_combination(self):
        X = gauss_data(5, 24, 2)
        req = request(X, 3)
        res = inf.test_bonferroni(req)
        manual = [
            inf.test_pairwise_known(req, k, kp).p_value
            for (k, kp) in [(0, 1), (0, 2), (1, 2)]
        ]
        assert res.method is Method.BONFERRONI
        assert res.p_value == pytest.approx(min(1.0, 3 * min(manual)), abs=1e-15)
        win = res.diagnostics["winning_pair"]
        assert manual[[[0, 1], [0, 2], [1, 2]].index(win)] == min(manual)
        assert res.diagnostics["pairwise_p_values"] == pytest.approx(manual)

    def test_bonferroni_single_pair_is_pairwise(self):
        X = gauss_data(9, 18, 2)
        res = inf.test_bonferroni(request(X, 2, rule=SelectionRule.fixed([(0, 1)])))
        pair = inf.test_pairwise_known(request(X, 2), 0, 1)
        assert res.p_value == pair.p_value

    def test_bonferroni_rejects_data_dependent_rules(self):
        X = gauss_data(0, 16, 2)
        with pytest.raises(ValueError):
            inf.test_bonferroni(request(X, 3, rule=SelectionRule.top_g(1)))


class TestPlugIn:
    def test_plug_in_equals_known_at_the_estimate(self):
        X = gauss_data(11, 30, 3)
        res = inf.test_known_sigma(request(X, 2, variance=inf.VarianceSpec.plug_in_sample()))
        est = res.diagnostics["sigma_estimate"]
        assert est == pytest.approx(inf.sigma_hat_sample(X), rel=1e-14)
        assert res.diagnostics["asymptotic_only"] is True
        fixed = inf.test_known_sigma(request(X, 2, variance=inf.VarianceSpec.known(est)))
        assert res.p_value == fixed.p_value
        assert res.statistic == fixed.statistic

    def test_median_plug_in_diagnostics(self):
        X = gauss_data(12, 30, 3)
        res = inf.test_known_sigma(request(X, 2, variance=inf.VarianceSpec.plug_in_median()))
        assert res.diagnostics["variance"] == "plug_in_median"
        assert res.diagnostics["sigma_estimate"] == pytest.approx(
            inf.sigma_hat_med(X), rel=1e-14
        )


class TestUnknownSigma:
    def test_dfs_for_two_clusters(self):
        X = gauss_data(0, 30, 5)
        res = inf.test_unknown_sigma(request(X, 2, variance=inf.VarianceSpec.unknown()))
        assert res.method is Method.UNKNOWN_SIGMA
        assert (res.df_num, res.df_den) == (5, 140)
        assert interval_contains(res.truncation, res.statistic, tol=1e-9)
        assert 0.0 <= res.p_value <= 1.0

    def test_pvalue_matches_direct_survival(self):
        X = gauss_data(1, 24, 3)
        res = inf.test_unknown_sigma(request(X, 2, variance=inf.VarianceSpec.unknown()))
        spec = TruncatedDistSpec.fisher_f(res.df_num, res.df_den, res.truncation)
        assert res.p_value == pytest.approx(
            truncated_survival(res.statistic, spec), abs=1e-15
        )

    def test_separated_clusters_reject(self):
        mu = blocked_means(40, 3, [(0.0, 0.0, 0.0), (10.0, 0.0, 0.0)])
        X = gauss_data(2, 40, 3, mu=mu)
        res = inf.test_unknown_sigma(request(X, 2, variance=inf.VarianceSpec.unknown()))
        assert res.p_value < 1e-4

    def test_requires_unknown_kind(self):
        X = gauss_data(0, 15, 2)
        with pytest.raises(ValueError):
            inf.test_unknown_sigma(request(X, 2))


class TestSelectionAccounting:
    def test_methods_tagged_and_sets_nest(self):
        done = 0
        for seed in range(25):
            X = gauss_data(seed, 24, 2)
            rule = SelectionRule.top_g(1)
            plain = inf.test_known_sigma(request(X, 4, rule=rule, seed=seed))
            acct = inf.test_known_sigma(request(X, 4, rule=rule, account=True, seed=seed))
            if plain.degenerate or acct.degenerate:
                continue
            assert plain.method is Method.KNOWN_SIGMA
            assert acct.method is Method.KNOWN_SIGMA_SELECTED
            assert acct.statistic == plain.statistic
            # extra conditioning can only shrink the set
            assert acct.truncation.measure() <= plain.truncation.measure() + 1e-9
            assert interval_contains(acct.truncation, acct.statistic, tol=1e-9)
            done += 1
        assert done >= 10

    def test_unknown_selected_method(self):
        for seed in range(12):
            X = gauss_data(100 + seed, 24, 2)
            res = inf.test_unknown_sigma(
                request(
                    X,
                    3,
                    rule=SelectionRule.bottom_g(1),
                    variance=inf.VarianceSpec.unknown(),
                    account=True,
                    seed=seed,
                )
            )
            if res.degenerate:
                continue
            assert res.method is Method.UNKNOWN_SIGMA_SELECTED
            assert 0.0 <= res.p_value <= 1.0
            return
        pytest.fail("every seed degenerated")
