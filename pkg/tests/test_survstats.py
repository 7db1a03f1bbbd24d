"""Survival statistics against pair-enumeration oracles, an independent
partial-likelihood transcription, enumeration of rank assignments, and
statsmodels where it is installed."""

import math
from itertools import combinations

import numpy as np
import pytest

from liverprog.milsurv import SurvivalLabel
from liverprog.survstats import (
    EXACT_LIMIT,
    CohortTable,
    ConvergenceError,
    SingularModelError,
    Z_975,
    _efron_loglik,
    bootstrap_hr,
    concordance_index,
    coxph_fit,
    dichotomize_by_median,
    kaplan_meier,
    logrank_test,
    randomization_test,
    repeated_kfold,
    wilcoxon_rank_sum,
)


# ---------------------------------------------------------------- oracles


def oracle_concordance(times, events, risks):
    """Every ordered pair, spelled out."""
    num, den = 0.0, 0
    n = len(times)
    for i in range(n):
        if not events[i]:
            continue
        for j in range(n):
            if i == j:
                continue
            permissible = times[i] < times[j] or (
                times[i] == times[j] and not events[j]
            )
            if not permissible:
                continue
            den += 1
            if risks[i] > risks[j]:
                num += 1.0
            elif risks[i] == risks[j]:
                num += 0.5
    if den == 0:
        raise ValueError("no pairs")
    return num / den


def oracle_efron_ll(beta, x, times, events):
    """Straight transcription: per event time, the Efron denominators."""
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    eta = x @ beta
    ll = 0.0
    for u in np.unique(times[events]):
        dead = np.flatnonzero((times == u) & events)
        at_risk = times >= u
        m = dead.size
        ll += float(eta[dead].sum())
        sum_risk = float(np.exp(eta[at_risk]).sum())
        sum_dead = float(np.exp(eta[dead]).sum())
        for l in range(m):
            ll -= math.log(sum_risk - l / m * sum_dead)
    return ll


def _cohort(rng, n=80, beta=(0.8, -0.5, 0.0), censoring=0.25, tie_times=False):
    cov = {f"f{i}": rng.normal(size=n) for i in range(len(beta))}
    eta = sum(b * cov[f"f{i}"] for i, b in enumerate(beta))
    t = rng.exponential(1.0 / (0.08 * np.exp(eta)))
    c = rng.uniform(0, float(np.quantile(t, 1 - censoring)) * 2, size=n)
    times = np.minimum(t, c)
    events = t <= c
    if tie_times:
        times = np.ceil(times * 4) / 4.0
    times = np.maximum(times, 1e-3)
    if not events.any():
        events[0] = True
    return CohortTable(tuple(f"p{i}" for i in range(n)), times, events, cov)


# --------------------------------------------------------------- C-index


class TestConcordance:
    def test_matches_pair_enumeration_with_ties(self, rng):
        for _ in range(50):
            n = int(rng.integers(4, 30))
            times = rng.integers(1, 8, size=n).astype(np.float64)
            events = rng.random(n) < 0.7
            risks = np.round(rng.normal(size=n), 1)  # frequent risk ties
            events[int(rng.integers(n))] = True
            try:
                want = oracle_concordance(times, events, risks)
            except ValueError:
                continue
            assert concordance_index(times, events, risks) == want

    def test_reversal_identity(self, rng):
        for _ in range(20):
            n = 25
            times = rng.uniform(1, 50, size=n)
            events = rng.random(n) < 0.6
            events[0] = True
            risks = rng.normal(size=n)  # continuous: no ties
            c = concordance_index(times, events, risks)
            assert concordance_index(times, events, -risks) == pytest.approx(
                1.0 - c, abs=1e-12
            )

    def test_perfect_and_inverted(self):
        times = [1.0, 2.0, 3.0, 4.0]
        events = [True] * 4
        assert concordance_index(times, events, [4.0, 3.0, 2.0, 1.0]) == 1.0
        assert concordance_index(times, events, [1.0, 2.0, 3.0, 4.0]) == 0.0
        assert concordance_index(times, events, [0.0, 0.0, 0.0, 0.0]) == 0.5

    def test_censored_tied_with_event_is_permissible(self):
        # the censored patient outlived the event at the same recorded time
        c = concordance_index([5.0, 5.0], [True, False], [2.0, 1.0])
        assert c == 1.0

    def test_no_permissible_pairs(self):
        with pytest.raises(ValueError):
            concordance_index([1.0, 2.0], [False, False], [0.5, 0.2])
        with pytest.raises(ValueError):
            concordance_index([3.0, 3.0], [True, True], [0.5, 0.2])


# ------------------------------------------------------------------- Cox


class TestEfronLikelihood:
    def test_value_matches_transcription(self, rng):
        table = _cohort(rng, n=40, tie_times=True)
        x = np.column_stack(
            [
                (v - v.mean()) / v.std()
                for v in (table.covariates[k] for k in sorted(table.covariates))
            ]
        )
        events = np.asarray(table.events, dtype=bool)
        for _ in range(5):
            beta = rng.normal(size=x.shape[1])
            ll, _, _ = _efron_loglik(beta, x, table.times, events)
            assert ll == pytest.approx(
                oracle_efron_ll(beta, x, table.times, events), abs=1e-9
            )

    def test_gradient_and_hessian_match_differences(self, rng):
        table = _cohort(rng, n=30, beta=(0.6,), tie_times=True)
        x = table.covariates["f0"]
        x = ((x - x.mean()) / x.std()).reshape(-1, 1)
        events = np.asarray(table.events, dtype=bool)
        for beta0 in (-0.5, 0.0, 0.8):
            beta = np.array([beta0])
            _, grad, hess = _efron_loglik(beta, x, table.times, events)
            h = 1e-6
            up = oracle_efron_ll(beta + h, x, table.times, events)
            down = oracle_efron_ll(beta - h, x, table.times, events)
            assert grad[0] == pytest.approx((up - down) / (2 * h), abs=1e-4)
            # wider step for the second difference: h^2 amplifies roundoff
            h = 1e-4
            up = oracle_efron_ll(beta + h, x, table.times, events)
            down = oracle_efron_ll(beta - h, x, table.times, events)
            mid = oracle_efron_ll(beta, x, table.times, events)
            assert hess[0, 0] == pytest.approx(
                (up - 2 * mid + down) / h**2, rel=1e-4, abs=1e-4
            )

    def test_shift_stability_at_large_coefficients(self, rng):
        table = _cohort(rng, n=20, beta=(0.5,))
        x = table.covariates["f0"].reshape(-1, 1)
        events = np.asarray(table.events, dtype=bool)
        ll, grad, _ = _efron_loglik(np.array([50.0]), x, table.times, events)
        assert np.isfinite(ll) and np.isfinite(grad[0])


class TestCoxFit:
    def test_fit_maximizes_likelihood_on_grid(self, rng):
        table = _cohort(rng, n=60, beta=(0.9,), tie_times=True)
        report = coxph_fit(table, ["f0"])
        beta_hat = report.covariates[0].coefficient
        col = table.covariates["f0"]
        x = ((col - col.mean()) / col.std()).reshape(-1, 1)
        events = np.asarray(table.events, dtype=bool)
        best = oracle_efron_ll(np.array([beta_hat]), x, table.times, events)
        assert best == pytest.approx(report.log_likelihood, abs=1e-9)
        for b in np.linspace(beta_hat - 0.5, beta_hat + 0.5, 101):
            assert best >= oracle_efron_ll(np.array([b]), x, table.times, events) - 1e-9

    def test_final_gradient_vanishes(self, rng):
        table = _cohort(rng, n=70, beta=(0.7, -0.4), tie_times=True)
        report = coxph_fit(table, ["f0", "f1"])
        beta = np.array([c.coefficient for c in report.covariates])
        x = np.column_stack(
            [
                (table.covariates[k] - table.covariates[k].mean())
                / table.covariates[k].std()
                for k in ("f0", "f1")
            ]
        )
        _, grad, _ = _efron_loglik(
            beta, x, table.times, np.asarray(table.events, dtype=bool)
        )
        assert float(np.abs(grad).max()) < 1e-6

    def test_matches_statsmodels_efron(self, rng):
        sm = pytest.importorskip("statsmodels.duration.hazard_regression")
        table = _cohort(rng, n=90, beta=(0.8, -0.5, 0.0), tie_times=True)
        names = ["f0", "f1", "f2"]
        x = np.column_stack(
            [
                (table.covariates[k] - table.covariates[k].mean())
                / table.covariates[k].std()
                for k in names
            ]
        )
        res = sm.PHReg(
            table.times, x, status=table.events.astype(int), ties="efron"
        ).fit()
        report = coxph_fit(table, names)
        got = np.array([c.coefficient for c in report.covariates])
        np.testing.assert_allclose(got, res.params, atol=1e-5)
        np.testing.assert_allclose(
            [math.log(c.hazard_ratio) for c in report.covariates],
            res.params,
            atol=1e-5,
        )
        # same likelihood function: equal values at the fitted point
        assert report.log_likelihood == pytest.approx(
            float(res.model.loglike(got)), abs=1e-6
        )
        ses = np.sqrt(np.diag(res.cov_params()))
        for effect, se in zip(report.covariates, ses):
            assert effect.ci_low == pytest.approx(
                math.exp(effect.coefficient - Z_975 * se), rel=1e-3
            )
            assert effect.ci_high == pytest.approx(
                math.exp(effect.coefficient + Z_975 * se), rel=1e-3
            )

    def test_wald_columns_consistent(self, rng):
        table = _cohort(rng, n=80, beta=(1.0,))
        effect = coxph_fit(table, ["f0"]).covariates[0]
        assert effect.hazard_ratio == pytest.approx(math.exp(effect.coefficient))
        assert effect.ci_low < effect.hazard_ratio < effect.ci_high
        assert 0.0 <= effect.p_value <= 1.0
        assert effect.p_value < 0.01  # strong simulated effect

    def test_perfectly_separated_data_does_not_converge(self):
        times = np.arange(1.0, 11.0)
        table = CohortTable(
            ids=tuple(f"p{i}" for i in range(10)),
            times=times,
            events=np.ones(10, dtype=bool),
            covariates={"f0": -times},
        )
        with pytest.raises(ConvergenceError):
            coxph_fit(table, ["f0"])

    def test_constant_covariate_rejected(self, rng):
        table = _cohort(rng, n=20)
        bad = CohortTable(
            table.ids,
            table.times,
            table.events,
            {"f0": np.full(table.n, 3.0)},
        )
        with pytest.raises(SingularModelError):
            coxph_fit(bad, ["f0"])

    def test_duplicated_covariate_is_singular(self, rng):
        table = _cohort(rng, n=30, beta=(0.5,))
        dup = CohortTable(
            table.ids,
            table.times,
            table.events,
            {"f0": table.covariates["f0"], "twin": table.covariates["f0"].copy()},
        )
        with pytest.raises(SingularModelError):
            coxph_fit(dup, ["f0", "twin"])

    def test_no_events_rejected(self, rng):
        table = _cohort(rng, n=10)
        censored = CohortTable(
            table.ids,
            table.times,
            np.zeros(table.n, dtype=bool),
            table.covariates,
        )
        with pytest.raises(ValueError):
            coxph_fit(censored, ["f0"])

    def test_report_json(self, tmp_path, rng):
        table = _cohort(rng, n=40)
        report = coxph_fit(table, ["f0", "f1"])
        path = tmp_path / "fit.json"
        report.to_json(path)
        import json

        payload = json.loads(path.read_text())
        assert payload["c_index"] == report.c_index
        assert [c["name"] for c in payload["covariates"]] == ["f0", "f1"]


class TestBootstrap:
    def test_intervals_cover_point_estimate(self, rng):
        table = _cohort(rng, n=60, beta=(0.9,))
        report = coxph_fit(table, ["f0"])
        result = bootstrap_hr(table, ["f0"], n_boot=60, seed=5)
        lo, hi = result.intervals["f0"]
        assert lo < report.covariates[0].hazard_ratio < hi
        assert result.n_total == 60
        assert result.n_dropped <= 6
        again = bootstrap_hr(table, ["f0"], n_boot=60, seed=5)
        assert again.intervals == result.intervals

    def test_excess_failures_raise(self, rng, monkeypatch):
        table = _cohort(rng, n=30, beta=(0.5,))

        def boom(*args, **kwargs):
            raise ConvergenceError("forced")

        monkeypatch.setattr("liverprog.survstats.coxph_fit", boom)
        with pytest.raises(ConvergenceError):
            bootstrap_hr(table, ["f0"], n_boot=20, seed=0)


# --------------------------------------------------- curves and rank tests


class TestKaplanMeier:
    def test_hand_example(self):
        curve = kaplan_meier([1.0, 2.0, 2.0, 3.0, 4.0], [1, 1, 0, 1, 0])
        np.testing.assert_array_equal(curve.times, [0.0, 1.0, 2.0, 3.0])
        np.testing.assert_allclose(curve.survival, [1.0, 0.8, 0.6, 0.3])
        np.testing.assert_array_equal(curve.at_risk, [5, 5, 4, 2])

    def test_monotone_on_100_cohorts(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 40))
            times = rng.uniform(0.5, 30.0, size=n)
            events = rng.random(n) < 0.7
            curve = kaplan_meier(times, events)
            assert curve.times[0] == 0.0
            assert curve.survival[0] == 1.0
            assert np.all(np.diff(curve.survival) <= 1e-15)
            assert np.all(np.diff(curve.at_risk) <= 0)
            assert np.all(curve.survival >= -1e-15)

    def test_all_censored_is_flat(self):
        curve = kaplan_meier([1.0, 2.0], [False, False])
        np.testing.assert_array_equal(curve.times, [0.0])
        np.testing.assert_array_equal(curve.survival, [1.0])

    def test_json(self, tmp_path):
        import json

        curve = kaplan_meier([1.0, 2.0], [True, True])
        curve.to_json(tmp_path / "km.json")
        payload = json.loads((tmp_path / "km.json").read_text())
        assert payload["survival"] == [1.0, 0.5, 0.0]


def oracle_logrank(times, events, group):
    """Hypergeometric moments per event time, spelled out."""
    o_minus_e, var = 0.0, 0.0
    for u in sorted(set(t for t, e in zip(times, events) if e)):
        n = sum(1 for t in times if t >= u)
        n1 = sum(1 for t, g in zip(times, group) if t >= u and g)
        d = sum(1 for t, e in zip(times, events) if t == u and e)
        d1 = sum(
            1 for t, e, g in zip(times, events, group) if t == u and e and g
        )
        o_minus_e += d1 - d * n1 / n
        if n > 1:
            var += d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1)
    if var == 0:
        return 0.0, 1.0
    chi2 = o_minus_e**2 / var
    return chi2, math.erfc(math.sqrt(chi2 / 2.0))


class TestLogrank:
    def test_identical_groups_null(self, rng):
        times = rng.uniform(1, 20, size=15)
        events = rng.random(15) < 0.8
        events[0] = True
        both_t = np.concatenate([times, times])
        both_e = np.concatenate([events, events])
        group = np.array([False] * 15 + [True] * 15)
        chi2, p = logrank_test(both_t, both_e, group)
        assert chi2 == 0.0
        assert p == 1.0

    def test_matches_oracle_on_random_cohorts(self, rng):
        for _ in range(25):
            n = int(rng.integers(6, 40))
            times = rng.integers(1, 10, size=n).astype(np.float64)
            events = rng.random(n) < 0.7
            group = rng.random(n) < 0.5
            if group.all() or not group.any():
                continue
            if not events.any():
                events[0] = True
            want_chi2, want_p = oracle_logrank(times, events, group)
            chi2, p = logrank_test(times, events, group)
            assert chi2 == pytest.approx(want_chi2, abs=1e-12)
            assert p == pytest.approx(want_p, abs=1e-12)

    def test_separated_groups_significant(self):
        times = np.concatenate([np.arange(1.0, 11.0), np.arange(30.0, 40.0)])
        events = np.ones(20, dtype=bool)
        group = np.array([False] * 10 + [True] * 10)
        chi2, p = logrank_test(times, events, group)
        assert chi2 > 10.0
        assert p < 0.01

    def test_zero_variance_returns_null(self):
        chi2, p = logrank_test([5.0, 5.0], [True, True], [True, False])
        assert (chi2, p) == (0.0, 1.0)

    def test_one_group_empty_rejected(self):
        with pytest.raises(ValueError):
            logrank_test([1.0, 2.0], [True, True], [True, True])


class TestWilcoxon:
    def test_hand_example(self):
        w, p = wilcoxon_rank_sum([1.0, 2.0], [3.0, 4.0])
        assert w == 3.0
        assert p == pytest.approx(2.0 / 6.0)

    def test_identical_samples_p_one(self):
        _, p = wilcoxon_rank_sum([5.0, 5.0], [5.0, 5.0])
        assert p == 1.0

    def test_exact_matches_enumeration_up_to_ten(self, rng):
        for na in range(1, 10):
            nb = 10 - na
            a = rng.integers(0, 6, size=na).astype(np.float64)
            b = rng.integers(0, 6, size=nb).astype(np.float64)
            w, p = wilcoxon_rank_sum(a, b)

            pooled = np.concatenate([a, b])
            order = np.argsort(pooled, kind="stable")
            ranks = np.empty(10)
            i = 0
            srt = pooled[order]
            while i < 10:
                j = i
                while j < 10 and srt[j] == srt[i]:
                    j += 1
                ranks[order[i:j]] = (i + j + 1) / 2.0
                i = j
            mu = na * 11 / 2.0
            observed = abs(w - mu)
            hits = sum(
                1
                for chosen in combinations(range(10), na)
                if abs(ranks[list(chosen)].sum() - mu) >= observed - 1e-12
            )
            assert w == ranks[:na].sum()
            assert p == pytest.approx(hits / math.comb(10, na), abs=1e-15)

    def test_normal_branch_matches_scipy(self, rng):
        from scipy import stats

        a = rng.integers(0, 20, size=18).astype(np.float64)
        b = rng.integers(5, 25, size=14).astype(np.float64)
        assert a.size + b.size > EXACT_LIMIT
        w, p = wilcoxon_rank_sum(a, b)
        res = stats.mannwhitneyu(
            a, b, alternative="two-sided", method="asymptotic", use_continuity=True
        )
        # U of the first sample plus its minimum rank sum gives W
        assert w == pytest.approx(res.statistic + 18 * 19 / 2.0)
        assert p == pytest.approx(res.pvalue, abs=1e-12)

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            wilcoxon_rank_sum([], [1.0])


class TestRandomization:
    def test_add_one_estimator(self):
        labels = [SurvivalLabel(float(i + 1), True) for i in range(10)]
        original = list(labels)

        def exact_match(shuffled):
            return 1.0 if shuffled == original else 0.0

        result = randomization_test(exact_match, labels, n_shuffles=50, seed=1)
        assert result.observed == 1.0
        assert result.null_scores.shape == (50,)
        assert result.p_value == pytest.approx(1.0 / 51.0)

    def test_constant_score_gives_p_one(self):
        labels = [SurvivalLabel(1.0, True), SurvivalLabel(2.0, False)]
        result = randomization_test(lambda labs: 0.5, labels, n_shuffles=40, seed=0)
        assert result.p_value == 1.0

    def test_seeded_reproducibility(self):
        labels = [SurvivalLabel(float(i + 1), i % 2 == 0) for i in range(8)]

        def score(labs):
            return float(sum(l.time for l in labs[:3]))

        a = randomization_test(score, labels, n_shuffles=30, seed=7)
        b = randomization_test(score, labels, n_shuffles=30, seed=7)
        np.testing.assert_array_equal(a.null_scores, b.null_scores)


class TestKfold:
    def test_partition_properties(self):
        plans = repeated_kfold(20, k=3, repeats=5, seed=2)
        assert len(plans) == 5
        for folds in plans:
            assert len(folds) == 3
            sizes = [f.size for f in folds]
            assert max(sizes) - min(sizes) <= 1
            merged = np.sort(np.concatenate(folds))
            np.testing.assert_array_equal(merged, np.arange(20))

    def test_repeats_differ_and_seeds_reproduce(self):
        plans = repeated_kfold(15, k=3, repeats=4, seed=0)
        assert any(
            not np.array_equal(plans[0][f], plans[1][f]) for f in range(3)
        )
        again = repeated_kfold(15, k=3, repeats=4, seed=0)
        for folds_a, folds_b in zip(plans, again):
            for fa, fb in zip(folds_a, folds_b):
                np.testing.assert_array_equal(fa, fb)

    def test_too_few_patients(self):
        with pytest.raises(ValueError):
            repeated_kfold(2, k=3)


class TestDichotomize:
    def test_median_ties_are_low_risk(self):
        np.testing.assert_array_equal(
            dichotomize_by_median([1.0, 2.0, 3.0]), [False, False, True]
        )
        np.testing.assert_array_equal(
            dichotomize_by_median([1.0, 2.0, 2.0, 9.0]),
            [False, False, False, True],
        )
        assert not dichotomize_by_median([4.0, 4.0, 4.0]).any()


class TestCohortTable:
    def test_validation(self, rng):
        with pytest.raises(ValueError):
            CohortTable(
                ("a", "a"),
                np.array([1.0, 2.0]),
                np.array([True, False]),
                {},
            )
        with pytest.raises(ValueError):
            CohortTable(
                ("a", "b"),
                np.array([1.0, -2.0]),
                np.array([True, False]),
                {},
            )
        with pytest.raises(ValueError):
            CohortTable(
                ("a", "b"),
                np.array([1.0, 2.0]),
                np.array([True, False]),
                {"f": np.array([np.nan, 1.0])},
            )
        table = CohortTable(
            ("a", "b"),
            np.array([1.0, 2.0]),
            np.array([True, False]),
            {"f": np.array([0.0, 1.0])},
        )
        assert table.n == 2
