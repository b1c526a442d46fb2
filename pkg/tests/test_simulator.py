import numpy as np
import pytest
from scipy import stats

from dcrkit.cohort import cohort_to_text
from dcrkit.errors import ValidationError
from dcrkit.simulator import (
    GenerativeConfig,
    event_rates,
    simulate,
    simulate_subject,
    true_cif,
)
from helpers import informative_config, noninformative_config


def symmetric_config(censor_rate=1e-9, lam=0.01, seed=0):
    zero = tuple(np.zeros(3) for _ in range(3))
    return GenerativeConfig(
        k=3, d_dynamic=2, d_static=1, length_min=2, length_max=6, step_hours=1.0,
        hazard_rates=(lam, lam, lam), hazard_betas=zero,
        censor_rate=censor_rate, seed=seed,
    )


class TestSimulate:
    def test_huge_censor_rate_censors_everyone(self):
        cfg = GenerativeConfig(
            **{**symmetric_config().__dict__, "censor_rate": 1e6, "seed": 5}
        )
        cohort = simulate(cfg, 1000)
        assert np.mean(cohort.events() == 0) >= 0.99

    def test_symmetric_rates_equal_frequencies(self):
        cohort = simulate(symmetric_config(seed=11), 10000)
        freqs = [np.mean(cohort.events() == j) for j in (1, 2, 3)]
        for f in freqs:
            assert abs(f - 1 / 3) < 0.03

    def test_seed_determinism_byte_identical(self):
        cfg = informative_config(seed=21)
        a = cohort_to_text(simulate(cfg, 40))
        b = cohort_to_text(simulate(cfg, 40))
        assert a == b

    def test_subject_draws_order_independent(self):
        cfg = informative_config(seed=4)
        direct = simulate_subject(cfg, 17)
        cohort = simulate(cfg, 20)
        assert cohort_to_text_subject(direct) == cohort_to_text_subject(cohort.subjects[17])

    def test_event_time_after_last_step(self):
        cohort = simulate(informative_config(seed=3), 200)
        for s in cohort.subjects:
            assert s.outcome.time >= s.series.timestamps[-1]

    def test_rejects_bad_n(self):
        with pytest.raises(ValidationError):
            simulate(symmetric_config(), 0)


def cohort_to_text_subject(subject):
    return (
        subject.series.features.tobytes(),
        subject.series.timestamps.tobytes(),
        subject.outcome,
    )


class TestTrueCif:
    def test_four_way_symmetric_limit(self):
        cfg = symmetric_config(censor_rate=0.01)
        cohort = simulate(cfg, 1)
        series = cohort.subjects[0].series
        cif = true_cif(cfg, series, series.timestamps[-1], np.array([1e9]))
        np.testing.assert_allclose(cif.values[:, -1], 0.25, atol=1e-12)

    def test_single_risk_reduces_to_survival(self):
        cfg = GenerativeConfig(
            k=1, d_dynamic=1, d_static=0, length_min=2, length_max=4, step_hours=1.0,
            hazard_rates=(0.05,), hazard_betas=(np.array([0.3]),),
            censor_rate=1e-12, seed=2,
        )
        series = simulate(cfg, 1).subjects[0].series
        deltas = np.array([5.0, 20.0, 80.0])
        cif = true_cif(cfg, series, series.timestamps[-1], deltas)
        r = event_rates(cfg, series)[0]
        np.testing.assert_allclose(cif.values[0], 1 - np.exp(-r * deltas), rtol=1e-9)

    def test_monte_carlo_oracle(self):
        # frequency of (K=j, duration <= 24) from 10^6 latent draws
        cfg = informative_config(seed=13, censor_rate=0.004)
        series = simulate(cfg, 3).subjects[1].series
        rates = event_rates(cfg, series)
        rng = np.random.default_rng(99)
        n = 1_000_000
        draws = np.column_stack(
            [rng.exponential(1.0 / cfg.censor_rate, n)]
            + [rng.exponential(1.0 / r, n) for r in rates]
        )
        winner = draws.argmin(axis=1)
        dur = draws.min(axis=1)
        cif = true_cif(cfg, series, series.timestamps[-1], np.array([24.0]))
        for j in (1, 2, 3):
            p_hat = np.mean((winner == j) & (dur <= 24.0))
            se = np.sqrt(p_hat * (1 - p_hat) / n)
            assert abs(cif.values[j - 1, 0] - p_hat) < 3 * se + 1e-12

    def test_memorylessness_in_t(self):
        cfg = informative_config(seed=8)
        series = simulate(cfg, 1).subjects[0].series
        deltas = np.array([12.0, 24.0, 48.0])
        a = true_cif(cfg, series, 12.0, deltas).values
        b = true_cif(cfg, series, 6.0 + series.timestamps[-1], deltas).values
        np.testing.assert_array_equal(a, b)

    def test_total_mass_identity(self):
        cfg = informative_config(seed=15)
        series = simulate(cfg, 1).subjects[0].series
        cif = true_cif(cfg, series, series.timestamps[-1], np.array([1e12]))
        rates = event_rates(cfg, series)
        censor_mass = cfg.censor_rate / (rates.sum() + cfg.censor_rate)
        assert abs(cif.values[:, -1].sum() + censor_mass - 1.0) < 1e-12

    def test_monotone_and_zero_at_origin(self):
        cfg = informative_config(seed=16)
        series = simulate(cfg, 1).subjects[0].series
        deltas = np.array([0.0, 1.0, 5.0, 25.0, 125.0])
        cif = true_cif(cfg, series, series.timestamps[-1], deltas)
        assert np.all(cif.values[:, 0] == 0.0)
        assert np.all(np.diff(cif.values, axis=1) >= 0)

    def test_t_before_series_end_rejected(self):
        cfg = informative_config(seed=17)
        series = simulate(cfg, 1).subjects[0].series
        if series.timestamps[-1] > 0:
            with pytest.raises(ValidationError):
                true_cif(cfg, series, 0.0, np.array([1.0]))

    def test_event_time_histogram_matches_subdensity(self):
        # feature-independent rates: residual durations are iid Exp(R + c)
        cfg = noninformative_config(seed=23)
        cohort = simulate(cfg, 100_000)
        residuals = np.array([s.residual_duration for s in cohort.subjects])
        total = sum(cfg.hazard_rates) + cfg.censor_rate
        ks = stats.kstest(residuals, lambda x: 1 - np.exp(-total * x))
        assert ks.statistic < 0.02
