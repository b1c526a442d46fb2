import numpy as np
import pytest

from dcrkit.cohort import Cohort, EventRecord, Subject, TimeSeries
from dcrkit.errors import TrainingError, ValidationError
from dcrkit.models.finegray import FineGrayFit, fit_finegray, predict_finegray
from dcrkit.models.store import load_model, save_model


def static_cohort(x, times, events, k=1):
    """One-step series holding static covariates; residual duration = time."""
    x = np.atleast_2d(np.asarray(x, float).T).T
    subjects = []
    for xi, t, e in zip(x, times, events):
        series = TimeSeries(
            features=xi[None, :],
            timestamps=np.array([0.0]),
            static_mask=np.ones(xi.size, bool),
            missing_mask=np.ones((1, xi.size), bool),
        )
        subjects.append(Subject(series, EventRecord(int(e), float(t))))
    return Cohort(
        subjects=tuple(subjects), k=k,
        feature_names=tuple(f"x{j}" for j in range(x.shape[1])),
        risk_names=tuple(f"risk{j}" for j in range(1, k + 1)),
    )


def simulate_finegray(n, beta1, q=0.6, beta2=0.5, censor_rate=None, seed=0):
    """The classic subdistribution generator: event 1 has
    P(T<=s, K=1 | x) = 1 - (1 - q (1 - e^-s))^exp(beta1 x), so its
    subdistribution hazard is proportional with coefficient beta1."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    rel = np.exp(beta1 * x)
    p1 = 1.0 - (1.0 - q) ** rel
    is1 = rng.random(n) < p1
    u = rng.random(n)
    inner = (1.0 - u * p1) ** (1.0 / rel)
    t1 = -np.log(1.0 - (1.0 - inner) / q)
    t2 = rng.exponential(1.0 / np.exp(beta2 * x))
    t = np.where(is1, t1, t2)
    k = np.where(is1, 1, 2)
    if censor_rate:
        c = rng.exponential(1.0 / censor_rate, n)
        k = np.where(c < t, 0, k)
        t = np.minimum(t, c)
    return x, t, k


def km_left(times, events, query):
    """Left-continuous product-limit of the censoring distribution."""
    g = 1.0
    for ct in sorted(set(times[events == 0])):
        if ct >= query:
            break
        d = int(np.sum((times == ct) & (events == 0)))
        n_at = int(np.sum(times >= ct))
        g *= 1.0 - d / n_at
    return g


def fg_score_bruteforce(x, times, events, j, beta, mean):
    """Weighted partial-likelihood score by explicit risk-set enumeration."""
    x = np.atleast_2d(np.asarray(x, float).T).T - mean
    score = np.zeros(x.shape[1])
    for i in np.flatnonzero(events == j):
        num = np.zeros(x.shape[1])
        den = 0.0
        for l in range(len(times)):
            if times[l] >= times[i]:
                w = 1.0
            elif events[l] not in (0, j):
                w = km_left(times, events, times[i]) / km_left(times, events, times[l])
            else:
                continue
            e = w * np.exp(beta @ x[l])
            den += e
            num += e * x[l]
        score += x[i] - num / den
    return score


class TestFit:
    def test_pure_noise_coefficient_near_zero(self):
        rng = np.random.default_rng(11)
        n = 2000
        x = rng.standard_normal(n)
        t = rng.exponential(10.0, n)
        events = rng.integers(1, 3, n)
        cohort = static_cohort(x, t, events, k=2)
        fit = fit_finegray(cohort)
        assert abs(fit.coefficients[0, 0]) < 0.08
        assert abs(fit.coefficients[1, 0]) < 0.08

    def test_recovers_subdistribution_coefficient(self):
        x, t, k = simulate_finegray(5000, beta1=0.7, censor_rate=0.25, seed=5)
        assert 0.1 < np.mean(k == 0) < 0.3  # roughly 20% censored
        cohort = static_cohort(x, t, k, k=2)
        fit = fit_finegray(cohort)
        assert abs(fit.coefficients[0, 0] - 0.7) < 0.1

    def test_score_at_optimum_by_bruteforce(self):
        x, t, k = simulate_finegray(120, beta1=0.6, censor_rate=0.3, seed=9)
        cohort = static_cohort(x, t, k, k=2)
        fit = fit_finegray(cohort)
        for j in (1, 2):
            score = fg_score_bruteforce(x, t, k, j, fit.coefficients[j - 1], fit.feature_mean)
            assert np.abs(score).max() < 1e-6

    def test_antisymmetric_null_matches_nelson_aalen(self):
        # paired +/-x with shared times puts the optimum exactly at 0, so
        # the baseline reduces to the d/n increments of the at-risk scan
        rng = np.random.default_rng(3)
        half = 40
        xs = rng.standard_normal(half)
        ts = rng.exponential(5.0, half)
        x = np.concatenate([xs, -xs])
        t = np.concatenate([ts, ts])
        events = np.ones(2 * half, dtype=int)
        cohort = static_cohort(x, t, events, k=1)
        fit = fit_finegray(cohort)
        assert abs(fit.coefficients[0, 0]) < 1e-12
        na = 0.0
        increments = {}
        for s in sorted(set(t)):
            d = int(np.sum(t == s))
            n_at = int(np.sum(t >= s))
            na += d / n_at
            increments[s] = na
        base = fit.baselines[0]
        for s, expected in increments.items():
            assert abs(base.at(s) - expected) < 1e-12
        # null model: identical prediction for every subject, equal to the
        # cumulative-hazard transform of the Nelson-Aalen estimate
        deltas = np.array(sorted(set(t)))
        cifs = [
            predict_finegray(fit, subj.series, 0.0, deltas).values
            for subj in cohort.subjects[:5]
        ]
        expected = 1.0 - np.exp(-np.array([increments[s] for s in deltas]))
        for c in cifs:
            np.testing.assert_allclose(c[0], expected, atol=1e-12)
            np.testing.assert_array_equal(c, cifs[0])

    def test_rank_deficiency_names_columns(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((50, 2))
        x = np.column_stack([x[:, 0], x[:, 0] * 2.0, x[:, 1]])
        cohort = static_cohort(x, rng.exponential(5, 50), np.ones(50, int), k=1)
        with pytest.raises(ValidationError, match="x1"):
            fit_finegray(cohort)

    def test_missing_event_rejected(self):
        rng = np.random.default_rng(5)
        cohort = static_cohort(
            rng.standard_normal(30), rng.exponential(5, 30), np.ones(30, int), k=2
        )
        with pytest.raises(TrainingError, match="event 2"):
            fit_finegray(cohort)


class TestPredict:
    @pytest.fixture(scope="class")
    def fit_and_cohort(self):
        x, t, k = simulate_finegray(400, beta1=0.5, censor_rate=0.2, seed=21)
        cohort = static_cohort(x, t, k, k=2)
        return fit_finegray(cohort), cohort

    def test_delta_zero_is_zero(self, fit_and_cohort):
        fit, cohort = fit_and_cohort
        cif = predict_finegray(fit, cohort.subjects[0].series, 0.0, np.array([0.0, 1.0]))
        assert np.all(cif.values[:, 0] == 0.0)

    def test_monotone_over_horizons(self, fit_and_cohort):
        fit, cohort = fit_and_cohort
        deltas = np.array([24.0, 48.0, 72.0])
        for subject in cohort.subjects[:100]:
            cif = predict_finegray(fit, subject.series, 0.0, deltas)
            assert np.all(np.diff(cif.values, axis=1) >= 0)
            assert np.all(cif.values >= 0) and np.all(cif.values <= 1)

    def test_translation_invariance(self):
        x, t, k = simulate_finegray(300, beta1=0.4, censor_rate=0.2, seed=8)
        base = fit_finegray(static_cohort(x, t, k, k=2))
        shifted = fit_finegray(static_cohort(x + 13.5, t, k, k=2))
        deltas = np.array([1.0, 3.0, 9.0])
        series = static_cohort(x, t, k, k=2).subjects[0].series
        series_shifted = static_cohort(x + 13.5, t, k, k=2).subjects[0].series
        np.testing.assert_allclose(
            predict_finegray(base, series, 0.0, deltas).values,
            predict_finegray(shifted, series_shifted, 0.0, deltas).values,
            atol=1e-8,
        )

    def test_uses_last_row_at_or_before_t(self):
        feats = np.array([[1.0], [5.0]])
        series = TimeSeries(
            features=feats, timestamps=np.array([0.0, 2.0]),
            static_mask=np.zeros(1, bool), missing_mask=np.ones((2, 1), bool),
        )
        x, t, k = simulate_finegray(200, beta1=0.8, seed=2)
        fit = fit_finegray(static_cohort(x, t, k, k=2))
        early = predict_finegray(fit, series, 1.0, np.array([2.0])).values
        late = predict_finegray(fit, series, 2.0, np.array([2.0])).values
        assert not np.allclose(early, late)

    def test_no_step_before_t_rejected(self):
        x, t, k = simulate_finegray(200, beta1=0.8, seed=2)
        fit = fit_finegray(static_cohort(x, t, k, k=2))
        series = static_cohort(x, t, k, k=2).subjects[0].series
        with pytest.raises(ValidationError):
            predict_finegray(fit, series, -0.1, np.array([1.0]))

    def test_fit_has_no_tuning_inputs(self):
        import inspect

        params = inspect.signature(fit_finegray).parameters
        assert list(params) == ["cohort"]


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        x, t, k = simulate_finegray(150, beta1=0.3, censor_rate=0.2, seed=31)
        cohort = static_cohort(x, t, k, k=2)
        fit = fit_finegray(cohort)
        path = tmp_path / "fg.bin"
        save_model(fit, path)
        loaded = load_model(path)
        assert isinstance(loaded, FineGrayFit)
        np.testing.assert_array_equal(loaded.coefficients, fit.coefficients)
        series = cohort.subjects[0].series
        np.testing.assert_array_equal(
            fit.predict_cif(series, 0.0).values,
            loaded.predict_cif(series, 0.0).values,
        )
