import numpy as np
import pytest

from dcrkit.cohort import (
    Cohort,
    EventRecord,
    Subject,
    TimeSeries,
    cohort_from_text,
    cohort_to_text,
    ingest_stream,
    read_raw_stream,
    relabel_for_ablation,
    stratified_split,
    truncate_at,
)
from dcrkit.errors import ValidationError
from helpers import ingest_reference, make_cohort, make_series


class TestTimeSeries:
    def test_rejects_unsorted_timestamps(self):
        with pytest.raises(ValidationError):
            TimeSeries(
                features=np.zeros((2, 1)),
                timestamps=np.array([0.0, 0.0]),
                static_mask=np.zeros(1, bool),
                missing_mask=np.ones((2, 1), bool),
            )

    def test_rejects_nonzero_start(self):
        with pytest.raises(ValidationError):
            TimeSeries(
                features=np.zeros((1, 1)),
                timestamps=np.array([1.0]),
                static_mask=np.zeros(1, bool),
                missing_mask=np.ones((1, 1), bool),
            )

    def test_rejects_varying_static_column(self):
        with pytest.raises(ValidationError, match="static column"):
            TimeSeries(
                features=np.array([[1.0], [2.0]]),
                timestamps=np.array([0.0, 1.0]),
                static_mask=np.ones(1, bool),
                missing_mask=np.ones((2, 1), bool),
            )

    def test_masked_cells_zeroed(self):
        mask = np.array([[True, False], [True, True]])
        ts = TimeSeries(
            features=np.array([[1.0, 9.0], [2.0, 3.0]]),
            timestamps=np.array([0.0, 1.0]),
            static_mask=np.zeros(2, bool),
            missing_mask=mask,
        )
        assert ts.features[0, 1] == 0.0

    def test_truncated_prefix(self):
        ts = make_series(L=12)
        assert ts.truncated(6.0).n_steps == 7
        assert ts.truncated(6.5).n_steps == 7
        with pytest.raises(ValidationError):
            ts.truncated(-1.0)

    def test_event_before_last_step_rejected(self):
        with pytest.raises(ValidationError):
            Subject(make_series(L=5), EventRecord(1, 2.0))


class TestIngest:
    def test_constant_stream_is_fixed_point(self):
        raw = np.full((7200, 1), 5.0)
        ts = ingest_stream(raw)
        assert ts.n_steps == 2
        assert ts.width == 6
        assert np.all(ts.features == 5.0)

    def test_ramp_hour_statistics(self):
        # minute-means of the 0..3599 second ramp are 60*i + 29.5
        raw = np.arange(3600.0)[:, None]
        ts = ingest_stream(raw)
        assert ts.n_steps == 1
        expected = [29.5, 3569.5, 1799.5, 914.5, 1799.5, 2684.5]
        np.testing.assert_allclose(ts.features[0], expected, rtol=0, atol=1e-12)

    def test_matches_bruteforce_reference(self):
        rng = np.random.default_rng(3)
        raw = rng.standard_normal((3600 * 2 + 750, 3))  # trailing partial hour
        ts = ingest_stream(raw)
        ref = ingest_reference(raw)
        assert ts.features.shape == ref.shape
        np.testing.assert_allclose(ts.features, ref, rtol=0, atol=1e-12)

    def test_twelve_features_give_72_columns(self):
        rng = np.random.default_rng(0)
        raw = rng.standard_normal((12 * 3600, 12))
        ts = ingest_stream(raw)
        assert ts.n_steps == 12
        assert ts.width == 72

    def test_partial_trailing_minute_dropped(self):
        raw = np.ones((60 + 59, 1))  # one full minute only
        ts = ingest_stream(raw)
        assert ts.n_steps == 1

    def test_too_short_rejected(self):
        with pytest.raises(ValidationError, match="too short"):
            ingest_stream(np.ones((59, 1)))

    def test_permutation_equivariant_across_features(self):
        rng = np.random.default_rng(5)
        raw = rng.standard_normal((3700, 3))
        perm = [2, 0, 1]
        a = ingest_stream(raw[:, perm]).features
        b = ingest_stream(raw).features
        cols = np.concatenate([np.arange(p * 6, p * 6 + 6) for p in perm])
        np.testing.assert_array_equal(a, b[:, cols])


class TestRelabel:
    def test_dropped_event_becomes_censored(self):
        c = make_cohort([(3, 40.0), (1, 10.0)], k=3)
        out = relabel_for_ablation(c, {1, 2})
        assert out.subjects[0].outcome.event == 0
        assert out.subjects[0].outcome.time == 40.0
        assert out.k == 2

    def test_identity_when_keeping_all(self):
        c = make_cohort([(1, 10.0), (2, 20.0), (3, 30.0)], k=3)
        out = relabel_for_ablation(c, {1, 2, 3})
        assert out.events().tolist() == c.events().tolist()
        assert out.k == 3

    def test_counts_preserved_on_simulated_cohort(self):
        spec = [(int(e), 10.0 + i) for i, e in enumerate(np.random.default_rng(0).integers(0, 4, 50))]
        c = make_cohort(spec, k=3)
        out = relabel_for_ablation(c, {1})
        n1 = sum(1 for e in c.events() if e == 1)
        assert sum(1 for e in out.events() if e == 1) == n1
        assert sum(1 for e in out.events() if e == 0) == len(c) - n1
        assert len(out) == len(c)
        assert np.array_equal(out.times(), c.times())

    def test_renumbering_is_contiguous(self):
        c = make_cohort([(3, 40.0), (2, 20.0)], k=3)
        out = relabel_for_ablation(c, {2, 3})
        assert out.events().tolist() == [2, 1]
        assert out.risk_names == ("risk2", "risk3")

    def test_empty_keep_rejected(self):
        c = make_cohort([(1, 10.0)], k=3)
        with pytest.raises(ValidationError):
            relabel_for_ablation(c, set())


class TestTruncate:
    def test_not_at_risk_excluded(self):
        c = make_cohort([(1, 5.0)], k=3)
        assert len(truncate_at(c, 6.0)) == 0

    def test_steps_clipped(self):
        series = make_series(L=12)
        c = Cohort(
            subjects=(Subject(series, EventRecord(1, 50.0)),),
            k=1, feature_names=("a", "b"), risk_names=("r",),
        )
        out = truncate_at(c, 6.0)
        assert out.subjects[0].series.n_steps == 7

    def test_retained_count_matches_bruteforce(self):
        rng = np.random.default_rng(1)
        spec = [(int(rng.integers(0, 4)), float(rng.uniform(0, 40))) for _ in range(100)]
        spec = [(e, max(t, 3.01)) for e, t in spec]  # keep event after last step
        c = make_cohort(spec, k=3)
        out = truncate_at(c, 12.0)
        assert len(out) == sum(1 for s in c.subjects if s.outcome.time > 12.0)

    def test_composition(self):
        spec = [(1, 20.0), (2, 9.0), (0, 30.0), (3, 14.0)]
        c = make_cohort(spec, k=3)
        a = truncate_at(truncate_at(c, 4.0), 8.0)
        b = truncate_at(c, 8.0)
        assert cohort_to_text(a) == cohort_to_text(b)


class TestSerialization:
    def test_roundtrip_bit_identical(self):
        rng = np.random.default_rng(9)
        spec = [(int(rng.integers(0, 4)), float(rng.uniform(6, 50))) for _ in range(20)]
        c = make_cohort(spec, k=3)
        text = cohort_to_text(c)
        again = cohort_to_text(cohort_from_text(text))
        assert text == again

    def test_roundtrip_preserves_arrays_exactly(self):
        c = make_cohort([(1, 11.0), (0, 22.0)], k=3)
        back = cohort_from_text(cohort_to_text(c))
        for s0, s1 in zip(c.subjects, back.subjects):
            np.testing.assert_array_equal(s0.series.features, s1.series.features)
            np.testing.assert_array_equal(s0.series.timestamps, s1.series.timestamps)
            assert s0.outcome == s1.outcome

    def test_bad_header_rejected(self):
        with pytest.raises(ValidationError):
            cohort_from_text("not json\n")

    def test_raw_stream_header_mismatch(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("2 3\n1 2\n3 4\n")
        with pytest.raises(ValidationError, match="header"):
            read_raw_stream(p)


class TestStratifiedSplit:
    def test_event_frequencies_within_one(self):
        rng = np.random.default_rng(2)
        spec = [(int(rng.integers(0, 4)), float(rng.uniform(6, 60))) for _ in range(97)]
        c = make_cohort(spec, k=3)
        rest, held = stratified_split(c, 0.2, np.random.default_rng(0))
        assert len(rest) + len(held) == len(c)
        for e in range(4):
            total = int(np.sum(c.events() == e))
            got = int(np.sum(held.events() == e))
            assert abs(got - 0.2 * total) <= 1
