import numpy as np
import pytest

from dcrkit.cohort import EventRecord, Subject
from dcrkit.errors import CompatibilityError, TrainingError, ValidationError
from dcrkit.models import training
from dcrkit.models.base import PmfEstimate, TimeGrid, cif_from_pmf, default_grid
from dcrkit.models.deephit import DeepHitModel, forward, predict_cif, train_with_log
from dcrkit.models.neural import LossWeights, loss_total
from dcrkit.models.store import load_model, save_model
from dcrkit.simulator import simulate
from helpers import informative_config, make_series


def zero_params(model):
    for name in model.params.names():
        value = model.params[name]
        value[...] = 0.0


def small_model(k=3, m=10, d=2, hidden=4, dropout=0.0, seed=0, upper=10.0):
    grid = TimeGrid(np.linspace(upper / m, upper, m))
    return DeepHitModel(
        d=d, static_mask=np.zeros(d, bool), k=k, grid=grid,
        hidden=hidden, dropout=dropout, seed=seed,
    )


class TestForward:
    def test_normalization_across_lengths(self):
        model = small_model(seed=3)
        for L in range(1, 9):
            pmf = forward(model, make_series(L=L, d=2, seed=L))
            assert abs(pmf.values.sum() - 1.0) < 1e-6
            assert pmf.values.shape == (3, 10)

    def test_zero_parameters_give_uniform(self):
        model = small_model()
        zero_params(model)
        pmf = forward(model, make_series(L=4))
        np.testing.assert_allclose(pmf.values, 1.0 / 30.0, atol=1e-12)

    def test_truncations_differ_but_normalize(self):
        model = small_model(seed=9)
        series = make_series(L=13, seed=2)
        p6 = forward(model, series.truncated(6.0))
        p12 = forward(model, series.truncated(12.0))
        assert abs(p6.values.sum() - 1.0) < 1e-6
        assert abs(p12.values.sum() - 1.0) < 1e-6
        assert not np.allclose(p6.values, p12.values)

    def test_feature_width_mismatch_rejected(self):
        model = small_model(d=2)
        with pytest.raises(CompatibilityError):
            forward(model, make_series(L=3, d=5))


class TestCifFromPmf:
    def test_uniform_prefix_sums(self):
        pmf = PmfEstimate(values=np.full((3, 4), 1 / 12))
        cif = cif_from_pmf(pmf, TimeGrid(np.array([1.0, 2.0, 3.0, 4.0])))
        np.testing.assert_allclose(cif.values[0], [1 / 12, 2 / 12, 3 / 12, 4 / 12])

    def test_point_masses(self):
        values = np.zeros((2, 4))
        values[0] = [0.5, 0.0, 0.0, 0.5]
        cif = cif_from_pmf(PmfEstimate(values=values), TimeGrid(np.arange(1.0, 5.0)))
        np.testing.assert_allclose(cif.values[0], [0.5, 0.5, 0.5, 1.0])

    def test_random_pmfs_monotone_total_one(self):
        rng = np.random.default_rng(0)
        grid = TimeGrid(np.arange(1.0, 7.0))
        for _ in range(1000):
            raw = rng.random((3, 6))
            pmf = PmfEstimate(values=raw / raw.sum())
            cif = cif_from_pmf(pmf, grid)
            assert np.all(np.diff(cif.values, axis=1) >= 0)
            assert abs(cif.values[:, -1].sum() - 1.0) < 1e-9


class TestLoss:
    def test_censored_uniform_pmf_value(self):
        model = small_model(k=3, m=10, upper=10.0)
        zero_params(model)
        series = make_series(L=3, d=2)
        subject = Subject(series, EventRecord(0, series.timestamps[-1] + 0.5))  # bin 1
        lb = loss_total(model, [subject], LossWeights(1.0, 1.0))
        assert abs(lb.nll - (-np.log(0.9))) < 1e-9

    def test_no_acceptable_pairs_zero_ranking(self):
        model = small_model()
        series_a, series_b = make_series(L=3, seed=1), make_series(L=3, seed=2)
        subjects = [
            Subject(series_a, EventRecord(1, series_a.timestamps[-1] + 2.0)),
            Subject(series_b, EventRecord(1, series_b.timestamps[-1] + 2.0)),
        ]
        lb = loss_total(model, subjects, LossWeights(1.0, 1.0))
        assert lb.ranking == 0.0

    def test_perfect_next_step_zero_error(self):
        model = small_model(d=1)
        zero_params(model)
        feats = np.zeros((4, 1))
        series = make_series(L=4, d=1)
        series = type(series)(
            features=feats, timestamps=series.timestamps,
            static_mask=np.zeros(1, bool), missing_mask=np.ones((4, 1), bool),
        )
        subject = Subject(series, EventRecord(1, 4.0))
        lb = loss_total(model, [subject], LossWeights(1.0, 1.0))
        assert lb.next_step == 0.0

    def test_mass_on_true_cell_lowers_nll(self):
        series = make_series(L=3, seed=5)
        subject = Subject(series, EventRecord(2, series.timestamps[-1] + 1.5))  # bin 1
        base = small_model()
        zero_params(base)
        bumped = small_model()
        zero_params(bumped)
        bias = bumped.params["head1.b2"]
        bias[1] = 2.0  # event 2, bin index 1
        lb_base = loss_total(base, [subject], LossWeights(1.0, 1.0))
        lb_bumped = loss_total(bumped, [subject], LossWeights(1.0, 1.0))
        assert lb_bumped.nll < lb_base.nll

    def test_event_residual_beyond_grid_rejected(self):
        model = small_model(upper=5.0)
        series = make_series(L=3)
        subject = Subject(series, EventRecord(1, series.timestamps[-1] + 50.0))
        with pytest.raises(TrainingError, match="grid"):
            loss_total(model, [subject], LossWeights(1.0, 1.0))

    def test_empty_batch_rejected(self):
        with pytest.raises(ValidationError):
            loss_total(small_model(), [], LossWeights(1.0, 1.0))


class TestTrain:
    def test_loss_decreases_and_selects(self):
        cohort = simulate(informative_config(seed=31), 150)
        proto = training.TrainProtocol(max_epochs=5, patience=5, hidden=6)
        combos = [training.HyperCombo(1e-3, 0.5, 0.1, 0.2)]
        model, log = train_with_log(cohort, None, combos, seed=1, protocol=proto)
        losses = [
            float(line.split("train_loss=")[1].split()[0])
            for line in log if "train_loss=" in line
        ]
        assert len(losses) == 5
        assert losses[-1] < losses[0]
        assert model.selected_hyper["lr"] == 1e-3

    def test_batch_size_default_is_32(self):
        assert training.TrainProtocol().batch_size == 32
        assert training.TrainProtocol().max_epochs == 100
        assert training.TrainProtocol().patience == 10

    def test_published_grid_shape(self):
        grid = training.default_hyper_grid()
        assert len(grid) == 3 * 3 * 3 * 2
        assert {c.lr for c in grid} == {1e-4, 5e-4, 1e-3}
        assert {c.alpha for c in grid} == {0.5, 1.0, 5.0}
        assert {c.beta for c in grid} == {0.05, 0.1, 0.5}
        assert {c.dropout for c in grid} == {0.2, 0.4}

    def test_seed_determinism(self):
        cohort = simulate(informative_config(seed=33), 120)
        proto = training.TrainProtocol(max_epochs=3, patience=3, hidden=5)
        combos = [
            training.HyperCombo(1e-3, 0.5, 0.1, 0.2),
            training.HyperCombo(5e-4, 1.0, 0.1, 0.4),
        ]
        m1, _ = train_with_log(cohort, None, combos, seed=7, protocol=proto)
        m2, _ = train_with_log(cohort, None, combos, seed=7, protocol=proto)
        assert m1.selected_hyper == m2.selected_hyper
        series = cohort.subjects[0].series
        np.testing.assert_array_equal(
            m1.predict_cif(series, series.timestamps[-1]).values,
            m2.predict_cif(series, series.timestamps[-1]).values,
        )

    def test_all_censored_validation_rejected(self):
        cfg = informative_config(seed=35)
        cohort = simulate(type(cfg)(**{**cfg.__dict__, "censor_rate": 1e6}), 60)
        with pytest.raises(TrainingError):
            train_with_log(cohort, None, [training.HyperCombo(1e-3, 1, 0.1, 0.2)],
                           seed=0, protocol=training.TrainProtocol(max_epochs=1))


class TestPredict:
    def test_time_between_steps_uses_truncation(self):
        model = small_model(seed=13)
        series = make_series(L=10, seed=4)
        a = predict_cif(model, series, 6.0)
        b = predict_cif(model, series, 6.9)
        np.testing.assert_array_equal(a.values, b.values)

    def test_structural_invariants(self):
        model = small_model(seed=14)
        cif = predict_cif(model, make_series(L=5, seed=6), 4.0)
        assert np.all(cif.values >= 0)
        assert np.all(np.diff(cif.values, axis=1) >= -1e-12)
        assert cif.values[:, -1].sum() <= 1 + 1e-6

    def test_repeated_calls_identical_despite_dropout_config(self):
        model = small_model(seed=15, dropout=0.4)
        series = make_series(L=6, seed=7)
        a = predict_cif(model, series, 5.0)
        b = predict_cif(model, series, 5.0)
        np.testing.assert_array_equal(a.values, b.values)

    def test_empty_truncation_rejected(self):
        model = small_model()
        with pytest.raises(ValidationError):
            predict_cif(model, make_series(L=3), -0.5)


class TestPersistence:
    def test_roundtrip_bit_exact_predictions(self, tmp_path):
        cohort = simulate(informative_config(seed=37), 80)
        proto = training.TrainProtocol(max_epochs=2, patience=2, hidden=5)
        model, _ = train_with_log(
            cohort, None, [training.HyperCombo(1e-3, 0.5, 0.1, 0.2)], seed=3,
            protocol=proto,
        )
        path = tmp_path / "m.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == "deephit"
        assert loaded.selected_hyper == model.selected_hyper
        for s in cohort.subjects[:5]:
            t = s.series.timestamps[-1]
            np.testing.assert_array_equal(
                model.predict_cif(s.series, t).values,
                loaded.predict_cif(s.series, t).values,
            )
