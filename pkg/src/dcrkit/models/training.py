"""Training harness shared by the neural model kinds.

Implements the published protocol: minibatches of 32 with Adam, a
hyperparameter grid over learning rate, the two loss weights, and the
dropout rate, at most 100 epochs per combination, early stopping with
patience 10 on the validation average c-index across all events at the
24/48/72-hour horizons, and selection of the combination with the best
validation score.  The validation prediction time is min(6, median
observed series length), since the protocol leaves it open.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cohort import Cohort, stratified_split, truncate_at
from ..errors import TrainingError, UndefinedMetricError, ValidationError
from ..metrics import c_index_scores
from .base import TimeGrid, default_grid
from .neural import LossWeights, loss_total


@dataclass(frozen=True)
class HyperCombo:
    lr: float
    alpha: float
    beta: float
    dropout: float


def default_hyper_grid():
    """The published grid: 3 learning rates x 3 alphas x 3 betas x 2 dropouts."""
    return [
        HyperCombo(lr, a, b, dr)
        for lr in (1e-4, 5e-4, 1e-3)
        for a in (0.5, 1.0, 5.0)
        for b in (0.05, 0.1, 0.5)
        for dr in (0.2, 0.4)
    ]


@dataclass(frozen=True)
class TrainProtocol:
    """Knobs of the training procedure that are not searched over."""

    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.2
    val_deltas: tuple = (24.0, 48.0, 72.0)
    m_bins: int = 30
    hidden: int = 16
    dec_hidden: int = 0  # 0 = same as hidden
    sigma: float = 0.1


class Adam:
    """Adaptive-moment minibatch updates over a ParamStore."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name in params.names():
            g = params.grad(name)
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            value = params[name]
            value -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def validation_score(model, val_cohort: Cohort, t: float, deltas) -> float:
    """Average c-index across events and horizons; undefined cells are
    skipped, and -inf means nothing was measurable."""
    at_risk = truncate_at(val_cohort, t)
    if len(at_risk) < 2:
        return -np.inf
    try:
        cifs = [model.predict_cif(s.series, t) for s in at_risk.subjects]
    except ValidationError:
        return -np.inf  # degenerate (non-finite) parameters
    events = at_risk.events()
    times = at_risk.times()
    cells = []
    for j in range(1, model.k + 1):
        for delta in deltas:
            scores = np.array([c.value_at(j, delta) for c in cifs])
            try:
                cells.append(c_index_scores(scores, events, times, j, t, delta))
            except UndefinedMetricError:
                continue
    return float(np.mean(cells)) if cells else -np.inf


def _fit_combo(model, train_c, combo, protocol, val_c, t_val, rng, log, tag):
    """Train one combination to its early-stopping point.

    The patience counter watches the best validation c-index seen, but the
    weights returned are the ones at the stopping epoch (the protocol
    stops training; it does not rewind it), and the combination's score is
    the final epoch's validation c-index.
    """
    adam = Adam()
    weights = LossWeights(combo.alpha, combo.beta, protocol.sigma)
    n = len(train_c)
    best_score, best_epoch = -np.inf, 0
    score = -np.inf
    epoch = 0
    for epoch in range(1, protocol.max_epochs + 1):
        perm = rng.permutation(n)
        total, batches = 0.0, 0
        for start in range(0, n, protocol.batch_size):
            batch = [train_c.subjects[i] for i in perm[start : start + protocol.batch_size]]
            model.params.zero_grads()
            lb = loss_total(model, batch, weights, rng)
            adam.step(model.params, combo.lr)
            total += lb.total
            batches += 1
        score = validation_score(model, val_c, t_val, protocol.val_deltas)
        log.append(
            f"{tag} epoch={epoch} train_loss={total / batches:.6f} "
            f"val_cindex={score if np.isfinite(score) else float('nan'):.6f}"
        )
        if score > best_score:
            best_score, best_epoch = score, epoch
        elif epoch - best_epoch >= protocol.patience:
            break
    values = {k: model.params[k].copy() for k in model.params.names()}
    return score, epoch, values


def train_neural(model_cls, cohort: Cohort, grid: TimeGrid | None,
                 hyper_grid, seed: int, protocol: TrainProtocol | None):
    """Returns (fitted model, training log lines).  Deterministic in seed."""
    protocol = protocol or TrainProtocol()
    if hyper_grid is None:
        hyper_grid = default_hyper_grid()
    if len(cohort) < 2:
        raise TrainingError("training needs at least two subjects")

    split_rng = np.random.default_rng([seed, 1])
    train_c, val_c = stratified_split(cohort, protocol.val_fraction, split_rng)
    if len(train_c) == 0 or len(val_c) == 0:
        raise TrainingError("cohort too small for a train/validation split")
    if not np.any(val_c.events() > 0):
        raise TrainingError("validation set has no uncensored subject")

    residuals = np.array([s.residual_duration for s in cohort.subjects])
    if grid is None:
        grid = default_grid(max(residuals.max(), 1.0), protocol.m_bins)
    event_res = residuals[cohort.events() > 0]
    if event_res.size and event_res.max() > grid.deltas[-1]:
        raise TrainingError(
            f"event residual duration {event_res.max():.6g} exceeds the grid "
            f"upper bound {grid.deltas[-1]:.6g}"
        )
    t_val = float(min(6.0, np.median([s.series.timestamps[-1] for s in cohort.subjects])))

    static_mask = (
        cohort.subjects[0].series.static_mask
        if len(cohort)
        else np.zeros(cohort.d, dtype=bool)
    )

    def make_model(combo_index, combo):
        kwargs = dict(
            d=cohort.d, static_mask=static_mask, k=cohort.k, grid=grid,
            hidden=protocol.hidden, dropout=combo.dropout,
            seed=seed * 1009 + combo_index,
        )
        if model_cls.kind == "ddrsa":
            kwargs["dec_hidden"] = protocol.dec_hidden or protocol.hidden
        return model_cls(**kwargs)

    log: list = []
    best = None  # (score, index, combo, values, epoch)
    for ci, combo in enumerate(hyper_grid):
        model = make_model(ci, combo)
        rng = np.random.default_rng([seed, 2, ci])
        tag = f"combo={ci} lr={combo.lr} alpha={combo.alpha} beta={combo.beta} dropout={combo.dropout}"
        try:
            score, epoch, values = _fit_combo(
                model, train_c, combo, protocol, val_c, t_val, rng, log, tag
            )
        except (ValidationError, FloatingPointError) as exc:
            log.append(f"{tag} aborted: {exc}")
            continue
        log.append(f"{tag} best_val_cindex={score:.6f} at epoch {epoch}")
        if np.isfinite(score) and (best is None or score > best[0]):
            best = (score, ci, combo, values, epoch)

    if best is None:
        raise TrainingError(
            "no hyperparameter combination produced a defined validation score"
        )
    score, ci, combo, values, epoch = best
    model = make_model(ci, combo)
    model.params.load_values(values)
    model.selected_hyper = {
        "lr": combo.lr, "alpha": combo.alpha, "beta": combo.beta,
        "dropout": combo.dropout, "val_cindex": score, "epoch": epoch,
        "t_val": t_val,
    }
    log.append(f"selected combo={ci} val_cindex={score:.6f}")
    return model, log
