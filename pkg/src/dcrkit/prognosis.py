"""Classifiers derived from any trained CIF model.

Risk indices are fixed by convention: 1 = awaken, 2 = death (not by
withdrawal), 3 = withdrawal.  The conditional classifier divides each
event's CIF at the queried horizon by the total terminal mass of the two
non-withdrawal events, i.e. it conditions on withdrawal never happening;
"infinity" is operationalized as the last grid point of the model's
native CIF (the total-mass horizon for the pmf models, the last baseline
step for the proportional-hazards kind).  The two probabilities
intentionally do not sum to 1, which is what makes them nondecreasing in
the horizon.

The alternative classifier drops the conditioning and instead assumes a
fixed share ``alpha`` of withdrawn patients would have awakened.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import TimeSeries
from .errors import CompatibilityError, UndefinedMetricError, ValidationError
from .models.base import CifEstimate

DEFAULT_HEATMAP_TIMES = tuple(float(t) for t in range(1, 13))
DEFAULT_HEATMAP_DELTAS = (24.0, 48.0, 72.0)


@dataclass(frozen=True)
class PredictionQuery:
    """A (prediction time, horizon) pair, both in hours."""

    t: float
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValidationError("horizon must be positive")


@dataclass(frozen=True)
class AlphaAssumption:
    """Assumed probability that a withdrawn patient would have awakened."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must lie in [0, 1]")


def _cif_for(model, series: TimeSeries, t: float) -> CifEstimate:
    if model.k < 2:
        raise CompatibilityError(
            "derived classifiers need at least the awaken and death risks"
        )
    return model.predict_cif(series, t)


def _conditional(cif: CifEstimate, event: int, delta: float) -> float:
    denom = cif.terminal(1) + cif.terminal(2)
    if denom <= 0.0:
        raise UndefinedMetricError(
            "degenerate model output: no terminal mass on awaken or death"
        )
    return cif.value_at(event, delta) / denom


def p_awaken(model, series: TimeSeries, q: PredictionQuery) -> float:
    """P(awaken within delta | data to t, no event yet, never withdrawn)."""
    return _conditional(_cif_for(model, series, q.t), 1, q.delta)


def p_death(model, series: TimeSeries, q: PredictionQuery) -> float:
    """Mirror of :func:`p_awaken` for death (not by withdrawal)."""
    return _conditional(_cif_for(model, series, q.t), 2, q.delta)


def death_awaken_ratio(model, series: TimeSeries, q: PredictionQuery) -> float:
    """p_death / p_awaken; the score thresholded by :func:`classify` and
    ranked by the AUROC/ROC metrics.  +inf when only death has mass."""
    cif = _cif_for(model, series, q.t)
    pa = _conditional(cif, 1, q.delta)
    pd = _conditional(cif, 2, q.delta)
    if pa == 0.0:
        if pd == 0.0:
            raise UndefinedMetricError("both class probabilities are zero")
        return np.inf
    return pd / pa


def classify(model, series: TimeSeries, q: PredictionQuery, threshold: float = 1.0) -> str:
    """"awaken" iff p_death/p_awaken is strictly below the threshold.

    The ratio-at-threshold tie goes to "death" (the conservative side for
    the positive class); the threshold is an operating point callers may
    tune.
    """
    return "awaken" if death_awaken_ratio(model, series, q) < threshold else "death"


def p_awaken_unconditional(model, series: TimeSeries, q: PredictionQuery,
                           a: AlphaAssumption) -> float:
    """F1(delta) + F3(delta) * alpha: the no-conditioning alternative under
    the independence assumption on withdrawn patients' counterfactual."""
    cif = _cif_for(model, series, q.t)
    if cif.k < 3:
        raise CompatibilityError("the alpha classifier needs the withdrawal risk")
    return cif.value_at(1, q.delta) + cif.value_at(3, q.delta) * a.alpha


def p_death_unconditional(model, series: TimeSeries, q: PredictionQuery,
                          a: AlphaAssumption, alpha_death: float | None = None) -> float:
    """Death-side mirror; the withdrawal share defaults to 1 - alpha but is
    a separate knob because the split is a modeling assumption."""
    share = 1.0 - a.alpha if alpha_death is None else alpha_death
    if not 0.0 <= share <= 1.0:
        raise ValidationError("alpha_death must lie in [0, 1]")
    cif = _cif_for(model, series, q.t)
    if cif.k < 3:
        raise CompatibilityError("the alpha classifier needs the withdrawal risk")
    return cif.value_at(2, q.delta) + cif.value_at(3, q.delta) * share


def heatmap_grid(model, series: TimeSeries, t_values=DEFAULT_HEATMAP_TIMES,
                 delta_values=DEFAULT_HEATMAP_DELTAS, variant: str = "conditional",
                 alpha: float | None = None) -> np.ndarray:
    """Probability matrix with one row per horizon and one column per
    prediction time; the series is re-truncated at every t.

    ``variant`` selects the probability: "conditional" for the
    non-withdrawal-conditioned awakening probability, "alpha" for the
    unconditional alternative (requires ``alpha``).
    """
    t_values = np.asarray(t_values, dtype=np.float64)
    delta_values = np.asarray(delta_values, dtype=np.float64)
    if t_values.size == 0 or (t_values.size > 1 and np.any(np.diff(t_values) <= 0)):
        raise ValidationError("t_values must be ascending and nonempty")
    if delta_values.size == 0 or (delta_values.size > 1 and np.any(np.diff(delta_values) <= 0)):
        raise ValidationError("delta_values must be ascending and nonempty")
    if variant == "alpha":
        if alpha is None:
            raise ValidationError("the alpha variant needs an alpha value")
        assumption = AlphaAssumption(alpha)
    elif variant != "conditional":
        raise ValidationError(f"unknown heat-map variant {variant!r}")

    out = np.empty((delta_values.size, t_values.size))
    for col, t in enumerate(t_values):
        try:
            cif = _cif_for(model, series, t)
        except ValidationError as exc:
            raise ValidationError(f"invalid prediction time t={t:g}: {exc}") from exc
        for row, delta in enumerate(delta_values):
            if variant == "conditional":
                out[row, col] = _conditional(cif, 1, delta)
            else:
                if cif.k < 3:
                    raise CompatibilityError(
                        "the alpha classifier needs the withdrawal risk"
                    )
                out[row, col] = (
                    cif.value_at(1, delta) + cif.value_at(3, delta) * assumption.alpha
                )
    return out
