"""Fine-Gray subdistribution proportional hazards on last-step features.

A subject's covariates are the final observed feature row (static
features plus the latest hour's summary features); the fitted time axis
is residual duration from that row, which keeps training and prediction
time origins commensurate.  Subjects with a competing event stay in the
risk set after their event with the inverse-probability-of-censoring
weight G(s)/G(min(Y_i, s)), where G is the product-limit estimate of the
censoring survival evaluated left-continuously.  Ties are handled the
Breslow way, features are standardized for the Newton solve, and the
reported coefficients are rescaled back to the original feature units
with the baseline referenced at the feature means.

There are no tuning inputs: ``fit_finegray(cohort)`` is the whole
interface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..cohort import Cohort, TimeSeries
from ..errors import CompatibilityError, TrainingError, ValidationError
from .base import CifEstimate, TimeGrid

_log = logging.getLogger(__name__)

_TOL = 1e-8
_MAX_ITER = 50


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous nondecreasing step function starting at 0."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if times.shape != values.shape or times.ndim != 1:
            raise ValidationError("step function needs matching 1-d arrays")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValidationError("step times must be strictly increasing")
        if np.any(np.diff(values) < 0):
            raise ValidationError("cumulative hazard must be nondecreasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)
        return out if np.ndim(t) else float(out)


def _censoring_survival(residuals, events):
    """Product-limit estimate of P(censoring time > s)."""
    order = np.argsort(residuals, kind="mergesort")
    s = residuals[order]
    cens = events[order] == 0
    n = s.size
    times, survs = [], []
    g = 1.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        d = int(cens[i : j + 1].sum())
        at_risk = n - i
        if d:
            g *= 1.0 - d / at_risk
            times.append(s[i])
            survs.append(g)
        i = j + 1
    return np.array(times), np.array(survs)


def _g_left(times, survs, query):
    """Left-continuous censoring survival G(s-)."""
    idx = np.searchsorted(times, query, side="left") - 1
    flat = np.atleast_1d(idx)
    out = np.where(flat >= 0, survs[np.maximum(flat, 0)], 1.0)
    return out if np.ndim(query) else float(out[0])


def _independent_columns(x):
    """Indices of a maximal linearly independent column set (Gram-Schmidt
    with a relative tolerance); also returns the dependent ones."""
    n, p = x.shape
    basis = []
    keep, drop = [], []
    for c in range(p):
        v = x[:, c].astype(np.float64).copy()
        norm0 = np.linalg.norm(v)
        for b in basis:
            v -= (b @ v) * b
        if np.linalg.norm(v) > 1e-8 * max(norm0, 1.0):
            basis.append(v / np.linalg.norm(v))
            keep.append(c)
        else:
            drop.append(c)
    return keep, drop


class FineGrayFit:
    """Fitted subdistribution hazards model exposing the predict-CIF
    contract shared with the neural kinds."""

    kind = "finegray"

    def __init__(self, k, feature_names, coefficients, feature_mean,
                 feature_scale, baselines, censor_times, censor_survival):
        self.k = int(k)
        self.feature_names = tuple(feature_names)
        self.d = len(self.feature_names)
        self.coefficients = np.ascontiguousarray(coefficients, dtype=np.float64)
        self.feature_mean = np.ascontiguousarray(feature_mean, dtype=np.float64)
        self.feature_scale = np.ascontiguousarray(feature_scale, dtype=np.float64)
        if self.coefficients.shape != (self.k, self.d):
            raise ValidationError("coefficient matrix must be k x d")
        if np.any(self.feature_scale <= 0):
            raise ValidationError("standardization scales must be positive")
        self.baselines = tuple(
            StepFunction(times, values) for times, values in baselines
        )
        if len(self.baselines) != self.k:
            raise ValidationError("need one baseline hazard per event")
        self.censor_times = np.ascontiguousarray(censor_times, dtype=np.float64)
        self.censor_survival = np.ascontiguousarray(censor_survival, dtype=np.float64)
        grid_times = np.unique(np.concatenate([b.times for b in self.baselines]))
        if grid_times.size == 0 or grid_times[0] <= 0:
            # residual durations can legitimately be 0 (event at the last
            # observed hour); keep the grid strictly positive
            grid_times = grid_times[grid_times > 0]
        if grid_times.size == 0:
            raise ValidationError("no positive baseline step times")
        self._grid = TimeGrid(grid_times)

    def _feature_row(self, series: TimeSeries, t: float) -> np.ndarray:
        if series.width != self.d:
            raise CompatibilityError(
                f"series has {series.width} features, model expects {self.d}"
            )
        return series.truncated(t).features[-1]

    def cif_at(self, x: np.ndarray, deltas) -> CifEstimate:
        """CIF rows 1 - exp(-Lambda_j(delta) * exp(beta_j . (x - mean)))."""
        deltas = np.ascontiguousarray(deltas, dtype=np.float64)
        rel = np.exp(self.coefficients @ (x - self.feature_mean))
        rows = [
            1.0 - np.exp(-self.baselines[j].at(deltas) * rel[j])
            for j in range(self.k)
        ]
        return CifEstimate(values=np.vstack(rows), grid=TimeGrid(deltas))

    def predict_cif(self, series: TimeSeries, t: float) -> CifEstimate:
        return self.cif_at(self._feature_row(series, t), self._grid.deltas)

    def horizon(self) -> float:
        return float(self._grid.deltas[-1])

    def to_payload(self):
        header = {
            "kind": self.kind,
            "k": self.k,
            "d": self.d,
            "feature_names": list(self.feature_names),
        }
        arrays = {
            "coefficients": self.coefficients,
            "feature_mean": self.feature_mean,
            "feature_scale": self.feature_scale,
            "censor_times": self.censor_times,
            "censor_survival": self.censor_survival,
        }
        for j, b in enumerate(self.baselines):
            arrays[f"baseline_times{j}"] = b.times
            arrays[f"baseline_values{j}"] = b.values
        return header, arrays

    @classmethod
    def from_payload(cls, header, arrays) -> "FineGrayFit":
        k = int(header["k"])
        return cls(
            k=k,
            feature_names=header["feature_names"],
            coefficients=arrays["coefficients"],
            feature_mean=arrays["feature_mean"],
            feature_scale=arrays["feature_scale"],
            baselines=[
                (arrays[f"baseline_times{j}"], arrays[f"baseline_values{j}"])
                for j in range(k)
            ],
            censor_times=arrays["censor_times"],
            censor_survival=arrays["censor_survival"],
        )


def _fit_event(x_std, residuals, events, event_j, g_times, g_survs, names):
    """Newton solve for one event; returns (beta_std, baseline, trace).

    The weighted risk set at an event time s decomposes into suffix/prefix
    sums over residual-sorted subjects: denominator = A(s) + G(s-) B(s),
    where A(s) sums exp(beta x) over subjects with residual >= s and B(s)
    sums exp(beta x)/G(residual-) over earlier competing-event subjects,
    who stay in the risk set with a decaying weight.
    """
    n, p = x_std.shape
    order = np.argsort(residuals, kind="mergesort")
    s = residuals[order]
    ev = events[order]
    x = x_std[order]
    is_event = ev == event_j
    competing = (ev != 0) & (ev != event_j)
    if not np.any(is_event):
        raise TrainingError(f"no uncensored subject for event {event_j}")
    gl_own = _g_left(g_times, g_survs, s)
    # distinct event times and their tie counts
    ev_times, first_pos = np.unique(s[is_event], return_index=True)
    event_rows = np.flatnonzero(is_event)

    def aggregates(beta):
        e = np.exp(x @ beta)
        ex = e[:, None] * x
        exx = ex[:, :, None] * x[:, None, :]
        # suffix sums over everyone still under observation
        a0 = np.cumsum(e[::-1])[::-1]
        a1 = np.cumsum(ex[::-1], axis=0)[::-1]
        a2 = np.cumsum(exx[::-1], axis=0)[::-1]
        # prefix sums over competing-event subjects, deflated by their own G
        ce = np.where(competing, e / gl_own, 0.0)
        b0 = np.concatenate([[0.0], np.cumsum(ce)])
        b1 = np.concatenate([np.zeros((1, p)), np.cumsum(ce[:, None] * x, axis=0)])
        b2 = np.concatenate(
            [np.zeros((1, p, p)), np.cumsum(ce[:, None, None] * x[:, None, :] * x[:, :, None], axis=0)]
        )
        return e, (a0, a1, a2), (b0, b1, b2)

    def risk_at(times, aggs):
        (a0, a1, a2), (b0, b1, b2) = aggs
        lo = np.searchsorted(s, times, side="left")  # first index with s >= time
        gl = _g_left(g_times, g_survs, times)
        den = a0[np.minimum(lo, s.size - 1)] * (lo < s.size) + gl * b0[lo]
        num1 = a1[np.minimum(lo, s.size - 1)] * (lo < s.size)[:, None] + gl[:, None] * b1[lo]
        num2 = (
            a2[np.minimum(lo, s.size - 1)] * (lo < s.size)[:, None, None]
            + gl[:, None, None] * b2[lo]
        )
        return den, num1, num2

    beta = np.zeros(p)
    trace = []
    loglik = -np.inf
    for it in range(1, _MAX_ITER + 1):
        e, asums, bsums = aggregates(beta)
        den, num1, num2 = risk_at(s[event_rows], (asums, bsums))
        ll = float((x[event_rows] @ beta - np.log(den)).sum())
        xbar = num1 / den[:, None]
        score = (x[event_rows] - xbar).sum(axis=0)
        info = (num2 / den[:, None, None] - xbar[:, :, None] * xbar[:, None, :]).sum(axis=0)
        gmax = float(np.abs(score).max())
        trace.append(f"iter={it} loglik={ll:.8f} score_max={gmax:.3e}")
        if gmax < _TOL:
            loglik = ll
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise TrainingError(
                f"singular information matrix for event {event_j}: {exc}\n"
                + "\n".join(trace)
            ) from exc
        # step-halving: require the weighted partial likelihood to increase
        scale = 1.0
        for _ in range(30):
            cand = beta + scale * step
            e_c, asums_c, bsums_c = aggregates(cand)
            den_c, _, _ = risk_at(s[event_rows], (asums_c, bsums_c))
            ll_c = float((x[event_rows] @ cand - np.log(den_c)).sum())
            if ll_c > ll or gmax < 1e-6:
                break
            scale *= 0.5
        else:
            raise TrainingError(
                f"step-halving failed for event {event_j}\n" + "\n".join(trace)
            )
        beta = beta + scale * step
        loglik = ll
    else:
        raise TrainingError(
            f"Newton did not converge for event {event_j} in {_MAX_ITER} "
            "iterations\n" + "\n".join(trace)
        )

    # weighted Breslow baseline over distinct event times
    e, asums, bsums = aggregates(beta)
    den, _, _ = risk_at(ev_times, (asums, bsums))
    counts = np.array([(s[is_event] == t).sum() for t in ev_times], dtype=np.float64)
    baseline = np.cumsum(counts / den)
    return beta, (ev_times, baseline), trace


def fit_finegray(cohort: Cohort) -> FineGrayFit:
    """Fit one subdistribution hazards model per competing event."""
    if len(cohort) < 2:
        raise ValidationError("fitting needs at least two subjects")
    x = np.vstack([s.series.features[-1] for s in cohort.subjects])
    residuals = np.array([s.residual_duration for s in cohort.subjects])
    events = cohort.events()

    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    varying = np.flatnonzero(sd > 0)
    if varying.size == 0:
        raise ValidationError("all feature columns are constant")
    keep_rel, drop_rel = _independent_columns((x[:, varying] - mean[varying]) / sd[varying])
    if drop_rel:
        offending = [cohort.feature_names[varying[c]] for c in drop_rel]
        raise ValidationError(
            "feature matrix is rank deficient; offending columns: "
            + ", ".join(offending)
        )
    used = varying
    x_std = (x[:, used] - mean[used]) / sd[used]

    g_times, g_survs = _censoring_survival(residuals, events)
    coefficients = np.zeros((cohort.k, cohort.d))
    baselines = []
    for j in range(1, cohort.k + 1):
        beta_std, baseline, trace = _fit_event(
            x_std, residuals, events, j, g_times, g_survs, cohort.feature_names
        )
        _log.debug("event %d: %s", j, trace[-1])
        coefficients[j - 1, used] = beta_std / sd[used]
        baselines.append(baseline)

    return FineGrayFit(
        k=cohort.k,
        feature_names=cohort.feature_names,
        coefficients=coefficients,
        feature_mean=mean,
        feature_scale=np.where(sd > 0, sd, 1.0),
        baselines=baselines,
        censor_times=g_times,
        censor_survival=g_survs,
    )


def predict_finegray(fit: FineGrayFit, series: TimeSeries, t: float, deltas) -> CifEstimate:
    """CIF at the requested horizons from the last feature row at or
    before ``t``; durations restart at 0 from the prediction time."""
    deltas = np.ascontiguousarray(deltas, dtype=np.float64)
    if deltas.ndim != 1 or deltas.size == 0:
        raise ValidationError("deltas must be a nonempty vector")
    if np.any(deltas < 0) or (deltas.size > 1 and np.any(np.diff(deltas) <= 0)):
        raise ValidationError("deltas must be nonnegative and ascending")
    return fit.cif_at(fit._feature_row(series, t), deltas)
