"""Shared fixtures: tiny series builders, reference configs, a stub model
with pinned CIF values, and the brute-force oracles used across tests."""

import math

import numpy as np

from dcrkit.cohort import Cohort, EventRecord, Subject, TimeSeries
from dcrkit.models.base import CifEstimate, TimeGrid
from dcrkit.simulator import GenerativeConfig


def make_series(L=5, d=2, seed=0, static_cols=()):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((L, d))
    static_mask = np.zeros(d, dtype=bool)
    for c in static_cols:
        static_mask[c] = True
        feats[:, c] = feats[0, c]
    return TimeSeries(
        features=feats,
        timestamps=np.arange(L, dtype=float),
        static_mask=static_mask,
        missing_mask=np.ones((L, d), dtype=bool),
    )


def make_subject(L=5, d=2, event=1, time=None, seed=0):
    series = make_series(L=L, d=d, seed=seed)
    if time is None:
        time = float(series.timestamps[-1]) + 5.0
    return Subject(series, EventRecord(event, time))


def make_cohort(spec, d=2, k=3, seed=0):
    """spec: list of (event, time) pairs; series lengths vary with index."""
    subjects = []
    for i, (event, time) in enumerate(spec):
        L = 2 + (i % 4)
        subjects.append(
            Subject(make_series(L=L, d=d, seed=seed + i), EventRecord(event, time))
        )
    return Cohort(
        subjects=tuple(subjects),
        k=k,
        feature_names=tuple(f"x{j}" for j in range(d)),
        risk_names=tuple(f"risk{j}" for j in range(1, k + 1)),
    )


def informative_config(seed=42, censor_rate=0.002, k=3):
    """Strongly informative generative setup: hazards driven mostly by the
    static feature, which every prediction time can see."""
    betas = (
        np.array([0.2, 0.0, 1.1]),
        np.array([-0.2, 0.2, -0.9]),
        np.array([0.1, 0.1, 0.5]),
    )[:k]
    rates = (0.02, 0.015, 0.01)[:k]
    return GenerativeConfig(
        k=k, d_dynamic=2, d_static=1, length_min=1, length_max=12, step_hours=1.0,
        hazard_rates=rates, hazard_betas=betas, censor_rate=censor_rate, seed=seed,
        risk_names=("awaken", "death", "withdrawal")[:k],
    )


def noninformative_config(seed=42):
    cfg = informative_config(seed=seed)
    zero = tuple(np.zeros(3) for _ in range(3))
    return GenerativeConfig(**{**cfg.__dict__, "hazard_betas": zero})


class StubCifModel:
    """predict_cif returns pinned values regardless of input; used to test
    the classifier arithmetic in isolation."""

    def __init__(self, values, deltas, d=2):
        values = np.asarray(values, dtype=np.float64)
        self.k = values.shape[0]
        self.d = d
        self._cif = CifEstimate(values=values, grid=TimeGrid(np.asarray(deltas, float)))

    def predict_cif(self, series, t):
        series.truncated(t)  # preserve the at-risk/truncation contract
        return self._cif

    def horizon(self):
        return float(self._cif.grid.deltas[-1])


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def percentile_linear(values, q):
    """Type-7 percentile: linear interpolation between order statistics."""
    v = sorted(values)
    h = (len(v) - 1) * q
    lo, hi = math.floor(h), math.ceil(h)
    return v[lo] + (h - lo) * (v[hi] - v[lo])


def ingest_reference(raw):
    """Loop-based reimplementation of the two-stage downsampling."""
    seconds, q = raw.shape
    n_min = seconds // 60
    minutes = []
    for b in range(n_min):
        minutes.append([np.mean(raw[b * 60 : (b + 1) * 60, f]) for f in range(q)])
    minutes = np.array(minutes)
    hours = []
    h = 0
    while h * 60 < n_min:
        block = minutes[h * 60 : (h + 1) * 60]
        row = []
        for f in range(q):
            col = block[:, f]
            row += [
                col.min(), col.max(), col.mean(),
                percentile_linear(col, 0.25),
                percentile_linear(col, 0.50),
                percentile_linear(col, 0.75),
            ]
        hours.append(row)
        h += 1
    return np.array(hours)


def cindex_reference(scores, events, times, event, t, delta):
    """Exhaustive pair enumeration of the truncated concordance rule."""
    num = 0.0
    den = 0
    n = len(scores)
    for a in range(n):
        if events[a] != event or not (t < times[a] <= t + delta):
            continue
        for b in range(n):
            if times[b] > times[a]:
                den += 1
                if scores[a] > scores[b]:
                    num += 1.0
                elif scores[a] == scores[b]:
                    num += 0.5
    return num / den if den else None


def auroc_reference(scores, labels):
    """Probability a random positive outranks a random negative."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else (0.5 if p == q else 0.0)
    return total / (len(pos) * len(neg))
