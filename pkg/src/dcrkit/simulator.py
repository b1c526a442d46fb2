"""Synthetic cohort generation with analytically known ground truth.

Subjects get a Gaussian random-walk feature trajectory plus static
features drawn once.  Latent durations for the k competing events are
exponential with per-subject rates ``lambda_j * exp(beta_j . s(Z))``,
where ``s(Z)`` is the per-feature mean over all steps concatenated with
the static features; censoring is exponential with a feature-free rate.
The observed outcome is the argmin of the latent durations.  Because the
construction is memoryless, the cumulative incidence of each event given
survival past any prediction time has the closed form implemented in
:func:`true_cif`, which is what the model-accuracy tests compare against.

Draws are generated with a counter-based Philox generator keyed on
``(seed, subject index)``, so per-subject output is independent of
generation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, EventRecord, Subject, TimeSeries
from .errors import ValidationError
from .models.base import CifEstimate, TimeGrid

WALK_STEP_STD = 0.1  # per-step standard deviation of the feature random walk


@dataclass(frozen=True)
class GenerativeConfig:
    """Parameters of the generative process.

    ``hazard_rates[j]`` and ``hazard_betas[j]`` (j = 0..k-1) give baseline
    rate and coefficient vector for event j+1; the coefficient vector has
    ``d_dynamic + d_static`` entries, matching the subject summary
    ``s(Z)``.  ``withdrawal_coupling`` scales the last risk's rate by
    ``(r_death / lambda_death) ** coupling`` to mimic physicians reacting
    to death risk; 0 disables it.
    """

    k: int
    d_dynamic: int
    d_static: int
    length_min: int
    length_max: int
    step_hours: float
    hazard_rates: tuple
    hazard_betas: tuple
    censor_rate: float
    seed: int
    risk_names: tuple = ()
    withdrawal_coupling: float = 0.0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if self.d_dynamic < 0 or self.d_static < 0 or self.d_dynamic + self.d_static < 1:
            raise ValidationError("need at least one feature")
        if not (1 <= self.length_min <= self.length_max):
            raise ValidationError("length bounds must satisfy 1 <= min <= max")
        if self.step_hours <= 0:
            raise ValidationError("step_hours must be positive")
        if len(self.hazard_rates) != self.k or len(self.hazard_betas) != self.k:
            raise ValidationError("need one rate and one beta vector per risk")
        if any(r <= 0 for r in self.hazard_rates):
            raise ValidationError("hazard rates must be positive")
        if self.censor_rate <= 0:
            raise ValidationError("censor_rate must be positive")
        betas = tuple(
            np.ascontiguousarray(b, dtype=np.float64) for b in self.hazard_betas
        )
        dim = self.d_dynamic + self.d_static
        for b in betas:
            if b.shape != (dim,):
                raise ValidationError(f"each beta must have {dim} entries")
        object.__setattr__(self, "hazard_rates", tuple(float(r) for r in self.hazard_rates))
        object.__setattr__(self, "hazard_betas", betas)
        names = self.risk_names or tuple(f"risk{j}" for j in range(1, self.k + 1))
        if len(names) != self.k:
            raise ValidationError("risk_names must have k entries")
        object.__setattr__(self, "risk_names", tuple(names))

    @property
    def d(self) -> int:
        return self.d_dynamic + self.d_static

    def feature_names(self) -> list:
        return [f"dyn{i}" for i in range(self.d_dynamic)] + [
            f"static{i}" for i in range(self.d_static)
        ]


def _subject_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(key=np.uint64(seed), counter=[0, 0, 0, np.uint64(index)])
    )


def summary_statistic(cfg: GenerativeConfig, series: TimeSeries) -> np.ndarray:
    """s(Z): mean of each dynamic feature over all steps, then the statics."""
    dyn = series.features[:, : cfg.d_dynamic].mean(axis=0)
    static = series.features[0, cfg.d_dynamic :]
    return np.concatenate([dyn, static])


def event_rates(cfg: GenerativeConfig, series: TimeSeries) -> np.ndarray:
    """Per-subject exponential rates for events 1..k."""
    s = summary_statistic(cfg, series)
    rates = np.array(
        [lam * np.exp(beta @ s) for lam, beta in zip(cfg.hazard_rates, cfg.hazard_betas)]
    )
    if cfg.withdrawal_coupling != 0.0 and cfg.k >= 2:
        # Scale the last risk (withdrawal) by the subject's relative death risk.
        rel_death = rates[-2] / cfg.hazard_rates[-2]
        rates[-1] *= rel_death**cfg.withdrawal_coupling
    return rates


def _sample_series(cfg: GenerativeConfig, rng: np.random.Generator) -> TimeSeries:
    L = int(rng.integers(cfg.length_min, cfg.length_max + 1))
    dyn = np.empty((L, cfg.d_dynamic))
    if cfg.d_dynamic:
        dyn[0] = rng.standard_normal(cfg.d_dynamic)
        steps = rng.standard_normal((L - 1, cfg.d_dynamic)) * WALK_STEP_STD
        dyn[1:] = dyn[0] + np.cumsum(steps, axis=0)
    static = rng.standard_normal(cfg.d_static)
    feats = np.hstack([dyn, np.tile(static, (L, 1))])
    mask = np.ones((L, cfg.d), dtype=bool)
    static_mask = np.zeros(cfg.d, dtype=bool)
    static_mask[cfg.d_dynamic :] = True
    return TimeSeries(
        features=feats,
        timestamps=np.arange(L, dtype=np.float64) * cfg.step_hours,
        static_mask=static_mask,
        missing_mask=mask,
    )


def simulate_subject(cfg: GenerativeConfig, index: int) -> Subject:
    """Draw one subject; deterministic in (cfg.seed, index)."""
    rng = _subject_rng(cfg.seed, index)
    series = _sample_series(cfg, rng)
    rates = event_rates(cfg, series)
    durations = np.empty(cfg.k + 1)
    durations[0] = rng.exponential(1.0 / cfg.censor_rate)
    durations[1:] = rng.exponential(1.0 / rates)
    event = int(np.argmin(durations))  # argmin takes the smallest index on ties
    y = series.timestamps[-1] + durations[event]
    return Subject(series, EventRecord(event, float(y)))


def simulate(cfg: GenerativeConfig, n: int) -> Cohort:
    """Generate an n-subject cohort; byte-identical across runs per seed."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    subjects = tuple(simulate_subject(cfg, i) for i in range(n))
    return Cohort(
        subjects=subjects,
        k=cfg.k,
        feature_names=tuple(cfg.feature_names()),
        risk_names=cfg.risk_names,
    )


def true_cif(
    cfg: GenerativeConfig,
    series: TimeSeries,
    t: float,
    deltas,
    censoring_competes: bool = True,
) -> CifEstimate:
    """Closed-form per-event cumulative incidence for one subject.

    With per-subject rates ``r_j`` and ``R = sum_j r_j``, the probability
    that event j is first within duration ``delta`` is

        r_j / (R + c) * (1 - exp(-(R + c) * delta))

    where ``c`` is the censoring rate if censoring competes (the variant
    observed labels follow, hence the oracle for model comparison) and 0
    for the censoring-free variant.  Exponential hazards are memoryless,
    so the value does not depend on ``t`` beyond the at-risk requirement.
    """
    if t < series.timestamps[-1]:
        raise ValidationError("t must not precede the end of the series")
    deltas = np.ascontiguousarray(deltas, dtype=np.float64)
    if deltas.ndim != 1 or deltas.size == 0:
        raise ValidationError("deltas must be a nonempty vector")
    if np.any(deltas < 0) or np.any(np.diff(deltas) < 0):
        raise ValidationError("deltas must be nonnegative and ascending")
    rates = event_rates(cfg, series)
    total = rates.sum() + (cfg.censor_rate if censoring_competes else 0.0)
    ramp = 1.0 - np.exp(-total * deltas)
    values = np.outer(rates / total, ramp)
    return CifEstimate(values=values, grid=TimeGrid(deltas))
