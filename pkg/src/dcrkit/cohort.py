"""Data model for dynamic competing-risks cohorts.

A cohort is a list of subjects, each carrying a variable-length
multivariate time series plus an outcome (which competing event happened
first, or censoring, and when).  This module also owns ingestion of
second-resolution feature streams into hourly summary features, the
ablation relabeling used to collapse risks, at-risk truncation, and the
on-disk cohort format.

Cohorts are immutable after construction and safe to share across
parallel workers.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

SUMMARY_STATS = ("min", "max", "mean", "p25", "median", "p75")


def _as_float_matrix(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-d matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """One subject's feature trajectory.

    Parameters
    ----------
    features : (L, d) float array
        Row per time step.  Cells flagged unobserved in ``missing_mask``
        are stored as the sentinel value 0 and excluded from summary
        statistics.
    timestamps : (L,) float array
        Hours since the start of observation; strictly increasing and
        starting at 0.
    static_mask : (d,) bool array
        True for columns that are constant over time (e.g. admission
        features promoted onto every row).
    missing_mask : (L, d) bool array
        True where the cell was observed.
    """

    features: np.ndarray
    timestamps: np.ndarray
    static_mask: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        feats = _as_float_matrix(self.features)
        stamps = np.ascontiguousarray(self.timestamps, dtype=np.float64)
        static = np.ascontiguousarray(self.static_mask, dtype=bool)
        missing = np.ascontiguousarray(self.missing_mask, dtype=bool)
        L, d = feats.shape
        if L < 1:
            raise ValidationError("a time series needs at least one step")
        if stamps.shape != (L,):
            raise ValidationError("timestamps must have one entry per row")
        if static.shape != (d,):
            raise ValidationError("static_mask must have one flag per column")
        if missing.shape != (L, d):
            raise ValidationError("missing_mask must match the feature shape")
        if stamps[0] != 0.0:
            raise ValidationError("timestamps must start at 0")
        if L > 1 and not np.all(np.diff(stamps) > 0):
            raise ValidationError("timestamps must be strictly increasing")
        # Enforce the 0 sentinel on unobserved cells.
        feats = np.where(missing, feats, 0.0)
        if not np.all(np.isfinite(feats)):
            raise ValidationError("features must be finite")
        for j in np.flatnonzero(static):
            col = feats[missing[:, j], j]
            if col.size and np.any(col != col[0]):
                raise ValidationError(f"static column {j} varies over time")
        for name, val in (
            ("features", feats),
            ("timestamps", stamps),
            ("static_mask", static),
            ("missing_mask", missing),
        ):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_steps(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    def truncated(self, t: float) -> "TimeSeries":
        """Restrict to time steps observed at or before ``t``.

        Raises if no step qualifies (the caller asked for a prediction
        before the first observation).
        """
        keep = int(np.searchsorted(self.timestamps, t, side="right"))
        if keep == 0:
            raise ValidationError(f"no observations at or before t={t}")
        if keep == self.n_steps:
            return self
        return TimeSeries(
            self.features[:keep],
            self.timestamps[:keep],
            self.static_mask,
            self.missing_mask[:keep],
        )


@dataclass(frozen=True)
class EventRecord:
    """Outcome for one subject: which event happened first (0 = censored)
    and when, in hours."""

    event: int
    time: float

    def __post_init__(self):
        if self.event < 0:
            raise ValidationError("event indicator must be >= 0")
        if not np.isfinite(self.time) or self.time < 0:
            raise ValidationError("event time must be finite and >= 0")


@dataclass(frozen=True)
class Subject:
    series: TimeSeries
    outcome: EventRecord

    def __post_init__(self):
        if self.outcome.time < self.series.timestamps[-1]:
            raise ValidationError(
                "event time precedes the last observed time step"
            )

    @property
    def residual_duration(self) -> float:
        """Time from the last observed step to the event/censoring."""
        return self.outcome.time - self.series.timestamps[-1]


@dataclass(frozen=True)
class Cohort:
    """A set of subjects sharing feature layout and risk count.

    May be empty only as the result of :func:`truncate_at`; every other
    producer guarantees at least one subject.
    """

    subjects: tuple
    k: int
    feature_names: tuple
    risk_names: tuple
    allow_empty: bool = field(default=False, compare=False)

    def __post_init__(self):
        subjects = tuple(self.subjects)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "risk_names", tuple(self.risk_names))
        if self.k < 1:
            raise ValidationError("a cohort needs at least one risk")
        if len(self.risk_names) != self.k:
            raise ValidationError("risk_names must have k entries")
        if not subjects and not self.allow_empty:
            raise ValidationError("a cohort needs at least one subject")
        d = len(self.feature_names)
        for s in subjects:
            if s.series.width != d:
                raise ValidationError("all subjects must share feature width")
            if s.outcome.event > self.k:
                raise ValidationError(
                    f"event {s.outcome.event} exceeds risk count {self.k}"
                )

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def d(self) -> int:
        return len(self.feature_names)

    def events(self) -> np.ndarray:
        return np.array([s.outcome.event for s in self.subjects], dtype=int)

    def times(self) -> np.ndarray:
        return np.array([s.outcome.time for s in self.subjects])


def ingest_stream(raw, feature_names=None) -> TimeSeries:
    """Collapse a per-second feature stream into hourly summary features.

    Two-stage downsampling: per-feature means over non-overlapping
    60-second blocks give minute resolution, then each non-overlapping
    60-minute block is reduced to 6 summary statistics (min, max, mean,
    25th percentile, median, 75th percentile) per feature.  A trailing
    partial minute is dropped; a trailing partial hour with at least one
    full minute is summarized over the minutes it has.  Percentiles use
    linear interpolation between order statistics.

    Parameters
    ----------
    raw : (seconds, q) array
        Dense second-resolution stream, q >= 1 features.
    feature_names : sequence of q names, optional
        Defaults to ``f0, f1, ...``; output columns are named
        ``<name>_<stat>``.

    Returns
    -------
    TimeSeries with 6q time-varying columns and one row per hour.
    """
    raw = _as_float_matrix(raw)
    seconds, q = raw.shape
    if q < 1:
        raise ValidationError("stream needs at least one feature column")
    if seconds < 60:
        raise ValidationError(
            f"stream too short: {seconds} s, need at least one full minute"
        )
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(q)]
    elif len(feature_names) != q:
        raise ValidationError("feature_names must have one entry per column")

    n_min = seconds // 60
    minutes = raw[: n_min * 60].reshape(n_min, 60, q).mean(axis=1)

    n_hours = max(1, (n_min + 59) // 60)
    rows = np.empty((n_hours, 6 * q))
    for h in range(n_hours):
        block = minutes[h * 60 : (h + 1) * 60]
        lo, hi, med = np.percentile(block, [25, 75, 50], axis=0)
        rows[h, 0::6] = block.min(axis=0)
        rows[h, 1::6] = block.max(axis=0)
        rows[h, 2::6] = block.mean(axis=0)
        rows[h, 3::6] = lo
        rows[h, 4::6] = med
        rows[h, 5::6] = hi

    d = 6 * q
    return TimeSeries(
        features=rows,
        timestamps=np.arange(n_hours, dtype=np.float64),
        static_mask=np.zeros(d, dtype=bool),
        missing_mask=np.ones((n_hours, d), dtype=bool),
    )


def summary_feature_names(feature_names) -> list:
    return [f"{name}_{stat}" for name in feature_names for stat in SUMMARY_STATS]


def relabel_for_ablation(cohort: Cohort, keep) -> Cohort:
    """Collapse the risk set to ``keep``; all other events become censoring.

    Kept risks are renumbered contiguously in ascending original order.
    Subject count and every event time are unchanged.
    """
    keep = sorted(set(keep))
    if not keep:
        raise ValidationError("keep set must be nonempty")
    if keep[0] < 1 or keep[-1] > cohort.k:
        raise ValidationError(f"keep set must lie within 1..{cohort.k}")
    remap = {old: new for new, old in enumerate(keep, start=1)}
    subjects = []
    for s in cohort.subjects:
        new_event = remap.get(s.outcome.event, 0)
        if new_event == s.outcome.event:
            subjects.append(s)
        else:
            subjects.append(Subject(s.series, EventRecord(new_event, s.outcome.time)))
    return Cohort(
        subjects=tuple(subjects),
        k=len(keep),
        feature_names=cohort.feature_names,
        risk_names=tuple(cohort.risk_names[old - 1] for old in keep),
    )


def truncate_at(cohort: Cohort, t: float) -> Cohort:
    """Restrict to subjects still at risk after ``t`` and to data up to ``t``.

    Subjects whose event/censoring time is <= t are dropped; the rest keep
    only time steps with timestamp <= t.  May return an empty cohort.
    """
    if t < 0:
        raise ValidationError("truncation time must be >= 0")
    subjects = tuple(
        Subject(s.series.truncated(t), s.outcome)
        for s in cohort.subjects
        if s.outcome.time > t
    )
    return Cohort(
        subjects=subjects,
        k=cohort.k,
        feature_names=cohort.feature_names,
        risk_names=cohort.risk_names,
        allow_empty=True,
    )


def stratified_split(cohort: Cohort, fraction: float, rng: np.random.Generator):
    """Split into (rest, held-out) preserving each event's frequency to
    within one subject; ``fraction`` is the held-out share."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError("split fraction must lie strictly in (0, 1)")
    events = cohort.events()
    held = np.zeros(len(cohort), dtype=bool)
    for e in np.unique(events):
        idx = np.flatnonzero(events == e)
        n_held = int(round(idx.size * fraction))
        chosen = rng.permutation(idx)[:n_held]
        held[chosen] = True
    def _sub(mask):
        return Cohort(
            subjects=tuple(s for s, m in zip(cohort.subjects, mask) if m),
            k=cohort.k,
            feature_names=cohort.feature_names,
            risk_names=cohort.risk_names,
            allow_empty=True,
        )
    return _sub(~held), _sub(held)


# ---------------------------------------------------------------------------
# On-disk format: one JSON header line (k, d, names, static flags), then one
# JSON record per subject.  json round-trips doubles exactly via repr, so
# write -> read -> write is byte-identical.
# ---------------------------------------------------------------------------

_COHORT_MAGIC = "dcrkit-cohort-v1"


def _dump(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def atomic_write_text(path, text: str) -> None:
    """Write-temp-then-rename so readers never see a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".dcrkit-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_bytes(path, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".dcrkit-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cohort_to_text(cohort: Cohort) -> str:
    if len(cohort):
        static = cohort.subjects[0].series.static_mask
    else:
        static = np.zeros(cohort.d, dtype=bool)
    header = {
        "format": _COHORT_MAGIC,
        "k": cohort.k,
        "d": cohort.d,
        "feature_names": list(cohort.feature_names),
        "risk_names": list(cohort.risk_names),
        "static_mask": [int(b) for b in static],
    }
    lines = [_dump(header)]
    for s in cohort.subjects:
        lines.append(
            _dump(
                {
                    "timestamps": s.series.timestamps.tolist(),
                    "features": s.series.features.tolist(),
                    "missing": s.series.missing_mask.astype(int).tolist(),
                    "event": s.outcome.event,
                    "time": s.outcome.time,
                }
            )
        )
    return "\n".join(lines) + "\n"


def cohort_from_text(text: str) -> Cohort:
    lines = text.splitlines()
    if not lines:
        raise ValidationError("empty cohort file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ValidationError(f"bad cohort header: {exc}") from exc
    if header.get("format") != _COHORT_MAGIC:
        raise ValidationError("not a dcrkit cohort file")
    static = np.array(header["static_mask"], dtype=bool)
    subjects = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad record on line {lineno}: {exc}") from exc
        series = TimeSeries(
            features=np.array(rec["features"], dtype=np.float64),
            timestamps=np.array(rec["timestamps"], dtype=np.float64),
            static_mask=static,
            missing_mask=np.array(rec["missing"], dtype=bool),
        )
        subjects.append(Subject(series, EventRecord(int(rec["event"]), float(rec["time"]))))
    return Cohort(
        subjects=tuple(subjects),
        k=int(header["k"]),
        feature_names=tuple(header["feature_names"]),
        risk_names=tuple(header["risk_names"]),
        allow_empty=True,
    )


def write_cohort(cohort: Cohort, path) -> None:
    atomic_write_text(path, cohort_to_text(cohort))


def read_cohort(path) -> Cohort:
    with open(path) as fh:
        return cohort_from_text(fh.read())


def read_raw_stream(path) -> np.ndarray:
    """Read the ingest input format: a ``q seconds`` header line followed
    by one whitespace-separated row per second."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValidationError("stream header must be two integers: q seconds")
        try:
            q, seconds = int(header[0]), int(header[1])
        except ValueError as exc:
            raise ValidationError(f"bad stream header: {exc}") from exc
        try:
            data = np.loadtxt(fh, ndmin=2)
        except ValueError as exc:
            raise ValidationError(f"bad stream body: {exc}") from exc
    if data.shape != (seconds, q):
        raise ValidationError(
            f"stream body has shape {data.shape}, header declared ({seconds}, {q})"
        )
    return data
