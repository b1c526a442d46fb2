"""Dynamic evaluation metrics and the repeated-split experiment harness.

The concordance rule is the truncated time-dependent variant: at
prediction time t with horizon delta, the risk score for event j is the
predicted CIF value F_j(delta | z, t); a pair (a, b) is acceptable when a
experienced event j inside (t, t + delta] and b's observed time exceeds
a's.  Undefined cells (no acceptable pairs, or a single-class AUROC
cohort) raise instead of silently contributing 0.5, and the table
harness renders them as "n/a".

The AUROC label is the eventually observed outcome among subjects at
risk at t, restricted to the awaken/death classes; the horizon enters
through the scores only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, stratified_split, truncate_at
from .errors import UndefinedMetricError, ValidationError
from .prognosis import PredictionQuery, death_awaken_ratio

_log = logging.getLogger(__name__)


def c_index_scores(scores, events, times, event: int, t: float, delta: float) -> float:
    """Concordance over precomputed at-risk risk scores (higher = riskier).

    Acceptable pairs (a, b): ``events[a] == event`` with
    ``t < times[a] <= t + delta`` and ``times[b] > times[a]``; concordant
    when ``scores[a] > scores[b]``, ties count one half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    events = np.asarray(events, dtype=int)
    times = np.asarray(times, dtype=np.float64)
    anchors = np.flatnonzero(
        (events == event) & (times > t) & (times <= t + delta)
    )
    num = 0.0
    den = 0
    for a in anchors:
        later = times > times[a]
        den += int(later.sum())
        num += np.sum(scores[a] > scores[later]) + 0.5 * np.sum(scores[a] == scores[later])
    if den == 0:
        raise UndefinedMetricError(
            f"no acceptable pairs for event {event} at (t={t}, delta={delta})"
        )
    return float(num / den)


def c_index(model, test: Cohort, event: int, t: float, delta: float) -> float:
    """Truncated per-event concordance of a model on an evaluation cohort."""
    at_risk = truncate_at(test, t)
    if len(at_risk) == 0:
        raise UndefinedMetricError(f"no subjects at risk at t={t}")
    scores = np.array(
        [model.predict_cif(s.series, t).value_at(event, delta) for s in at_risk.subjects]
    )
    return c_index_scores(scores, at_risk.events(), at_risk.times(), event, t, delta)


def _rank_auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = ranks[labels].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def restricted_scores(model, test: Cohort, t: float, delta: float):
    """Classifier ratio scores and death labels on the restricted cohort:
    at risk at t, eventual observed outcome in {awaken, death}."""
    at_risk = truncate_at(test, t)
    keep = [s for s in at_risk.subjects if s.outcome.event in (1, 2)]
    if not keep:
        raise UndefinedMetricError(f"restricted cohort at t={t} is empty")
    q = PredictionQuery(t=t, delta=delta)
    scores = np.array([death_awaken_ratio(model, s.series, q) for s in keep])
    labels = np.array([s.outcome.event == 2 for s in keep])
    return scores, labels


def auroc(model, test: Cohort, t: float, delta: float) -> float:
    """AUROC of the death-vs-awaken ratio classifier; death is positive."""
    scores, labels = restricted_scores(model, test, t, delta)
    return _rank_auroc(scores, labels)


def roc_curve(scores, labels):
    """Threshold sweep over distinct scores: list of (FPR, TPR) points
    sorted by FPR, beginning at (0, 0) and ending at (1, 1).  Predicting
    positive means score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs both classes present")
    points = [(0.0, 0.0)]
    for thr in np.unique(scores)[::-1]:
        positive = scores >= thr
        tpr = float(np.sum(positive & labels) / n_pos)
        fpr = float(np.sum(positive & ~labels) / n_neg)
        if (fpr, tpr) != points[-1]:
            points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def trapezoid_area(points) -> float:
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(np.trapezoid(ys, xs))


# ---------------------------------------------------------------------------
# Repeated-split experiment tables
# ---------------------------------------------------------------------------

PREDICTION_TIMES = (6.0, 12.0)
HORIZONS = (24.0, 48.0, 72.0)


@dataclass(frozen=True)
class Cell:
    """One (model, event/-, t, delta) table entry across repeats."""

    values: tuple
    failed: int

    @property
    def defined(self) -> bool:
        return len(self.values) > 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def sd(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    def render(self, bold: bool) -> str:
        if not self.defined:
            return f"n/a ({self.failed} failed)"
        text = f"{self.mean:.3f} +/- {self.sd:.3f}"
        return f"*{text}*" if bold else text


@dataclass(frozen=True)
class ExperimentReport:
    """c-index and AUROC tables over repeated stratified splits."""

    model_names: tuple
    risk_names: tuple
    times: tuple
    horizons: tuple
    cindex: dict  # (model, event, t, delta) -> Cell
    auroc: dict  # (model, t, delta) -> Cell
    n_splits: int
    roc_curves: dict = None  # (model, t, delta) -> list of per-split curves

    def best_cindex(self, event, t, delta):
        means = {
            name: self.cindex[(name, event, t, delta)].mean
            for name in self.model_names
            if self.cindex[(name, event, t, delta)].defined
        }
        return max(means, key=means.get) if means else None

    def best_auroc(self, t, delta):
        means = {
            name: self.auroc[(name, t, delta)].mean
            for name in self.model_names
            if self.auroc[(name, t, delta)].defined
        }
        return max(means, key=means.get) if means else None


def experiment_tables(models, cohort: Cohort, splits: int = 5, seed: int = 0,
                      times=PREDICTION_TIMES, horizons=HORIZONS,
                      collect_roc=()) -> ExperimentReport:
    """Train/evaluate every model spec over ``splits`` stratified 80/20
    splits and aggregate mean +/- sd per cell.

    ``models`` is a sequence of objects exposing ``name`` and
    ``fit(cohort, seed) -> model`` (see ``models.store.ModelSpec``).
    ``collect_roc`` lists (t, delta) pairs whose per-split ROC curves are
    kept for plotting.
    """
    if splits < 1:
        raise ValidationError("need at least one split")
    names = [spec.name for spec in models]
    if len(set(names)) != len(names):
        raise ValidationError("model names must be unique")
    cvals = {
        (name, j, t, dl): []
        for name in names
        for j in range(1, cohort.k + 1)
        for t in times
        for dl in horizons
    }
    cfail = {key: 0 for key in cvals}
    avals = {(name, t, dl): [] for name in names for t in times for dl in horizons}
    afail = {key: 0 for key in avals}
    rocs = {(name, t, dl): [] for name in names for t, dl in collect_roc}

    for rep in range(splits):
        rng = np.random.default_rng([seed, 3, rep])
        train_c, test_c = stratified_split(cohort, 0.2, rng)
        if len(train_c) == 0 or len(test_c) == 0:
            raise ValidationError("cohort too small for an 80/20 split")
        for spec in models:
            model = spec.fit(train_c, seed * 101 + rep)
            for t in times:
                for dl in horizons:
                    for j in range(1, cohort.k + 1):
                        key = (spec.name, j, t, dl)
                        try:
                            cvals[key].append(c_index(model, test_c, j, t, dl))
                        except UndefinedMetricError as exc:
                            cfail[key] += 1
                            _log.info("repeat %d: %s", rep, exc)
                    akey = (spec.name, t, dl)
                    if cohort.k >= 2:
                        try:
                            avals[akey].append(auroc(model, test_c, t, dl))
                        except UndefinedMetricError as exc:
                            afail[akey] += 1
                            _log.info("repeat %d: %s", rep, exc)
                    else:
                        afail[akey] += 1
            if cohort.k >= 2:
                for t, dl in collect_roc:
                    try:
                        scores, labels = restricted_scores(model, test_c, t, dl)
                        rocs[(spec.name, t, dl)].append(roc_curve(scores, labels))
                    except UndefinedMetricError as exc:
                        _log.info("repeat %d roc: %s", rep, exc)

    return ExperimentReport(
        model_names=tuple(names),
        risk_names=cohort.risk_names,
        times=tuple(times),
        horizons=tuple(horizons),
        cindex={k: Cell(tuple(v), cfail[k]) for k, v in cvals.items()},
        auroc={k: Cell(tuple(v), afail[k]) for k, v in avals.items()},
        n_splits=splits,
        roc_curves=rocs,
    )


def render_report_text(report: ExperimentReport, title: str) -> str:
    """Human-readable tables; the per-cell best mean is starred."""
    lines = [title, "=" * len(title), ""]
    header = ["model", "event", "t"] + [f"delta={dl:g}" for dl in report.horizons]
    lines.append("c-index (mean +/- sd over {} repeats)".format(report.n_splits))
    lines.append(" | ".join(header))
    for name in report.model_names:
        for j, risk in enumerate(report.risk_names, start=1):
            for t in report.times:
                row = [name, risk, f"{t:g}"]
                for dl in report.horizons:
                    best = report.best_cindex(j, t, dl)
                    row.append(report.cindex[(name, j, t, dl)].render(best == name))
                lines.append(" | ".join(row))
    lines.append("")
    if any(cell.defined for cell in report.auroc.values()):
        lines.append("AUROC, death vs awaken (mean +/- sd over {} repeats)".format(report.n_splits))
        lines.append(" | ".join(["model", "t"] + [f"delta={dl:g}" for dl in report.horizons]))
        for name in report.model_names:
            for t in report.times:
                row = [name, f"{t:g}"]
                for dl in report.horizons:
                    best = report.best_auroc(t, dl)
                    row.append(report.auroc[(name, t, dl)].render(best == name))
                lines.append(" | ".join(row))
        lines.append("")
    return "\n".join(lines)


def render_report_tsv(report: ExperimentReport) -> str:
    """Machine-readable cells: one line per (metric, model, event, t, delta)."""
    lines = ["metric\tmodel\tevent\tt\tdelta\tmean\tsd\tn_defined\tn_failed\tbest"]
    for name in report.model_names:
        for j, risk in enumerate(report.risk_names, start=1):
            for t in report.times:
                for dl in report.horizons:
                    cell = report.cindex[(name, j, t, dl)]
                    best = int(report.best_cindex(j, t, dl) == name)
                    mean = f"{cell.mean:.6f}" if cell.defined else "n/a"
                    sd = f"{cell.sd:.6f}" if cell.defined else "n/a"
                    lines.append(
                        f"cindex\t{name}\t{risk}\t{t:g}\t{dl:g}\t{mean}\t{sd}"
                        f"\t{len(cell.values)}\t{cell.failed}\t{best}"
                    )
    for name in report.model_names:
        for t in report.times:
            for dl in report.horizons:
                cell = report.auroc[(name, t, dl)]
                best = int(report.best_auroc(t, dl) == name)
                mean = f"{cell.mean:.6f}" if cell.defined else "n/a"
                sd = f"{cell.sd:.6f}" if cell.defined else "n/a"
                lines.append(
                    f"auroc\t{name}\t-\t{t:g}\t{dl:g}\t{mean}\t{sd}"
                    f"\t{len(cell.values)}\t{cell.failed}\t{best}"
                )
    return "\n".join(lines) + "\n"
