"""Command-line front end.

    dcrkit simulate --config sim.cfg --out cohort.jsonl
    dcrkit ingest   --input stream.txt --out cohort.jsonl
    dcrkit train    --cohort cohort.jsonl --kind deephit --config train.cfg --out model.bin
    dcrkit predict  --model model.bin --cohort cohort.jsonl --t 6 --deltas 24,48,72 --out preds.tsv
    dcrkit evaluate --cohort cohort.jsonl --config eval.cfg --out-dir results/
    dcrkit ablate   --cohort cohort.jsonl --config eval.cfg --out-dir ablation/
    dcrkit plot     --kind heatmap --input matrix.txt --out figure.svg

Exit codes: 0 success, 2 input/config error, 3 training error, 4
model/cohort incompatibility.  Every command is deterministic given its
inputs, config, and seed; all file writes are atomic.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import metrics, prognosis, svg
from .cohort import (
    atomic_write_text,
    ingest_stream,
    read_cohort,
    read_raw_stream,
    relabel_for_ablation,
    summary_feature_names,
    write_cohort,
    Cohort,
    EventRecord,
    Subject,
)
from .config import Config, load_generative_config, load_hyper_grid, load_protocol
from .errors import (
    CompatibilityError,
    DcrkitError,
    TrainingError,
    UndefinedMetricError,
    ValidationError,
)
from .models.store import ModelSpec, load_model, save_model
from .simulator import simulate

_log = logging.getLogger("dcrkit")

ABLATION_SETTINGS = (("3-risk", (1, 2, 3)), ("2-risk", (1, 2)), ("1-risk", (1,)))


def _echo(cfg: Config) -> None:
    print(cfg.echo(), file=sys.stderr)


def _floats_arg(text: str) -> np.ndarray:
    try:
        values = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise ValidationError(f"bad numeric list {text!r}: {exc}") from exc
    if values.size == 0:
        raise ValidationError("expected a nonempty comma-separated list")
    return values


def cmd_simulate(args) -> int:
    cfg = Config.from_file(args.config)
    gen, n = load_generative_config(cfg)
    if args.seed is not None:
        gen = type(gen)(**{**gen.__dict__, "seed": args.seed})
    _echo(cfg)
    cohort = simulate(gen, n)
    write_cohort(cohort, args.out)
    _log.info("wrote %d subjects to %s", len(cohort), args.out)
    return 0


def cmd_ingest(args) -> int:
    raw = read_raw_stream(args.input)
    names = args.names.split(",") if args.names else None
    series = ingest_stream(raw, feature_names=names)
    time = args.time if args.time is not None else float(series.timestamps[-1])
    subject = Subject(series, EventRecord(args.event, time))
    base_names = names or [f"f{i}" for i in range(raw.shape[1])]
    cohort = Cohort(
        subjects=(subject,),
        k=max(args.event, 1),
        feature_names=tuple(summary_feature_names(base_names)),
        risk_names=tuple(f"risk{j}" for j in range(1, max(args.event, 1) + 1)),
    )
    write_cohort(cohort, args.out)
    _log.info("ingested %d hourly steps x %d columns", series.n_steps, series.width)
    return 0


def cmd_train(args) -> int:
    cfg = Config.from_file(args.config)
    cohort = read_cohort(args.cohort)
    if len(cohort) == 0:
        raise ValidationError("cohort file has no subjects")
    seed = args.seed if args.seed is not None else cfg.get_int("seed", 0)
    if args.kind == "finegray":
        neural_keys = [
            key for key in ("learning_rates", "alphas", "betas", "dropouts",
                            "hidden", "max_epochs", "batch_size")
            if cfg.has(key)
        ]
        if neural_keys:
            _log.info(
                "finegray has no hyperparameters; ignoring %s", ", ".join(neural_keys)
            )
        spec = ModelSpec(kind="finegray")
    else:
        spec = ModelSpec(
            kind=args.kind,
            hyper_grid=load_hyper_grid(cfg),
            protocol=load_protocol(cfg),
        )
    _echo(cfg)
    model, log_lines = spec.fit_with_log(cohort, seed)
    save_model(model, args.out)
    atomic_write_text(args.out + ".log", "\n".join(log_lines) + "\n")
    _log.info("wrote model to %s (log: %s.log)", args.out, args.out)
    return 0


def _check_compat(model, cohort: Cohort) -> None:
    if model.d != cohort.d or model.k != cohort.k:
        raise CompatibilityError(
            f"model expects d={model.d}, k={model.k}; cohort has "
            f"d={cohort.d}, k={cohort.k}"
        )


def cmd_predict(args) -> int:
    model = load_model(args.model)
    cohort = read_cohort(args.cohort)
    _check_compat(model, cohort)
    deltas = _floats_arg(args.deltas)
    if np.any(deltas <= 0) or np.any(np.diff(deltas) <= 0):
        raise ValidationError("--deltas must be positive and ascending")
    if args.variant == "alpha" and args.alpha is None:
        raise ValidationError("--variant alpha requires --alpha")
    if args.variant == "alpha":
        assumption = prognosis.AlphaAssumption(args.alpha)

    if args.heatmap_subject is not None:
        idx = args.heatmap_subject
        if not 0 <= idx < len(cohort):
            raise ValidationError(f"--heatmap-subject {idx} out of range")
        t_values = _floats_arg(args.t_values)
        matrix = prognosis.heatmap_grid(
            model, cohort.subjects[idx].series, t_values, deltas,
            variant=args.variant, alpha=args.alpha,
        )
        atomic_write_text(args.out, svg.heatmap_matrix_text(matrix, t_values, deltas))
        _log.info("wrote heat-map matrix for subject %d to %s", idx, args.out)
        return 0

    at_risk = [
        (i, s) for i, s in enumerate(cohort.subjects) if s.outcome.time > args.t
    ]
    if not at_risk:
        raise ValidationError(f"no subjects at risk at t={args.t}")
    header = ["subject"]
    for dl in deltas:
        header += [f"cif{j}_{dl:g}" for j in range(1, model.k + 1)]
        if args.variant == "conditional" and model.k >= 2:
            header += [f"p_awaken_{dl:g}", f"p_death_{dl:g}"]
        if args.variant == "alpha":
            header += [f"p_awaken_alpha_{dl:g}", f"p_death_alpha_{dl:g}"]
    lines = ["\t".join(header)]
    for i, subject in at_risk:
        cif = model.predict_cif(subject.series, args.t)
        row = [str(i)]
        for dl in deltas:
            row += [repr(cif.value_at(j, dl)) for j in range(1, model.k + 1)]
            q = prognosis.PredictionQuery(t=args.t, delta=float(dl))
            if args.variant == "conditional" and model.k >= 2:
                row.append(repr(prognosis.p_awaken(model, subject.series, q)))
                row.append(repr(prognosis.p_death(model, subject.series, q)))
            if args.variant == "alpha":
                row.append(
                    repr(prognosis.p_awaken_unconditional(model, subject.series, q, assumption))
                )
                row.append(
                    repr(
                        prognosis.p_death_unconditional(
                            model, subject.series, q, assumption, args.alpha_death
                        )
                    )
                )
        lines.append("\t".join(row))
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    _log.info("wrote predictions for %d subjects to %s", len(at_risk), args.out)
    return 0


def _model_specs(cfg: Config, default_kinds) -> list:
    kinds = cfg.get_strs("models", list(default_kinds))
    grid = load_hyper_grid(cfg)
    protocol = load_protocol(cfg)
    return [
        ModelSpec(kind=kind, hyper_grid=grid if kind != "finegray" else (),
                  protocol=protocol)
        for kind in kinds
    ]


def _write_report(report, out_dir: str, tag: str) -> None:
    atomic_write_text(
        os.path.join(out_dir, f"{tag}_report.txt"),
        metrics.render_report_text(report, f"{tag} results"),
    )
    atomic_write_text(
        os.path.join(out_dir, f"{tag}_cells.tsv"), metrics.render_report_tsv(report)
    )
    for (name, t, dl), curves in (report.roc_curves or {}).items():
        if curves:
            path = os.path.join(out_dir, f"{tag}_roc_{name}_t{t:g}_d{dl:g}.tsv")
            atomic_write_text(path, svg.roc_points_text(curves))


def cmd_evaluate(args) -> int:
    cfg = Config.from_file(args.config)
    cohort = read_cohort(args.cohort)
    seed = args.seed if args.seed is not None else cfg.get_int("seed", 0)
    splits = cfg.get_int("splits", 5, minimum=1)
    times = tuple(cfg.get_floats("times", list(metrics.PREDICTION_TIMES), positive=True))
    horizons = tuple(cfg.get_floats("horizons", list(metrics.HORIZONS), positive=True))
    specs = _model_specs(cfg, ("finegray", "deephit", "ddrsa"))
    _echo(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    report = metrics.experiment_tables(
        specs, cohort, splits=splits, seed=seed, times=times, horizons=horizons,
        collect_roc=[(t, horizons[0]) for t in times],
    )
    _write_report(report, args.out_dir, "evaluate")
    _log.info("wrote evaluation tables to %s", args.out_dir)
    return 0


def cmd_ablate(args) -> int:
    cfg = Config.from_file(args.config)
    cohort = read_cohort(args.cohort)
    if cohort.k != 3:
        raise ValidationError(f"ablation expects a 3-risk cohort, got k={cohort.k}")
    seed = args.seed if args.seed is not None else cfg.get_int("seed", 0)
    splits = cfg.get_int("splits", 5, minimum=1)
    times = tuple(cfg.get_floats("times", list(metrics.PREDICTION_TIMES), positive=True))
    horizons = tuple(cfg.get_floats("horizons", list(metrics.HORIZONS), positive=True))
    specs = _model_specs(cfg, ("finegray", "deephit"))
    _echo(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    for tag, keep in ABLATION_SETTINGS:
        sub = relabel_for_ablation(cohort, set(keep))
        report = metrics.experiment_tables(
            specs, sub, splits=splits, seed=seed, times=times, horizons=horizons,
            collect_roc=[(t, horizons[0]) for t in times] if sub.k >= 2 else (),
        )
        _write_report(report, args.out_dir, tag)
        _log.info("wrote %s tables to %s", tag, args.out_dir)
    return 0


def cmd_plot(args) -> int:
    with open(args.input) as fh:
        text = fh.read()
    if args.kind == "heatmap":
        matrix, t_values, deltas = svg.parse_heatmap_matrix(text)
        out = svg.heatmap_svg(matrix, t_values, deltas, title=args.title)
    else:
        curves = svg.parse_roc_points(text)
        out = svg.roc_svg(curves, title=args.title)
    atomic_write_text(args.out, out)
    _log.info("wrote %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcrkit", description="dynamic competing-risks survival toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("ingest", help="hourly summaries from a per-second stream")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--event", type=int, default=0)
    p.add_argument("--time", type=float, default=None)
    p.add_argument("--names", default=None, help="comma-separated input feature names")
    p.add_argument("--seed", type=int, default=None, help="unused; accepted for uniformity")
    p.set_defaults(run=cmd_ingest)

    p = sub.add_parser("train", help="fit a model on a cohort file")
    p.add_argument("--cohort", required=True)
    p.add_argument("--kind", required=True, choices=("finegray", "deephit", "ddrsa"))
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("predict", help="per-subject CIFs and classifier probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--deltas", default="24,48,72")
    p.add_argument("--variant", choices=("conditional", "alpha"), default="conditional")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--alpha-death", type=float, default=None)
    p.add_argument("--heatmap-subject", type=int, default=None,
                   help="emit the heat-map matrix for one subject instead of the table")
    p.add_argument("--t-values", default="1,2,3,4,5,6,7,8,9,10,11,12")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="unused; accepted for uniformity")
    p.set_defaults(run=cmd_predict)

    p = sub.add_parser("evaluate", help="repeated-split c-index and AUROC tables")
    p.add_argument("--cohort", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(run=cmd_evaluate)

    p = sub.add_parser("ablate", help="3-risk / 2-risk / 1-risk comparison")
    p.add_argument("--cohort", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(run=cmd_ablate)

    p = sub.add_parser("plot", help="render a heat map or ROC figure as SVG")
    p.add_argument("--kind", required=True, choices=("heatmap", "roc"))
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title", default="dcrkit")
    p.add_argument("--seed", type=int, default=None, help="unused; accepted for uniformity")
    p.set_defaults(run=cmd_plot)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (ValidationError, UndefinedMetricError) as exc:
        _log.error("%s", exc)
        return 2
    except TrainingError as exc:
        _log.error("training failed: %s", exc)
        return 3
    except CompatibilityError as exc:
        _log.error("%s", exc)
        return 4
    except DcrkitError as exc:  # pragma: no cover - catch-all for subclasses
        _log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
