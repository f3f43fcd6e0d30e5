"""Command-line front end.

Subcommands
    gen-data    write a synthetic dataset to <out>/dataset.txt
    train       fit a plain student; writes model_init.txt, model.txt,
                history.csv (epoch,loss) and metrics.csv
    distill     fit a teacher, then a student against it; writes
                teacher.txt, student.txt, history.csv, metrics.csv
    self-ld     one self-distillation round; writes base.txt,
                distilled.txt, metrics.csv
    ta-sweep    every teacher/assistant route; per-route record.txt and
                curve.csv plus summary.csv
    temp-sweep  distill at several temperatures; baseline.csv (one no-
                distillation row) and sweep.csv (one row per temperature)
    nms-demo    suppression contrast on redundant views; nms.csv
    eval        score a saved model on a dataset; metrics.csv

Settings resolve in order: built-in defaults, then --config file, then
``BOXDISTILL_*`` environment variables, then flags. Environment names
mirror the flags: BOXDISTILL_CONFIG, BOXDISTILL_SEED, BOXDISTILL_OUT,
BOXDISTILL_TAU, BOXDISTILL_NMS_THR, BOXDISTILL_EPOCHS, BOXDISTILL_SIGMA,
BOXDISTILL_LR.

All CSV output uses fixed column orders and full-precision floats, so a
rerun with the same config and seed is byte-identical. Metrics tables
share the columns (model|temperature|path, mean_iou, mean_ap, strict_ap,
ap50..ap95 where applicable).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from . import pipelines
from .config import ConfigParseError, ExperimentConfig, load_config, save_config
from .distributions import EdgeSupport
from .estimator import ToyDetector
from .metrics import AP_THRESHOLDS, DetectionMetrics
from .network import load_params, save_params
from .scenes import generate_dataset, load_dataset, save_dataset
from .seeding import derive_seed
from .validation import ConfigurationError

ENV_PREFIX = "BOXDISTILL_"

# flag name -> (config field, parser)
_OVERRIDES = {
    "seed": ("seed", int),
    "out": ("out_dir", str),
    "tau": ("temperature", float),
    "nms_thr": ("nms_threshold", float),
    "epochs": ("epochs", int),
    "sigma": ("sigma", float),
    "lr": ("lr", float),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxdistill",
        description="Train and distill toy box detectors with distributional edge heads.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, brief in (
        ("gen-data", "write a synthetic dataset"),
        ("train", "fit a plain student"),
        ("distill", "fit a teacher and distill a student from it"),
        ("self-ld", "one round of self-distillation"),
        ("ta-sweep", "run every teacher/assistant route"),
        ("temp-sweep", "distill across a temperature list"),
        ("nms-demo", "suppression contrast on redundant object views"),
        ("eval", "score a saved model"),
    ):
        cmd = sub.add_parser(name, help=brief)
        cmd.add_argument("--config", type=str, default=None, help="config file path")
        cmd.add_argument("--seed", type=int, default=None, help="top-level seed")
        cmd.add_argument("--out", type=str, default=None, help="output directory")
        cmd.add_argument("--tau", type=float, default=None, help="distillation temperature")
        cmd.add_argument("--nms-thr", type=float, default=None, help="suppression overlap threshold")
        cmd.add_argument("--epochs", type=int, default=None, help="training epochs")
        cmd.add_argument("--sigma", type=float, default=None, help="feature noise level")
        cmd.add_argument("--lr", type=float, default=None, help="learning rate")
        if name == "eval":
            cmd.add_argument("--model", type=str, required=True, help="saved parameter file")
            cmd.add_argument("--data", type=str, default=None, help="dataset file to score on")
        if name == "train":
            cmd.add_argument("--data", type=str, default=None, help="dataset file to train on")
    return parser


def _env(name: str) -> str | None:
    return os.environ.get(ENV_PREFIX + name.upper())


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Defaults, then config file, then environment, then flags."""
    config_path = args.config if args.config is not None else _env("config")
    config = load_config(config_path) if config_path else ExperimentConfig()
    for flag, (field, parse) in _OVERRIDES.items():
        value = getattr(args, flag)
        if value is None:
            raw = _env(flag)
            value = parse(raw) if raw is not None else None
        if value is not None:
            setattr(config, field, value)
    config.validate()
    return config


def _template(config: ExperimentConfig) -> ToyDetector:
    return ToyDetector(
        hidden_widths=config.student_widths,
        n_classes=config.n_classes,
        epochs=config.epochs,
        lr=config.lr,
        lr_decay_factor=config.lr_decay_factor,
        lr_decay_epoch=config.lr_decay_epoch,
        batch_size=config.batch_size,
        temperature=config.temperature,
        lambda_reg=config.lambda_reg,
        lambda_dfl=config.lambda_dfl,
        lambda_distill=config.lambda_distill,
        class_weight=config.class_weight,
        seed=config.seed,
    )


def _train_data(config: ExperimentConfig):
    return generate_dataset(
        config.n_train,
        config.sigma,
        derive_seed(config.seed, "train-data"),
        n_classes=config.n_classes,
        n_distractors=config.n_distractors,
    )


def _eval_data(config: ExperimentConfig):
    return generate_dataset(
        config.n_eval,
        config.sigma,
        derive_seed(config.seed, "eval-data"),
        n_classes=config.n_classes,
        n_distractors=config.n_distractors,
    )


def _fit_teacher(config: ExperimentConfig, template: ToyDetector, samples) -> ToyDetector:
    teacher = clone(template)
    teacher.set_params(
        hidden_widths=config.teacher_widths,
        seed=derive_seed(config.seed, "stage:teacher"),
        teacher=None,
        lambda_distill=None,
        epochs=config.teacher_epochs if config.teacher_epochs is not None else config.epochs,
    )
    return teacher.fit(samples)


def _out_dir(config: ExperimentConfig) -> Path:
    directory = Path(config.out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)] + [",".join(_fmt(cell) for cell in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


_METRIC_HEADER = ["mean_iou", "mean_ap", "strict_ap"] + [
    f"ap{int(t * 100)}" for t in AP_THRESHOLDS
]


def _metric_cells(metrics: DetectionMetrics) -> list[float]:
    return [metrics.mean_iou, metrics.mean_ap, metrics.strict_ap] + [
        metrics.ap_at[t] for t in AP_THRESHOLDS
    ]


def _write_metrics(path: Path, rows: list[tuple[str, DetectionMetrics]]) -> None:
    _write_csv(
        path,
        ["model"] + _METRIC_HEADER,
        [[name, *_metric_cells(m)] for name, m in rows],
    )


def _write_history(path: Path, history) -> None:
    _write_csv(path, ["epoch", "loss"], [[i, s.loss] for i, s in enumerate(history)])


# ----------------------------------------------------------------------
# Subcommand handlers. Each returns a process exit code.


def _cmd_gen_data(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    samples = _train_data(config)
    save_dataset(samples, out / "dataset.txt")
    print(f"wrote {len(samples)} samples to {out / 'dataset.txt'}")
    return 0


def _cmd_train(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    samples = load_dataset(args.data) if args.data else _train_data(config)
    model = _template(config)
    save_config(config, out / "resolved_config.txt")

    model.fit(samples)
    save_params(model.initial_params_, out / "model_init.txt")
    save_params(model.params_, out / "model.txt")
    _write_history(out / "history.csv", model.history_)
    metrics = model.evaluate(_eval_data(config))
    _write_metrics(out / "metrics.csv", [("student", metrics)])
    print(f"train: mean_iou={metrics.mean_iou:.4f} mean_ap={metrics.mean_ap:.4f}")
    return 0


def _cmd_distill(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    train = _train_data(config)
    held_out = _eval_data(config)
    template = _template(config)

    teacher = _fit_teacher(config, template, train)
    student = clone(template)
    student.set_params(seed=derive_seed(config.seed, "stage:student"), teacher=teacher)
    student.fit(train)

    save_params(teacher.params_, out / "teacher.txt")
    save_params(student.params_, out / "student.txt")
    _write_history(out / "history.csv", student.history_)
    _write_metrics(
        out / "metrics.csv",
        [("teacher", teacher.evaluate(held_out)), ("student", student.evaluate(held_out))],
    )
    print(f"distill: student mean_iou={student.evaluate(held_out).mean_iou:.4f}")
    return 0


def _cmd_self_ld(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    train = _train_data(config)
    held_out = _eval_data(config)
    base, distilled = pipelines.self_distill(_template(config), train)

    save_params(base.params_, out / "base.txt")
    save_params(distilled.params_, out / "distilled.txt")
    base_metrics = base.evaluate(held_out)
    new_metrics = distilled.evaluate(held_out)
    _write_metrics(out / "metrics.csv", [("base", base_metrics), ("distilled", new_metrics)])
    delta = new_metrics.mean_iou - base_metrics.mean_iou
    print(f"self-ld: mean_iou change {delta:+.4f}")
    return 0


def _cmd_ta_sweep(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    results = pipelines.ta_sweep(
        _template(config),
        config.teacher_widths,
        config.assistant_widths,
        count=config.n_train,
        eval_count=config.n_eval,
        sigma=config.sigma,
        n_distractors=config.n_distractors,
        head_epochs=config.teacher_epochs,
    )
    summary_rows = []
    for index, (path, record) in enumerate(results):
        route_dir = out / f"path_{index:02d}_{path.label.replace('>', '-')}"
        pipelines.save_run_record(record, route_dir)
        final = record.stages[-1].metrics
        summary_rows.append(
            [path.label, len(record.stages), final.mean_iou, final.mean_ap, final.strict_ap]
        )
    _write_csv(
        out / "summary.csv",
        ["path", "hops", "student_mean_iou", "student_mean_ap", "student_strict_ap"],
        summary_rows,
    )
    print(f"ta-sweep: {len(results)} routes written to {out}")
    return 0


def _cmd_temp_sweep(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    rows = pipelines.temperature_sweep(
        _template(config),
        config.teacher_widths,
        count=config.n_train,
        eval_count=config.n_eval,
        sigma=config.sigma,
        taus=config.taus,
        n_seeds=config.n_seeds,
        n_distractors=config.n_distractors,
        teacher_epochs=config.teacher_epochs,
    )
    header = ["temperature", "mean_iou", "mean_ap", "strict_ap"]
    baseline = [r for r in rows if r["temperature"] == "none"]
    sweep = [r for r in rows if r["temperature"] != "none"]
    _write_csv(out / "baseline.csv", header, [[r[k] for k in header] for r in baseline])
    _write_csv(out / "sweep.csv", header, [[r[k] for k in header] for r in sweep])
    print(f"temp-sweep: {len(sweep)} temperature rows written to {out / 'sweep.csv'}")
    return 0


def _cmd_nms_demo(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    train = _train_data(config)
    template = _template(config)

    baseline = clone(template)
    baseline.set_params(seed=derive_seed(config.seed, "stage:student"), teacher=None)
    baseline.fit(train)
    teacher = _fit_teacher(config, template, train)
    distilled = clone(template)
    distilled.set_params(seed=derive_seed(config.seed, "stage:student"), teacher=teacher)
    distilled.fit(train)

    rows = pipelines.nms_contrast(
        baseline,
        distilled,
        sigma=config.sigma,
        seed=derive_seed(config.seed, "nms-views"),
        thresholds=(config.nms_threshold, 0.95),
        n_distractors=config.n_distractors,
    )
    header = ["model", "nms_threshold", "boxes_in", "boxes_kept", "kept_per_object", "mean_best_iou"]
    _write_csv(out / "nms.csv", header, [[r[k] for k in header] for r in rows])
    print(f"nms-demo: {len(rows)} rows written to {out / 'nms.csv'}")
    return 0


def _cmd_eval(args, config: ExperimentConfig) -> int:
    out = _out_dir(config)
    params = load_params(args.model)
    support = EdgeSupport(0.0, 16.0, params.n_bins)
    model = ToyDetector.from_fitted_params(params, support, temperature=config.temperature)
    samples = load_dataset(args.data) if args.data else _eval_data(config)
    metrics = model.evaluate(samples)
    _write_metrics(out / "metrics.csv", [("model", metrics)])
    detections = model.detect(samples, nms_threshold=config.nms_threshold)
    print(
        f"eval: mean_iou={metrics.mean_iou:.4f} mean_ap={metrics.mean_ap:.4f} "
        f"kept={len(detections)}/{len(samples)}"
    )
    return 0


_HANDLERS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "distill": _cmd_distill,
    "self-ld": _cmd_self_ld,
    "ta-sweep": _cmd_ta_sweep,
    "temp-sweep": _cmd_temp_sweep,
    "nms-demo": _cmd_nms_demo,
    "eval": _cmd_eval,
}


def dispatch(argv=None) -> int:
    """Parse argv and run one subcommand; returns the process exit code
    instead of raising SystemExit, so it is callable from tests."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        config = resolve_config(args)
        return _HANDLERS[args.command](args, config)
    except (ConfigurationError, ConfigParseError, NotFittedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
