"""Distillation pipelines.

Single-hop teacher to student distillation, one-round self-distillation,
enumeration of teacher-assistant paths, multi-hop sequence runs with
recorded curves, and the sweep protocols the command line exposes.

Seeds inside a pipeline are derived from the template's seed and the stage
*role name* (teacher, assistant1, ..., student), so the student stage of
two different paths shares its init and shuffling streams and comparisons
between paths are paired.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import clone

from .estimator import EpochStats, ToyDetector
from .geometry import iou
from .metrics import DetectionMetrics
from .scenes import SceneSample, generate_dataset, generate_object_views
from .seeding import derive_seed
from .validation import ConfigurationError


@dataclass(frozen=True)
class TAPath:
    """One distillation route from the big model down to the student."""

    names: tuple[str, ...]
    widths: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.widths) or len(self.names) < 2:
            raise ValueError("a path needs matching names and widths for 2+ stages")

    @property
    def label(self) -> str:
        return ">".join(self.names)

    def __len__(self) -> int:
        return len(self.names)


def _capacity(widths: Sequence[int]) -> int:
    # Total hidden units; the ladder orders models by this.
    return int(sum(widths))


def enumerate_ta_paths(
    teacher_widths: Sequence[int],
    assistant_widths: Sequence[Sequence[int]],
    student_widths: Sequence[int],
) -> list[TAPath]:
    """All 2**m routes through m assistants, ordered by the binary mask of
    included assistants (direct teacher-to-student first, full chain last).

    The ladder teacher, assistants..., student must be strictly decreasing
    in capacity.
    """
    teacher = tuple(int(w) for w in teacher_widths)
    assistants = [tuple(int(w) for w in a) for a in assistant_widths]
    student = tuple(int(w) for w in student_widths)
    ladder = [teacher, *assistants, student]
    capacities = [_capacity(w) for w in ladder]
    if any(later >= earlier for earlier, later in zip(capacities, capacities[1:])):
        raise ConfigurationError(
            f"model ladder must strictly decrease in capacity, got {capacities}"
        )
    m = len(assistants)
    names = [f"assistant{i + 1}" for i in range(m)]
    paths = []
    for mask in range(2**m):
        chosen = [i for i in range(m) if mask >> i & 1]
        paths.append(
            TAPath(
                names=("teacher", *(names[i] for i in chosen), "student"),
                widths=(teacher, *(assistants[i] for i in chosen), student),
            )
        )
    return paths


@dataclass
class StageRecord:
    """Outcome of training one model inside a sequence."""

    name: str
    hidden_widths: tuple[int, ...]
    metrics: DetectionMetrics
    history: list[EpochStats] = field(default_factory=list)


@dataclass
class RunRecord:
    """Everything a multi-hop run produced, ready for serialization."""

    path_label: str
    head: StageRecord
    stages: list[StageRecord]
    config_snapshot: str
    wall_time_s: float


def _stage_estimator(
    template: ToyDetector,
    widths: Sequence[int],
    role: str,
    *,
    teacher: ToyDetector | None,
    epochs: int | None = None,
) -> ToyDetector:
    estimator = clone(template)
    estimator.set_params(
        hidden_widths=tuple(widths),
        seed=derive_seed(int(template.seed), f"stage:{role}"),
        teacher=teacher,
    )
    if teacher is None:
        # Head stages train plainly no matter what the template asks for.
        estimator.set_params(lambda_distill=None)
    if epochs is not None:
        estimator.set_params(epochs=int(epochs))
    return estimator


def distill_student(
    teacher: ToyDetector,
    student_template: ToyDetector,
    samples: Sequence[SceneSample],
    eval_samples: Sequence[SceneSample] | None = None,
) -> ToyDetector:
    """Fit a fresh copy of ``student_template`` against ground truth plus
    the fitted teacher's distributions; the teacher itself is untouched."""
    student = clone(student_template)
    student.set_params(teacher=teacher)
    return student.fit(samples, eval_samples)


def self_distill(
    template: ToyDetector,
    samples: Sequence[SceneSample],
    eval_samples: Sequence[SceneSample] | None = None,
) -> tuple[ToyDetector, ToyDetector]:
    """One self-distillation round.

    Fits a plain (teacher-free) copy of the template, then retrains a fresh
    same-capacity model (a newly seeded init) with the first model as
    teacher. Returns ``(base, distilled)``.
    """
    base = clone(template)
    base.set_params(teacher=None, lambda_distill=None)
    base.fit(samples, eval_samples)
    student = clone(template)
    student.set_params(
        teacher=base, seed=derive_seed(int(template.seed), "self-distilled")
    )
    return base, student.fit(samples, eval_samples)


def run_ta_sequence(
    path: TAPath,
    template: ToyDetector,
    samples: Sequence[SceneSample],
    eval_samples: Sequence[SceneSample],
    *,
    head_epochs: int | None = None,
) -> RunRecord:
    """Train the head model plainly, then distill stage by stage along the
    path; each hop's teacher is the immediately preceding model."""
    start = time.perf_counter()

    head_est = _stage_estimator(
        template, path.widths[0], path.names[0], teacher=None, epochs=head_epochs
    )
    head_est.fit(samples, eval_samples)
    head = StageRecord(
        path.names[0], tuple(path.widths[0]), head_est.evaluate(eval_samples), head_est.history_
    )

    previous = head_est
    stages: list[StageRecord] = []
    for name, widths in zip(path.names[1:], path.widths[1:]):
        estimator = _stage_estimator(template, widths, name, teacher=previous)
        estimator.fit(samples, eval_samples)
        stages.append(
            StageRecord(name, tuple(widths), estimator.evaluate(eval_samples), estimator.history_)
        )
        previous = estimator

    snapshot = ", ".join(
        f"{key}={value!r}" for key, value in sorted(template.get_params(deep=False).items())
    )
    return RunRecord(
        path_label=path.label,
        head=head,
        stages=stages,
        config_snapshot=snapshot,
        wall_time_s=time.perf_counter() - start,
    )


def _format_metrics(metrics: DetectionMetrics) -> str:
    parts = [f"mean_iou={metrics.mean_iou!r}", f"mean_ap={metrics.mean_ap!r}"]
    parts += [f"ap{int(t * 100)}={metrics.ap_at[t]!r}" for t in sorted(metrics.ap_at)]
    return " ".join(parts)


def save_run_record(record: RunRecord, directory) -> None:
    """Write ``record.txt`` (stages and metrics) and ``curve.csv``
    (per-epoch loss and eval metrics) into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    lines = [
        f"path: {record.path_label}",
        f"config: {record.config_snapshot}",
        f"wall_time_s: {record.wall_time_s:.3f}",
        f"stages: {len(record.stages)}",
    ]
    for stage in [record.head, *record.stages]:
        lines.append(
            f"stage {stage.name} widths={'x'.join(map(str, stage.hidden_widths))} "
            + _format_metrics(stage.metrics)
        )
    (directory / "record.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    rows = ["stage,epoch,loss,mean_iou,mean_ap"]
    for stage in [record.head, *record.stages]:
        for epoch, stats in enumerate(stage.history):
            mean_iou = "" if stats.mean_iou is None else repr(stats.mean_iou)
            mean_ap = "" if stats.mean_ap is None else repr(stats.mean_ap)
            rows.append(f"{stage.name},{epoch},{stats.loss!r},{mean_iou},{mean_ap}")
    (directory / "curve.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# Experiment protocols.


def _paired_data(
    repeat_seed: int,
    count: int,
    eval_count: int,
    sigma: float,
    *,
    n_classes: int,
    n_distractors: int,
) -> tuple[list[SceneSample], list[SceneSample]]:
    train = generate_dataset(
        count,
        sigma,
        derive_seed(repeat_seed, "train-data"),
        n_classes=n_classes,
        n_distractors=n_distractors,
    )
    held_out = generate_dataset(
        eval_count,
        sigma,
        derive_seed(repeat_seed, "eval-data"),
        n_classes=n_classes,
        n_distractors=n_distractors,
    )
    return train, held_out


def temperature_sweep(
    template: ToyDetector,
    teacher_widths: Sequence[int],
    *,
    count: int,
    eval_count: int,
    sigma: float,
    taus: Iterable[float] = (1.0, 5.0, 10.0, 15.0, 20.0),
    n_seeds: int = 3,
    n_distractors: int = 3,
    teacher_epochs: int | None = None,
) -> list[dict]:
    """Distill at several temperatures against a shared per-seed teacher.

    Returns one row per temperature plus a leading no-distillation baseline
    row; metric columns are averaged over ``n_seeds`` paired repeats.
    """
    taus = [float(t) for t in taus]
    per_tau: dict[float, list[DetectionMetrics]] = {t: [] for t in taus}
    baseline: list[DetectionMetrics] = []
    for repeat in range(int(n_seeds)):
        repeat_seed = derive_seed(int(template.seed), f"repeat:{repeat}")
        train, held_out = _paired_data(
            repeat_seed,
            count,
            eval_count,
            sigma,
            n_classes=int(template.n_classes),
            n_distractors=n_distractors,
        )
        teacher = _stage_estimator(
            template, teacher_widths, "teacher", teacher=None, epochs=teacher_epochs
        )
        teacher.set_params(seed=derive_seed(repeat_seed, "teacher"))
        teacher.fit(train)

        plain = clone(template)
        plain.set_params(
            seed=derive_seed(repeat_seed, "student"), teacher=None, lambda_distill=None
        )
        plain.fit(train)
        baseline.append(plain.evaluate(held_out))

        for tau in taus:
            student = clone(template)
            student.set_params(
                seed=derive_seed(repeat_seed, "student"),
                teacher=teacher,
                temperature=tau,
            )
            student.fit(train)
            per_tau[tau].append(student.evaluate(held_out))

    def _mean_row(tag: str, metrics: list[DetectionMetrics]) -> dict:
        return {
            "temperature": tag,
            "mean_iou": float(np.mean([m.mean_iou for m in metrics])),
            "mean_ap": float(np.mean([m.mean_ap for m in metrics])),
            "strict_ap": float(np.mean([m.strict_ap for m in metrics])),
        }

    rows = [_mean_row("none", baseline)]
    rows += [_mean_row(repr(t), per_tau[t]) for t in taus]
    return rows


def ta_sweep(
    template: ToyDetector,
    teacher_widths: Sequence[int],
    assistant_widths: Sequence[Sequence[int]],
    *,
    count: int,
    eval_count: int,
    sigma: float,
    n_distractors: int = 3,
    head_epochs: int | None = None,
) -> list[tuple[TAPath, RunRecord]]:
    """Run every teacher-assistant path on one shared dataset."""
    train, held_out = _paired_data(
        derive_seed(int(template.seed), "repeat:0"),
        count,
        eval_count,
        sigma,
        n_classes=int(template.n_classes),
        n_distractors=n_distractors,
    )
    paths = enumerate_ta_paths(teacher_widths, assistant_widths, tuple(template.hidden_widths))
    return [
        (path, run_ta_sequence(path, template, train, held_out, head_epochs=head_epochs))
        for path in paths
    ]


def nms_contrast(
    baseline: ToyDetector,
    distilled: ToyDetector,
    *,
    n_objects: int = 12,
    views_per_object: int = 6,
    sigma: float,
    seed: int,
    thresholds: Iterable[float] = (0.6, 0.95),
    n_distractors: int = 3,
) -> list[dict]:
    """Compare suppression behaviour of two fitted detectors on redundant
    views of the same objects; one row per (model, threshold)."""
    views = generate_object_views(
        n_objects,
        views_per_object,
        sigma,
        seed,
        n_classes=int(baseline.n_classes),
        n_distractors=n_distractors,
    )
    unique_gts = list({id(v.gt_box): v.gt_box for v in views}.values())
    rows = []
    for name, model in (("baseline", baseline), ("distilled", distilled)):
        raw = model.predict(views)
        mean_iou = float(np.mean([max(iou(b, g) for g in unique_gts) for b in raw]))
        for threshold in thresholds:
            kept = model.detect(views, nms_threshold=float(threshold))
            rows.append(
                {
                    "model": name,
                    "nms_threshold": float(threshold),
                    "boxes_in": len(raw),
                    "boxes_kept": len(kept),
                    "kept_per_object": len(kept) / n_objects,
                    "mean_best_iou": mean_iou,
                }
            )
    return rows
