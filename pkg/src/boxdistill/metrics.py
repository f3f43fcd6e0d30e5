"""Detection quality measures: paired mean IoU and average precision.

``evaluate_metrics`` expects predictions index-aligned with the ground
truths (one prediction slot per scene, ``None`` where the detector produced
nothing). Mean IoU is computed over these pairs; average precision pools
the scored predictions per class and matches them greedily in score order,
as is standard for detection benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, iou

AP_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
STRICT_AP_THRESHOLDS: tuple[float, ...] = tuple(t for t in AP_THRESHOLDS if t >= 0.75)


@dataclass
class DetectionMetrics:
    """Mean IoU plus AP at each threshold and their average."""

    mean_iou: float
    ap_at: dict[float, float]
    mean_ap: float

    @property
    def strict_ap(self) -> float:
        """AP averaged over the strict thresholds (0.75 and up)."""
        return float(np.mean([self.ap_at[t] for t in STRICT_AP_THRESHOLDS]))


def _interpolated_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    # Every-point interpolation: area under the precision envelope.
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


class _ClassCurve:
    """Score-ordered match candidates of one class, reusable across
    thresholds: the best ground truth per prediction does not depend on the
    threshold, only the true/false-positive marking does."""

    def __init__(self, predictions: list[Box], ground_truths: list[Box]):
        self.n_gt = len(ground_truths)
        order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].score, i))
        self.best_gt: list[int] = []
        self.best_iou: list[float] = []
        for i in order:
            overlaps = [iou(predictions[i], g) for g in ground_truths]
            best = int(np.argmax(overlaps))
            self.best_gt.append(best)
            self.best_iou.append(overlaps[best])

    def ap(self, iou_threshold: float) -> float:
        if not self.best_gt:
            return 0.0
        matched = [False] * self.n_gt
        tp = np.zeros(len(self.best_gt))
        for rank, (gt, overlap) in enumerate(zip(self.best_gt, self.best_iou)):
            if overlap >= iou_threshold and not matched[gt]:
                matched[gt] = True
                tp[rank] = 1.0
        cum_tp = np.cumsum(tp)
        ranks = np.arange(1, tp.size + 1)
        recall = cum_tp / self.n_gt
        precision = cum_tp / ranks
        return _interpolated_ap(recall, precision)


def _class_curves(
    predictions: Sequence[Box],
    ground_truths: Sequence[Box],
) -> list[_ClassCurve]:
    classes = sorted({g.class_id for g in ground_truths})
    curves = []
    for cls in classes:
        curves.append(
            _ClassCurve(
                [p for p in predictions if p.class_id == cls],
                [g for g in ground_truths if g.class_id == cls],
            )
        )
    return curves


def average_precision(
    predictions: Sequence[Box],
    ground_truths: Sequence[Box],
    iou_threshold: float,
) -> float:
    """Class-averaged AP at one IoU threshold.

    Predictions are ranked by descending score (ties keep input order) and
    each is matched against its highest-IoU ground truth of the same class;
    it counts as a true positive iff that IoU reaches the threshold and the
    ground truth is still unmatched.
    """
    if not ground_truths:
        raise ValueError("ground-truth set is empty")
    curves = _class_curves(predictions, ground_truths)
    return float(np.mean([c.ap(iou_threshold) for c in curves]))


def evaluate_metrics(
    predictions: Sequence[Box | None],
    ground_truths: Sequence[Box],
) -> DetectionMetrics:
    """Score index-aligned predictions against ground truths.

    An empty prediction list (or ``None`` entries) is allowed and scores
    zero. The ground-truth list must be non-empty.
    """
    ground_truths = list(ground_truths)
    if not ground_truths:
        raise ValueError("ground-truth set is empty")
    predictions = list(predictions)
    if predictions and len(predictions) != len(ground_truths):
        raise ValueError(
            f"{len(predictions)} predictions cannot align with "
            f"{len(ground_truths)} ground truths (pass an empty list for none)"
        )
    if not predictions:
        predictions = [None] * len(ground_truths)

    paired = [
        iou(pred, gt) if pred is not None else 0.0
        for pred, gt in zip(predictions, ground_truths)
    ]
    mean_iou = float(np.mean(paired))

    scored = [p for p in predictions if p is not None]
    curves = _class_curves(scored, ground_truths)
    ap_at = {t: float(np.mean([c.ap(t) for c in curves])) for t in AP_THRESHOLDS}
    return DetectionMetrics(
        mean_iou=mean_iou,
        ap_at=ap_at,
        mean_ap=float(np.mean(list(ap_at.values()))),
    )
