"""Training objectives for distribution-based box regression.

Every loss is built on an autodiff tape and returns a scalar node, so its
gradient with respect to the student logits can be certified against finite
differences. Teacher quantities enter as plain arrays and therefore as
frozen tape constants: no gradient ever flows into a teacher.

The row-wise variants (``distill_rows_loss``, ``focal_rows_loss``, ...)
operate on an (R, n) matrix of logit rows and sum over rows. The per-edge
and per-box functions are thin wrappers over the same code path, and the
batched training loop stacks all edges of a minibatch into one row matrix,
so there is a single implementation of each formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .distributions import KL_EPS, EdgeSupport, project_target
from .geometry import AnchorPoint, Box, box_offsets, giou
from .validation import ConfigurationError, check_non_negative, check_vector


@dataclass(frozen=True)
class LossWeights:
    """Trade-off weights of the composed objective."""

    regression: float = 2.0
    focal: float = 0.25
    distill: float = 0.25

    def __post_init__(self) -> None:
        check_non_negative("regression weight", self.regression)
        check_non_negative("focal weight", self.focal)
        check_non_negative("distill weight", self.distill)


@dataclass(frozen=True)
class DistillConfig:
    """Hyper-parameters of a distillation run."""

    temperature: float = 10.0
    weights: LossWeights = field(default_factory=LossWeights)
    teacher_as_reference: bool = True
    tau_squared_rescale: bool = False
    tbr_margin: float = 0.0
    tbr_weight: float = 1.0
    tbr_formula_gate: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.temperature) and self.temperature > 0.0):
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        check_non_negative("tbr_margin", self.tbr_margin)
        check_non_negative("tbr_weight", self.tbr_weight)


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not (math.isfinite(tau) and tau > 0.0):
        raise ValueError(f"temperature must be positive, got {tau}")
    return tau


def _as_rows(node: Node, name: str) -> Node:
    if node.value.ndim == 1:
        return ad.reshape(node, (1, node.value.shape[0]))
    if node.value.ndim == 2:
        return node
    raise ValueError(f"{name} must be a vector or matrix, got shape {node.value.shape}")


def log_softmax_rows(rows: Node, tau: float = 1.0) -> Node:
    """Row-wise log softmax of ``rows / tau`` with max subtraction."""
    shifted = ad.sub_rowvec(rows, ad.rowmax(rows))
    if tau != 1.0:
        shifted = shifted / tau
    return ad.sub_rowvec(shifted, ad.log(ad.rowsum(ad.exp(shifted))))


def softmax_rows_value(rows: np.ndarray, tau: float) -> np.ndarray:
    """Plain-array row-wise temperature softmax (used for teacher sides)."""
    rows = np.asarray(rows, dtype=np.float64)
    shifted = (rows - rows.max(axis=1, keepdims=True)) / tau
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def distill_rows_loss(
    tape: Tape,
    student_rows: Node,
    teacher_logits: np.ndarray,
    tau: float,
    *,
    teacher_as_reference: bool = True,
    tau_squared_rescale: bool = False,
) -> Node:
    """Tempered KL between matching rows of student and teacher logits,
    summed over rows.

    With ``teacher_as_reference`` the divergence is KL(teacher || student);
    otherwise KL(student || teacher) with the teacher side clamped away from
    zero. ``tau_squared_rescale`` multiplies the result by tau**2 to undo
    the gradient damping the temperature introduces.
    """
    tau = _check_tau(tau)
    student_rows = _as_rows(student_rows, "student logits")
    teacher = np.asarray(teacher_logits, dtype=np.float64)
    if teacher.ndim == 1:
        teacher = teacher.reshape(1, -1)
    if teacher.shape != student_rows.value.shape:
        raise ValueError(
            "student and teacher edge supports differ: "
            f"student logits {student_rows.value.shape}, teacher logits {teacher.shape}"
        )
    if not np.all(np.isfinite(teacher)):
        raise ValueError("teacher logits must be finite")

    teacher_probs = softmax_rows_value(teacher, tau)
    student_logp = log_softmax_rows(student_rows, tau)
    if teacher_as_reference:
        entropy_term = float(
            np.where(teacher_probs > 0.0, teacher_probs * np.log(teacher_probs), 0.0).sum()
        )
        loss = ad.sub(entropy_term, ad.sum(ad.mul(student_logp, teacher_probs)))
    else:
        teacher_logp = np.log(np.maximum(teacher_probs, KL_EPS))
        student_probs = ad.exp(student_logp)
        loss = ad.sub(
            ad.sum(ad.mul(student_probs, student_logp)),
            ad.sum(ad.mul(student_probs, teacher_logp)),
        )
    if tau_squared_rescale:
        loss = loss * (tau * tau)
    return loss


def edge_distill_loss(
    tape: Tape,
    student_logits: Node,
    teacher_logits,
    tau: float,
    *,
    teacher_as_reference: bool = True,
    tau_squared_rescale: bool = False,
) -> Node:
    """Distillation loss for a single edge: the student's tempered
    distribution is pulled toward the teacher's."""
    teacher = check_vector("teacher logits", teacher_logits)
    return distill_rows_loss(
        tape,
        student_logits,
        teacher,
        tau,
        teacher_as_reference=teacher_as_reference,
        tau_squared_rescale=tau_squared_rescale,
    )


def box_distill_loss(
    tape: Tape,
    student_logits: Node,
    teacher_logits,
    tau: float,
    *,
    teacher_as_reference: bool = True,
    tau_squared_rescale: bool = False,
) -> Node:
    """Sum of the per-edge distillation losses over the four box edges."""
    if student_logits.value.shape[0] != 4 or student_logits.value.ndim != 2:
        raise ValueError(
            f"student logits must have shape (4, n), got {student_logits.value.shape}"
        )
    teacher = np.asarray(teacher_logits, dtype=np.float64)
    return distill_rows_loss(
        tape,
        student_logits,
        teacher,
        tau,
        teacher_as_reference=teacher_as_reference,
        tau_squared_rescale=tau_squared_rescale,
    )


def projection_rows(targets, support: EdgeSupport) -> np.ndarray:
    """Interpolation-weight matrix, one row per target: weight ``w_left`` on
    the bracketing bin and ``w_right`` on its right neighbour."""
    targets = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    weights = np.zeros((targets.size, support.n))
    for row, y in enumerate(targets):
        proj = project_target(float(y), support)
        weights[row, proj.index] = proj.w_left
        weights[row, proj.index + 1] += proj.w_right
    return weights


def focal_rows_loss(tape: Tape, rows: Node, targets, support: EdgeSupport) -> Node:
    """Distribution focal loss summed over rows: cross entropy against the
    two support bins bracketing each continuous target."""
    rows = _as_rows(rows, "logits")
    if rows.value.shape[1] != support.n:
        raise ValueError(f"logit rows have {rows.value.shape[1]} bins, support has {support.n}")
    weights = projection_rows(targets, support)
    if weights.shape[0] != rows.value.shape[0]:
        raise ValueError(
            f"got {weights.shape[0]} targets for {rows.value.shape[0]} logit rows"
        )
    return ad.neg(ad.sum(ad.mul(log_softmax_rows(rows, 1.0), weights)))


def distribution_focal_loss(tape: Tape, logits: Node, target: float, support: EdgeSupport) -> Node:
    """Distribution focal loss for a single edge."""
    return focal_rows_loss(tape, logits, [float(target)], support)


def expected_rows(tape: Tape, rows: Node, support: EdgeSupport) -> Node:
    """Expectation-decoded offsets of logit rows after a plain softmax."""
    rows = _as_rows(rows, "logits")
    if rows.value.shape[1] != support.n:
        raise ValueError(f"logit rows have {rows.value.shape[1]} bins, support has {support.n}")
    probs = ad.exp(log_softmax_rows(rows, 1.0))
    return ad.matvec(probs, support.positions)


def giou_batch(
    tape: Tape,
    offsets: Sequence[Node],
    anchor_xy: tuple[np.ndarray, np.ndarray],
    gt_corners: np.ndarray,
) -> Node:
    """GIoU between decoded predictions and ground-truth boxes.

    ``offsets`` are four (B,) nodes in (top, bottom, left, right) order,
    ``anchor_xy`` the anchor coordinate arrays and ``gt_corners`` a (B, 4)
    array of ground-truth (x1, y1, x2, y2). Ground-truth boxes must have
    positive area. Returns a (B,) node of GIoU values.
    """
    top, bottom, left, right = offsets
    anchor_x = np.asarray(anchor_xy[0], dtype=np.float64)
    anchor_y = np.asarray(anchor_xy[1], dtype=np.float64)
    gt = np.asarray(gt_corners, dtype=np.float64)
    gx1, gy1, gx2, gy2 = gt[:, 0], gt[:, 1], gt[:, 2], gt[:, 3]
    gt_area = (gx2 - gx1) * (gy2 - gy1)
    if np.any(gt_area <= 0.0):
        raise ValueError("ground-truth boxes must have positive area")

    x1 = ad.sub(anchor_x, left)
    y1 = ad.sub(anchor_y, top)
    x2 = ad.add(anchor_x, right)
    y2 = ad.add(anchor_y, bottom)

    iw = ad.clamp_min(ad.sub(ad.minimum(x2, gx2), ad.maximum(x1, gx1)), 0.0)
    ih = ad.clamp_min(ad.sub(ad.minimum(y2, gy2), ad.maximum(y1, gy1)), 0.0)
    inter = ad.mul(iw, ih)
    pred_area = ad.mul(ad.sub(x2, x1), ad.sub(y2, y1))
    union = ad.sub(ad.add(pred_area, gt_area), inter)
    iou_value = ad.div(inter, union)

    enclose_w = ad.sub(ad.maximum(x2, gx2), ad.minimum(x1, gx1))
    enclose_h = ad.sub(ad.maximum(y2, gy2), ad.minimum(y1, gy1))
    enclose = ad.mul(enclose_w, enclose_h)
    penalty = ad.div(ad.sub(enclose, union), enclose)
    return ad.sub(iou_value, penalty)


def giou_regression_loss(pred: Box, gt: Box) -> float:
    """Plain-value regression loss 1 - GIoU(pred, gt)."""
    return 1.0 - giou(pred, gt)


def giou_regression_batch(
    tape: Tape,
    offsets: Sequence[Node],
    anchor_xy: tuple[np.ndarray, np.ndarray],
    gt_corners: np.ndarray,
) -> Node:
    """Differentiable 1 - GIoU per decoded prediction, shape (B,)."""
    return ad.sub(1.0, giou_batch(tape, offsets, anchor_xy, gt_corners))


def offset_columns(offsets_flat: Node) -> tuple[Node, Node, Node, Node]:
    """Split a (4B,) sample-major offset vector into four (B,) edge nodes
    in (top, bottom, left, right) order."""
    count = offsets_flat.value.shape[0]
    if count % 4 != 0:
        raise ValueError(f"offset vector length {count} is not a multiple of 4")
    stacked = ad.reshape(offsets_flat, (count // 4, 4))
    return (
        ad.col(stacked, 0),
        ad.col(stacked, 1),
        ad.col(stacked, 2),
        ad.col(stacked, 3),
    )


def cross_entropy_rows(tape: Tape, logits: Node, onehot: np.ndarray) -> Node:
    """Cross entropy against one-hot labels, summed over rows."""
    logits = _as_rows(logits, "class logits")
    onehot = np.asarray(onehot, dtype=np.float64)
    if onehot.ndim == 1:
        onehot = onehot.reshape(1, -1)
    if onehot.shape != logits.value.shape:
        raise ValueError(
            f"labels shape {onehot.shape} does not match logits {logits.value.shape}"
        )
    rows_ok = np.all(np.isin(onehot, (0.0, 1.0))) and np.all(onehot.sum(axis=1) == 1.0)
    if not rows_ok:
        raise ValueError("labels must be one-hot rows")
    return ad.neg(ad.sum(ad.mul(log_softmax_rows(logits, 1.0), onehot)))


def classification_kd_loss(
    tape: Tape,
    student_logits: Node,
    teacher_logits,
    label_onehot,
    tau: float,
    *,
    ce_weight: float = 1.0,
    kl_weight: float = 1.0,
    teacher_as_reference: bool = True,
    tau_squared_rescale: bool = False,
) -> Node:
    """Classification distillation: hard cross entropy at temperature 1 plus
    tempered KL toward the teacher's class distribution."""
    check_non_negative("ce_weight", ce_weight)
    check_non_negative("kl_weight", kl_weight)
    teacher = check_vector("teacher logits", teacher_logits, length=student_logits.value.shape[-1])
    onehot = np.asarray(label_onehot, dtype=np.float64)
    ce = cross_entropy_rows(tape, student_logits, onehot)
    kl = distill_rows_loss(
        tape,
        student_logits,
        teacher,
        tau,
        teacher_as_reference=teacher_as_reference,
        tau_squared_rescale=tau_squared_rescale,
    )
    return ad.add(ce * ce_weight, kl * kl_weight)


def _corner_distance(a: Box, b: Box) -> float:
    return float(
        math.sqrt(
            (a.x1 - b.x1) ** 2 + (a.y1 - b.y1) ** 2 + (a.x2 - b.x2) ** 2 + (a.y2 - b.y2) ** 2
        )
    )


def tbr_gate_active(
    student_error: float,
    teacher_error: float,
    margin: float,
    *,
    formula_gate: bool = False,
) -> bool:
    """Gate of the teacher-bounded regression penalty.

    Default semantics: penalize only while the student's error exceeds the
    teacher's by more than ``margin``. ``formula_gate`` flips to the literal
    inequality ``student_error + margin <= teacher_error`` found in one
    statement of the loss, kept for ablation.
    """
    check_non_negative("margin", margin)
    if formula_gate:
        return student_error + margin <= teacher_error
    return student_error > teacher_error + margin


def teacher_bounded_regression_loss(
    student_box: Box,
    teacher_box: Box,
    gt_box: Box,
    *,
    margin: float = 0.0,
    weight: float = 1.0,
    formula_gate: bool = False,
) -> float:
    """Regression penalty applied only while the student localizes worse
    than the teacher; zero once the student is within ``margin``."""
    check_non_negative("weight", weight)
    student_error = _corner_distance(student_box, gt_box)
    teacher_error = _corner_distance(teacher_box, gt_box)
    if tbr_gate_active(student_error, teacher_error, margin, formula_gate=formula_gate):
        return weight * giou_regression_loss(student_box, gt_box)
    return 0.0


def total_loss(
    tape: Tape,
    loc_logits: Node,
    support: EdgeSupport,
    anchor: AnchorPoint,
    gt_box: Box,
    teacher_loc_logits=None,
    config: DistillConfig | None = None,
) -> Node:
    """Composed objective for one positive location.

    weights.regression * (1 - GIoU of the expectation-decoded box)
    + weights.focal * (focal loss summed over the four edges)
    + weights.distill * (distillation loss summed over the four edges)

    The distillation term requires ``teacher_loc_logits``; with a zero
    distill weight the teacher is ignored entirely.
    """
    config = config or DistillConfig()
    weights = config.weights
    if loc_logits.value.shape != (4, support.n):
        raise ValueError(
            f"loc logits must have shape (4, {support.n}), got {loc_logits.value.shape}"
        )

    targets = np.asarray(box_offsets(gt_box, anchor))
    offsets_flat = expected_rows(tape, loc_logits, support)
    regression = ad.sum(
        giou_regression_batch(
            tape,
            offset_columns(offsets_flat),
            (np.array([anchor.x]), np.array([anchor.y])),
            np.asarray(gt_box.corners()).reshape(1, 4),
        )
    )
    focal = focal_rows_loss(tape, loc_logits, targets, support)
    loss = ad.add(regression * weights.regression, focal * weights.focal)

    if weights.distill > 0.0:
        if teacher_loc_logits is None:
            raise ConfigurationError(
                "distill weight is positive but no teacher logits were given"
            )
        distill = box_distill_loss(
            tape,
            loc_logits,
            teacher_loc_logits,
            config.temperature,
            teacher_as_reference=config.teacher_as_reference,
            tau_squared_rescale=config.tau_squared_rescale,
        )
        loss = ad.add(loss, distill * weights.distill)
    return loss
