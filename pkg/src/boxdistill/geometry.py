"""Axis-aligned boxes, IoU-family overlap measures and greedy non-maximum
suppression.

Boxes use corner form (x1, y1, x2, y2) with y growing downward, so the
"top" edge of a box is the one with the smaller y. Edge offsets are the
non-negative distances (top, bottom, left, right) from an anchor point to
the four box edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class AnchorPoint:
    """Sampling point from which edge offsets are measured."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"anchor coordinates must be finite, got {(self.x, self.y)}")


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle with an optional score and class label.

    Degenerate (zero-width or zero-height) boxes are allowed; negative
    extents are not.
    """

    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0
    class_id: int = 0

    def __post_init__(self) -> None:
        for value in (self.x1, self.y1, self.x2, self.y2, self.score):
            if not math.isfinite(value):
                raise ValueError("box fields must be finite")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(
                f"box has negative extent: {(self.x1, self.y1, self.x2, self.y2)}"
            )
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def corners(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


def _intersection(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    return max(iw, 0.0) * max(ih, 0.0)


def iou(a: Box, b: Box) -> float:
    """Intersection over union in [0, 1]; 0.0 when the union has no area."""
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: IoU minus the normalized empty part of the smallest
    enclosing box. Lies in [-1, 1] and equals IoU for coinciding boxes."""
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    iou_value = inter / union if union > 0.0 else 0.0
    enclose = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    if enclose <= 0.0:
        return iou_value
    return iou_value - (enclose - union) / enclose


def decode_box(
    anchor: AnchorPoint,
    offsets: Sequence[float],
    *,
    score: float = 1.0,
    class_id: int = 0,
) -> Box:
    """Turn (top, bottom, left, right) distances from ``anchor`` into a box."""
    if len(offsets) != 4:
        raise ValueError(f"expected 4 offsets (top, bottom, left, right), got {len(offsets)}")
    top, bottom, left, right = (float(v) for v in offsets)
    if min(top, bottom, left, right) < 0.0:
        raise ValueError(f"offsets must be non-negative, got {(top, bottom, left, right)}")
    return Box(
        anchor.x - left,
        anchor.y - top,
        anchor.x + right,
        anchor.y + bottom,
        score=score,
        class_id=class_id,
    )


def box_offsets(box: Box, anchor: AnchorPoint) -> tuple[float, float, float, float]:
    """Inverse of :func:`decode_box`; the anchor must lie inside the box."""
    top = anchor.y - box.y1
    bottom = box.y2 - anchor.y
    left = anchor.x - box.x1
    right = box.x2 - anchor.x
    if min(top, bottom, left, right) < 0.0:
        raise ValueError("anchor lies outside the box")
    return (top, bottom, left, right)


def nms(boxes: Sequence[Box], iou_threshold: float) -> list[int]:
    """Greedy per-class suppression, highest score first.

    Returns indices of the kept boxes in descending score order, ties broken
    by the lower input index. A box is dropped iff its IoU with an already
    kept box of the same class exceeds ``iou_threshold``.
    """
    if not (math.isfinite(iou_threshold) and 0.0 <= iou_threshold <= 1.0):
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[int] = []
    for i in order:
        candidate = boxes[i]
        suppressed = any(
            boxes[j].class_id == candidate.class_id
            and iou(candidate, boxes[j]) > iou_threshold
            for j in kept
        )
        if not suppressed:
            kept.append(i)
    return kept
