"""Tests for mean IoU and average precision.

The three-box fixture below is enumerated by hand: at threshold 0.5 the
match sequence is TP, TP, FP giving an interpolated AP of 2/3, and at 0.95
only the exact hit survives giving 1/3.
"""

import numpy as np
import pytest

from boxdistill.geometry import Box
from boxdistill.metrics import (
    AP_THRESHOLDS,
    STRICT_AP_THRESHOLDS,
    DetectionMetrics,
    average_precision,
    evaluate_metrics,
)


def box(x1, y1, x2, y2, score=1.0, class_id=0):
    return Box(x1, y1, x2, y2, score=score, class_id=class_id)


@pytest.fixture
def three_box_fixture():
    gts = [
        box(0, 0, 10, 10),
        box(20, 20, 30, 30),
        box(40, 40, 50, 50),
    ]
    preds = [
        box(0, 0, 10, 10, score=0.9),       # exact hit, IoU 1.0
        box(20, 20, 30, 29, score=0.8),     # IoU 90 / 100 = 0.9
        box(70, 70, 80, 80, score=0.7),     # misses everything
    ]
    return preds, gts


# ---------------------------------------------------------------------------
# threshold grids


def test_threshold_grid_and_strict_subset():
    assert AP_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
    assert STRICT_AP_THRESHOLDS == (0.75, 0.8, 0.85, 0.9, 0.95)


# ---------------------------------------------------------------------------
# hand-enumerated fixture


def test_hand_enumerated_ap_values(three_box_fixture):
    preds, gts = three_box_fixture
    assert average_precision(preds, gts, 0.5) == pytest.approx(2.0 / 3.0, abs=1e-12)
    # IoU 0.9 meets the 0.9 threshold inclusively.
    assert average_precision(preds, gts, 0.9) == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert average_precision(preds, gts, 0.95) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_evaluate_metrics_on_fixture(three_box_fixture):
    preds, gts = three_box_fixture
    metrics = evaluate_metrics(preds, gts)
    assert metrics.mean_iou == pytest.approx((1.0 + 0.9 + 0.0) / 3.0, abs=1e-12)
    assert metrics.ap_at[0.5] == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert metrics.ap_at[0.95] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert metrics.mean_ap == pytest.approx(np.mean(list(metrics.ap_at.values())))
    assert metrics.strict_ap == pytest.approx(
        np.mean([metrics.ap_at[t] for t in STRICT_AP_THRESHOLDS])
    )


# ---------------------------------------------------------------------------
# exact and empty extremes


def test_perfect_predictions_score_one():
    gts = [box(0, 0, 4, 4), box(10, 0, 14, 4, class_id=1), box(0, 10, 4, 14)]
    metrics = evaluate_metrics(list(gts), gts)
    assert metrics.mean_iou == 1.0
    assert all(v == 1.0 for v in metrics.ap_at.values())
    assert metrics.mean_ap == 1.0
    assert metrics.strict_ap == 1.0


def test_empty_predictions_score_zero():
    gts = [box(0, 0, 4, 4), box(10, 0, 14, 4)]
    metrics = evaluate_metrics([], gts)
    assert metrics.mean_iou == 0.0
    assert metrics.mean_ap == 0.0
    assert all(v == 0.0 for v in metrics.ap_at.values())


def test_none_entries_count_as_misses():
    gts = [box(0, 0, 4, 4), box(10, 0, 14, 4)]
    metrics = evaluate_metrics([gts[0], None], gts)
    assert metrics.mean_iou == pytest.approx(0.5)
    # The surviving prediction recovers half the ground truths.
    assert metrics.ap_at[0.5] == pytest.approx(0.5)


def test_empty_ground_truth_rejected():
    with pytest.raises(ValueError, match="empty"):
        evaluate_metrics([], [])
    with pytest.raises(ValueError, match="empty"):
        average_precision([box(0, 0, 1, 1)], [], 0.5)


def test_misaligned_lengths_rejected():
    gts = [box(0, 0, 4, 4), box(10, 0, 14, 4)]
    with pytest.raises(ValueError, match="align"):
        evaluate_metrics([gts[0]], gts)


# ---------------------------------------------------------------------------
# ranking semantics


def test_false_positive_rank_changes_ap():
    gt = [box(0, 0, 10, 10)]
    hit = box(0, 0, 10, 10, score=0.5)
    miss = box(50, 50, 60, 60, score=0.9)
    # High-scoring miss first: precision at full recall is 1/2.
    assert average_precision([hit, miss], gt, 0.5) == pytest.approx(0.5)
    # Same boxes, miss ranked last: the hit is found at precision 1.
    low_miss = box(50, 50, 60, 60, score=0.1)
    assert average_precision([hit, low_miss], gt, 0.5) == pytest.approx(1.0)


def test_score_ties_keep_input_order():
    gt = [box(0, 0, 10, 10)]
    hit = box(0, 0, 10, 10, score=0.5)
    miss = box(50, 50, 60, 60, score=0.5)
    assert average_precision([hit, miss], gt, 0.5) == pytest.approx(1.0)
    assert average_precision([miss, hit], gt, 0.5) == pytest.approx(0.5)


def test_duplicate_detection_is_not_double_counted():
    gt = [box(0, 0, 10, 10)]
    first = box(0, 0, 10, 10, score=0.9)
    second = box(0, 0, 10, 10, score=0.8)
    # Both reached full recall at rank 1; the duplicate cannot add recall.
    assert average_precision([first, second], gt, 0.5) == pytest.approx(1.0)


def test_classes_are_scored_separately():
    gts = [box(0, 0, 10, 10, class_id=0), box(20, 20, 30, 30, class_id=1)]
    preds = [box(0, 0, 10, 10, score=0.9, class_id=0)]
    # Class 0 is perfect, class 1 has no predictions at all.
    assert average_precision(preds, gts, 0.5) == pytest.approx(0.5)


def test_wrong_class_prediction_does_not_match():
    gts = [box(0, 0, 10, 10, class_id=0)]
    preds = [box(0, 0, 10, 10, score=0.9, class_id=1)]
    assert average_precision(preds, gts, 0.5) == 0.0


# ---------------------------------------------------------------------------
# invariants


def test_ap_monotone_in_threshold():
    rng = np.random.default_rng(31)
    gts = []
    preds = []
    for i in range(40):
        x, y = rng.uniform(0, 100, size=2)
        w, h = rng.uniform(4, 10, size=2)
        cls = int(rng.integers(2))
        gts.append(box(x, y, x + w, y + h, class_id=cls))
        jitter = rng.uniform(-2, 2, size=4)
        preds.append(
            box(
                x + jitter[0],
                y + jitter[1],
                x + w + jitter[2],
                y + h + jitter[3],
                score=float(rng.uniform(0.1, 1.0)),
                class_id=cls,
            )
        )
    metrics = evaluate_metrics(preds, gts)
    values = [metrics.ap_at[t] for t in AP_THRESHOLDS]
    assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))
    assert all(0.0 <= v <= 1.0 for v in values)
    assert 0.0 <= metrics.mean_iou <= 1.0


def test_replacing_prediction_with_truth_never_lowers_mean_iou():
    rng = np.random.default_rng(32)
    gts = []
    preds = []
    for _ in range(20):
        x, y = rng.uniform(0, 60, size=2)
        w, h = rng.uniform(4, 10, size=2)
        gts.append(box(x, y, x + w, y + h))
        jitter = rng.uniform(-1.5, 1.5, size=4)
        preds.append(box(x + jitter[0], y + jitter[1], x + w + jitter[2], y + h + jitter[3]))
    base = evaluate_metrics(preds, gts).mean_iou
    for i in range(20):
        improved = list(preds)
        improved[i] = gts[i]
        assert evaluate_metrics(improved, gts).mean_iou >= base - 1e-12


def test_strict_ap_property():
    metrics = DetectionMetrics(
        mean_iou=0.5,
        ap_at={t: 1.0 if t < 0.75 else 0.5 for t in AP_THRESHOLDS},
        mean_ap=0.75,
    )
    assert metrics.strict_ap == pytest.approx(0.5)
