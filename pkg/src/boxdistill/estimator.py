"""Scikit-learn style estimator around the toy detector training loop.

``ToyDetector`` behaves like any sklearn estimator: all constructor
arguments are hyper-parameters stored verbatim, ``fit`` learns the
``params_`` attribute and returns ``self``, and ``get_params`` /
``set_params`` / ``clone`` compose with the wider ecosystem. Distillation
is configured by pointing ``teacher`` at an already fitted detector; the
teacher is frozen, only its forward outputs are consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import Tape
from .distributions import EdgeSupport
from .geometry import Box, box_offsets
from .losses import (
    DistillConfig,
    LossWeights,
    cross_entropy_rows,
    distill_rows_loss,
    expected_rows,
    focal_rows_loss,
    giou_regression_batch,
    offset_columns,
)
from .metrics import DetectionMetrics, evaluate_metrics
from .network import (
    ModelConfig,
    ModelParams,
    decode_predictions,
    forward_batch,
    forward_batch_on_tape,
    init_params,
    params_on_tape,
    predict_detections,
)
from .seeding import derive_seed
from .validation import (
    ConfigurationError,
    check_fitted,
    check_non_negative,
    check_samples,
)


@dataclass
class EpochStats:
    """Per-epoch training record; eval metrics are None without an eval set."""

    loss: float
    mean_iou: float | None = None
    mean_ap: float | None = None


class ToyDetector(BaseEstimator):
    """Single-object detector trained with the composed objective.

    The objective per scene is

        lambda_reg * (1 - GIoU of the expectation-decoded box)
        + lambda_dfl * (focal loss over the four edge distributions)
        + lambda_distill * (tempered KL toward the teacher's distributions)
        + class_weight * (cross entropy of the class branch)
        [+ class_kd_weight * (tempered KL toward the teacher's classes)]

    Parameters
    ----------
    hidden_widths : tuple of int
        Hidden layer widths of the MLP; total width is the capacity knob.
    n_bins : int
        Number of discrete positions per edge distribution.
    n_classes : int
        Size of the classification branch.
    support_min, support_max : float
        Range of representable edge offsets.
    epochs, lr, lr_decay_factor, lr_decay_epoch, batch_size
        Plain SGD schedule. The learning rate is multiplied once by
        ``lr_decay_factor`` from ``lr_decay_epoch`` on (default: after
        three quarters of the epochs).
    temperature : float
        Softmax temperature of every distillation term.
    lambda_reg, lambda_dfl : float
        Weights of the localization terms.
    lambda_distill : float or None
        Weight of the localization distillation term. ``None`` resolves to
        0.25 when a teacher is set and 0.0 otherwise; any positive value
        requires a teacher.
    class_weight : float
        Weight of the classification cross entropy.
    class_kd, class_kd_weight
        Optionally distill the classification branch as well (off by
        default).
    teacher : ToyDetector or None
        Fitted detector whose outputs guide training. Must share the edge
        support; it is never updated.
    teacher_as_reference : bool
        Use KL(teacher || student) when True, the reverse otherwise.
    tau_squared_rescale : bool
        Multiply distillation terms by temperature**2.
    seed : int
        Drives parameter init and batch shuffling through derived seeds.
    """

    def __init__(
        self,
        hidden_widths: tuple[int, ...] = (32,),
        n_bins: int = 17,
        n_classes: int = 2,
        support_min: float = 0.0,
        support_max: float = 16.0,
        epochs: int = 25,
        lr: float = 0.3,
        lr_decay_factor: float = 0.1,
        lr_decay_epoch: int | None = None,
        batch_size: int = 32,
        temperature: float = 10.0,
        lambda_reg: float = 2.0,
        lambda_dfl: float = 0.25,
        lambda_distill: float | None = None,
        class_weight: float = 1.0,
        class_kd: bool = False,
        class_kd_weight: float = 1.0,
        teacher: "ToyDetector | None" = None,
        teacher_as_reference: bool = True,
        tau_squared_rescale: bool = False,
        seed: int = 0,
    ):
        self.hidden_widths = hidden_widths
        self.n_bins = n_bins
        self.n_classes = n_classes
        self.support_min = support_min
        self.support_max = support_max
        self.epochs = epochs
        self.lr = lr
        self.lr_decay_factor = lr_decay_factor
        self.lr_decay_epoch = lr_decay_epoch
        self.batch_size = batch_size
        self.temperature = temperature
        self.lambda_reg = lambda_reg
        self.lambda_dfl = lambda_dfl
        self.lambda_distill = lambda_distill
        self.class_weight = class_weight
        self.class_kd = class_kd
        self.class_kd_weight = class_kd_weight
        self.teacher = teacher
        self.teacher_as_reference = teacher_as_reference
        self.tau_squared_rescale = tau_squared_rescale
        self.seed = seed

    # ------------------------------------------------------------------
    def _resolve(self) -> tuple[EdgeSupport, DistillConfig, float]:
        support = EdgeSupport(self.support_min, self.support_max, self.n_bins)
        if self.lambda_distill is None:
            distill_weight = 0.25 if self.teacher is not None else 0.0
        else:
            distill_weight = float(self.lambda_distill)
        if distill_weight > 0.0 and self.teacher is None:
            raise ConfigurationError(
                "lambda_distill is positive but no teacher was provided"
            )
        if self.class_kd and self.teacher is None:
            raise ConfigurationError("class_kd requires a teacher")
        config = DistillConfig(
            temperature=float(self.temperature),
            weights=LossWeights(
                regression=float(self.lambda_reg),
                focal=float(self.lambda_dfl),
                distill=distill_weight,
            ),
            teacher_as_reference=bool(self.teacher_as_reference),
            tau_squared_rescale=bool(self.tau_squared_rescale),
        )
        check_non_negative("class_weight", self.class_weight)
        check_non_negative("class_kd_weight", self.class_kd_weight)
        if int(self.epochs) < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        check_non_negative("lr", self.lr)
        check_non_negative("lr_decay_factor", self.lr_decay_factor)
        return support, config, distill_weight

    def _teacher_outputs(
        self, features: np.ndarray, support: EdgeSupport
    ) -> tuple[np.ndarray, np.ndarray]:
        teacher = self.teacher
        check_fitted(teacher)
        if teacher.support_ != support:
            raise ConfigurationError(
                f"teacher support {teacher.support_!r} differs from student "
                f"support {support!r}"
            )
        if teacher.n_features_ != features.shape[1]:
            raise ConfigurationError(
                f"teacher expects {teacher.n_features_} features, data has "
                f"{features.shape[1]}"
            )
        if self.class_kd and teacher.params_.n_classes != int(self.n_classes):
            raise ConfigurationError("class_kd needs matching class counts")
        loc, cls = forward_batch(teacher.params_, features)
        return loc, cls

    # ------------------------------------------------------------------
    def fit(self, samples, eval_samples=None) -> "ToyDetector":
        """Train on scene samples; optionally track metrics on an eval set."""
        samples = check_samples(samples)
        support, config, distill_weight = self._resolve()
        weights = config.weights

        features = np.stack([s.features for s in samples])
        n_samples, n_features = features.shape
        for i, sample in enumerate(samples):
            if not 0 <= sample.gt_class < int(self.n_classes):
                raise ValueError(
                    f"sample {i} has class {sample.gt_class}, "
                    f"model expects classes [0, {self.n_classes})"
                )

        targets = np.stack(
            [np.asarray(box_offsets(s.gt_box, s.anchor)) for s in samples]
        )
        anchor_x = np.array([s.anchor.x for s in samples])
        anchor_y = np.array([s.anchor.y for s in samples])
        corners = np.stack([np.asarray(s.gt_box.corners()) for s in samples])
        onehot = np.zeros((n_samples, int(self.n_classes)))
        onehot[np.arange(n_samples), [s.gt_class for s in samples]] = 1.0

        teacher_loc = teacher_cls = None
        if distill_weight > 0.0 or self.class_kd:
            teacher_loc, teacher_cls = self._teacher_outputs(features, support)

        model_config = ModelConfig(
            hidden_widths=tuple(self.hidden_widths),
            n_bins=int(self.n_bins),
            n_classes=int(self.n_classes),
        )
        params = init_params(
            model_config, n_features, seed=derive_seed(int(self.seed), "init")
        )
        initial_params = params.copy()
        shuffle_rng = np.random.default_rng(derive_seed(int(self.seed), "shuffle"))

        epochs = int(self.epochs)
        decay_epoch = (
            int(round(0.75 * epochs))
            if self.lr_decay_epoch is None
            else int(self.lr_decay_epoch)
        )
        batch_size = int(self.batch_size)
        history: list[EpochStats] = []

        for epoch in range(epochs):
            lr = float(self.lr) * (
                float(self.lr_decay_factor) if epoch >= decay_epoch else 1.0
            )
            order = shuffle_rng.permutation(n_samples)
            epoch_loss = 0.0
            for start in range(0, n_samples, batch_size):
                idx = order[start : start + batch_size]
                batch = idx.size

                tape = Tape()
                layers = params_on_tape(tape, params)
                loc_flat, cls_node = forward_batch_on_tape(
                    tape,
                    layers,
                    features[idx],
                    n_bins=support.n,
                    n_classes=int(self.n_classes),
                )
                rows = ad.reshape(loc_flat, (4 * batch, support.n))

                offsets_flat = expected_rows(tape, rows, support)
                regression = ad.sum(
                    giou_regression_batch(
                        tape,
                        offset_columns(offsets_flat),
                        (anchor_x[idx], anchor_y[idx]),
                        corners[idx],
                    )
                )
                focal = focal_rows_loss(tape, rows, targets[idx].reshape(-1), support)
                loss = ad.add(
                    regression * weights.regression, focal * weights.focal
                )
                if distill_weight > 0.0:
                    distill = distill_rows_loss(
                        tape,
                        rows,
                        teacher_loc[idx].reshape(4 * batch, support.n),
                        config.temperature,
                        teacher_as_reference=config.teacher_as_reference,
                        tau_squared_rescale=config.tau_squared_rescale,
                    )
                    loss = ad.add(loss, distill * weights.distill)
                if self.class_weight > 0.0:
                    ce = cross_entropy_rows(tape, cls_node, onehot[idx])
                    loss = ad.add(loss, ce * float(self.class_weight))
                if self.class_kd and self.class_kd_weight > 0.0:
                    kd = distill_rows_loss(
                        tape,
                        cls_node,
                        teacher_cls[idx],
                        config.temperature,
                        teacher_as_reference=config.teacher_as_reference,
                        tau_squared_rescale=config.tau_squared_rescale,
                    )
                    loss = ad.add(loss, kd * float(self.class_kd_weight))
                loss = loss / float(batch)

                if not np.isfinite(loss.value):
                    raise FloatingPointError(
                        f"training diverged (non-finite loss) at epoch {epoch}"
                    )
                grads = tape.backward(loss)
                if lr != 0.0:
                    for layer_index, (w_node, b_node) in enumerate(layers):
                        params.weights[layer_index] = (
                            params.weights[layer_index] - lr * grads[w_node.index]
                        )
                        params.biases[layer_index] = (
                            params.biases[layer_index] - lr * grads[b_node.index]
                        )
                epoch_loss += float(loss.value) * batch

            stats = EpochStats(loss=epoch_loss / n_samples)
            if eval_samples is not None:
                interim = evaluate_metrics(
                    decode_predictions(params, eval_samples, support),
                    [s.gt_box for s in eval_samples],
                )
                stats.mean_iou = interim.mean_iou
                stats.mean_ap = interim.mean_ap
            history.append(stats)

        self.params_ = params
        self.initial_params_ = initial_params
        self.support_ = support
        self.n_features_ = n_features
        self.history_ = history
        self.classes_ = np.arange(int(self.n_classes))
        return self

    # ------------------------------------------------------------------
    def predict(self, samples) -> list[Box]:
        """One decoded box per sample, index-aligned with the input."""
        check_fitted(self)
        samples = check_samples(samples)
        return decode_predictions(self.params_, samples, self.support_)

    def detect(self, samples, nms_threshold: float = 0.6) -> list[Box]:
        """Decoded boxes surviving greedy NMS across the sample set."""
        check_fitted(self)
        samples = check_samples(samples)
        return predict_detections(
            self.params_, samples, self.support_, nms_threshold=nms_threshold
        )

    def evaluate(self, samples) -> DetectionMetrics:
        """Detection metrics of the per-sample predictions."""
        return evaluate_metrics(self.predict(samples), [s.gt_box for s in samples])

    def score(self, samples, y=None) -> float:
        """Mean IoU on ``samples`` (sklearn scoring hook)."""
        return self.evaluate(samples).mean_iou

    # ------------------------------------------------------------------
    @classmethod
    def from_fitted_params(
        cls, params: ModelParams, support: EdgeSupport, **kwargs
    ) -> "ToyDetector":
        """Wrap externally stored parameters as a fitted detector."""
        detector = cls(
            hidden_widths=tuple(w.shape[0] for w in params.weights[:-1]),
            n_bins=params.n_bins,
            n_classes=params.n_classes,
            support_min=support.e_min,
            support_max=support.e_max,
            **kwargs,
        )
        detector.params_ = params
        detector.support_ = support
        detector.n_features_ = params.n_features
        detector.history_ = []
        detector.classes_ = np.arange(params.n_classes)
        return detector
