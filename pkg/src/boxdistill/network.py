"""The toy detector network: a small MLP with two output branches.

The head emits ``4 * n_bins`` localization logits (one distribution per box
edge) and ``n_classes`` classification logits. Hidden layers use tanh.
Model capacity is varied through the hidden widths, which is what the
teacher / assistant / student ladder is built from.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .distributions import BoxDistribution, EdgeSupport, decode_bbox
from .geometry import Box
from .scenes import SceneSample


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of one detector."""

    hidden_widths: tuple[int, ...] = (32,)
    n_bins: int = 17
    n_classes: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be positive, got {self.hidden_widths}")
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be at least 2, got {self.n_bins}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be at least 2, got {self.n_classes}")

    @property
    def output_size(self) -> int:
        return 4 * self.n_bins + self.n_classes


@dataclass
class ModelParams:
    """Weights and biases of a detector, outermost layer last."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    n_bins: int
    n_classes: int

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[1]

    @property
    def parameter_count(self) -> int:
        return int(sum(w.size for w in self.weights) + sum(b.size for b in self.biases))

    def copy(self) -> "ModelParams":
        return ModelParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.n_bins,
            self.n_classes,
        )

    def digest(self) -> str:
        """Hash of the exact parameter bytes; changes iff any bit changes."""
        sha = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            sha.update(np.ascontiguousarray(w).tobytes())
            sha.update(np.ascontiguousarray(b).tobytes())
        return sha.hexdigest()


def parameter_count(config: ModelConfig, n_features: int) -> int:
    sizes = [n_features, *config.hidden_widths, config.output_size]
    return int(sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1)))


def init_params(config: ModelConfig, n_features: int, *, seed: int | None = None) -> ModelParams:
    """Scaled-Gaussian weights, zero biases; deterministic in the seed."""
    if n_features < 1:
        raise ValueError(f"n_features must be positive, got {n_features}")
    rng = np.random.default_rng(config.seed if seed is None else seed)
    sizes = [n_features, *config.hidden_widths, config.output_size]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(weights, biases, config.n_bins, config.n_classes)


def forward_batch(params: ModelParams, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Plain-array forward pass.

    Returns localization logits with shape (B, 4, n_bins) and class logits
    with shape (B, n_classes).
    """
    h = np.asarray(features, dtype=np.float64)
    if h.ndim != 2:
        raise ValueError(f"features must be a (batch, n_features) matrix, got {h.shape}")
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w.T + b)
    out = h @ params.weights[-1].T + params.biases[-1]
    loc = out[:, : 4 * params.n_bins].reshape(-1, 4, params.n_bins)
    cls = out[:, 4 * params.n_bins :]
    return loc, cls


def forward(params: ModelParams, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-sample forward pass: ((4, n_bins) loc logits, (n_classes,) cls)."""
    loc, cls = forward_batch(params, np.asarray(features, dtype=np.float64)[None, :])
    return loc[0], cls[0]


def params_on_tape(tape: Tape, params: ModelParams) -> list[tuple[Node, Node]]:
    """Record every weight and bias as a differentiable tape leaf."""
    return [
        (tape.leaf(w), tape.leaf(b)) for w, b in zip(params.weights, params.biases)
    ]


def forward_batch_on_tape(
    tape: Tape,
    layers: Sequence[tuple[Node, Node]],
    features: np.ndarray,
    *,
    n_bins: int,
    n_classes: int,
) -> tuple[Node, Node]:
    """Forward pass recorded on a tape for training.

    Returns the (B, 4 * n_bins) localization block and the (B, n_classes)
    classification block.
    """
    h: Node | np.ndarray = np.asarray(features, dtype=np.float64)
    for w, b in layers[:-1]:
        h = ad.tanh(ad.linear(h, w, b))
    w_last, b_last = layers[-1]
    out = ad.linear(h, w_last, b_last)
    loc = ad.slice_cols(out, 0, 4 * n_bins)
    cls = ad.slice_cols(out, 4 * n_bins, 4 * n_bins + n_classes)
    return loc, cls


def decode_predictions(
    params: ModelParams,
    samples: Sequence[SceneSample],
    support: EdgeSupport,
    *,
    tau: float = 1.0,
) -> list[Box]:
    """One expectation-decoded box per sample, scored by the most likely
    class. The output list is index-aligned with ``samples``."""
    if support.n != params.n_bins:
        raise ValueError(f"support has {support.n} positions, model emits {params.n_bins}")
    features = np.stack([s.features for s in samples])
    loc, cls = forward_batch(params, features)
    boxes = []
    for sample, loc_logits, cls_logits in zip(samples, loc, cls):
        shifted = cls_logits - cls_logits.max()
        probs = np.exp(shifted) / np.exp(shifted).sum()
        class_id = int(np.argmax(probs))
        boxes.append(
            decode_bbox(
                BoxDistribution(loc_logits, support),
                sample.anchor,
                tau=tau,
                score=float(probs[class_id]),
                class_id=class_id,
            )
        )
    return boxes


def predict_detections(
    params: ModelParams,
    samples: Sequence[SceneSample],
    support: EdgeSupport,
    *,
    nms_threshold: float = 0.6,
    tau: float = 1.0,
) -> list[Box]:
    """Decode every sample and apply greedy NMS across the whole set."""
    from .geometry import nms

    boxes = decode_predictions(params, samples, support, tau=tau)
    kept = nms(boxes, nms_threshold)
    return [boxes[i] for i in kept]


def save_params(params: ModelParams, path) -> None:
    """Flat text export: one named field per block, decimal values."""
    lines = [f"meta n_bins={params.n_bins} n_classes={params.n_classes}"]
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"layer{i}.weight shape={w.shape[0]}x{w.shape[1]}")
        for row in w:
            lines.append(",".join(repr(float(v)) for v in row))
        lines.append(f"layer{i}.bias shape={b.shape[0]}")
        lines.append(",".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_params(path) -> ModelParams:
    """Read parameters written by :func:`save_params`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("meta "):
        raise ValueError("parameter file must start with a meta line")
    meta = dict(part.split("=") for part in lines[0].removeprefix("meta ").split())
    n_bins = int(meta["n_bins"])
    n_classes = int(meta["n_classes"])
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    i = 1
    while i < len(lines):
        header = lines[i]
        if header.startswith("layer") and ".weight" in header:
            rows = int(header.split("shape=")[1].split("x")[0])
            block = [
                [float(v) for v in lines[i + 1 + r].split(",")] for r in range(rows)
            ]
            weights.append(np.array(block))
            i += 1 + rows
        elif header.startswith("layer") and ".bias" in header:
            biases.append(np.array([float(v) for v in lines[i + 1].split(",")]))
            i += 2
        elif not header.strip():
            i += 1
        else:
            raise ValueError(f"unrecognized parameter line {i + 1}: {header!r}")
    if len(weights) != len(biases) or not weights:
        raise ValueError("parameter file has mismatched weight and bias blocks")
    return ModelParams(weights, biases, n_bins, n_classes)
