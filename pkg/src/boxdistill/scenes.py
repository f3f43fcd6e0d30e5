"""Synthetic one-object scenes with controllable localization ambiguity.

Each sample is a single ground-truth box observed from an anchor point.
The feature vector carries the four edge offsets corrupted by zero-mean
Gaussian noise whose scale is ``sigma`` on the two edges designated
ambiguous for the sample's class and ``sigma / 10`` on the crisp edges,
followed by a one-hot class indicator, a squared auxiliary view of the
offsets with its own (smaller) noise, and pure-noise distractor channels.
The auxiliary view is informative but nonlinear in the offsets, so wider
models can fuse it with the direct channels while small ones mostly cannot.

With ``sigma = 0`` the first four channels equal the offsets exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distributions import EdgeSupport, default_support
from .geometry import AnchorPoint, Box, decode_box
from .validation import check_non_negative

logger = logging.getLogger(__name__)

CRISP_NOISE_FACTOR = 0.1
AUX_NOISE_FACTOR = 1.0 / 32.0


@dataclass(eq=False)
class SceneSample:
    """One synthetic scene: features, the observation anchor, and the truth."""

    features: np.ndarray
    anchor: AnchorPoint
    gt_box: Box
    gt_class: int
    ambiguity: np.ndarray  # per-edge noise scale, (top, bottom, left, right)


def ambiguous_edges(class_id: int) -> tuple[int, int]:
    """The two hard-to-locate edges of a class, as indices into
    (top, bottom, left, right)."""
    if class_id < 0:
        raise ValueError(f"class_id must be non-negative, got {class_id}")
    return (class_id % 4, (class_id + 1) % 4)


def feature_size(n_classes: int, n_distractors: int) -> int:
    return 8 + n_classes + n_distractors


def generate_dataset(
    count: int,
    sigma: float,
    seed: int,
    *,
    n_classes: int = 2,
    n_distractors: int = 3,
    support: EdgeSupport | None = None,
) -> list[SceneSample]:
    """Draw ``count`` scenes; identical arguments give identical samples."""
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if n_distractors < 0:
        raise ValueError(f"n_distractors must be non-negative, got {n_distractors}")
    check_non_negative("sigma", sigma)
    support = support or default_support()

    rng = np.random.default_rng(seed)
    span = support.e_max - support.e_min
    low = support.e_min + 0.125 * span
    high = support.e_max - 0.125 * span

    samples: list[SceneSample] = []
    clamped = 0
    for _ in range(count):
        class_id = int(rng.integers(n_classes))
        anchor = AnchorPoint(*(rng.uniform(2.0 * span, 4.0 * span, size=2)))
        offsets = rng.uniform(low, high, size=4)
        clipped = np.clip(offsets, support.e_min, support.e_max)
        clamped += int(np.sum(clipped != offsets))

        noise_scale = np.full(4, sigma * CRISP_NOISE_FACTOR)
        noise_scale[list(ambiguous_edges(class_id))] = sigma
        direct = clipped + rng.normal(size=4) * noise_scale

        onehot = np.zeros(n_classes)
        onehot[class_id] = 1.0
        aux = (clipped / support.e_max) ** 2 + rng.normal(size=4) * (
            noise_scale * AUX_NOISE_FACTOR
        )
        distractors = rng.normal(size=n_distractors)

        features = np.concatenate([direct, onehot, aux, distractors])
        gt_box = decode_box(anchor, clipped, score=1.0, class_id=class_id)
        samples.append(SceneSample(features, anchor, gt_box, class_id, noise_scale))

    if clamped:
        logger.warning("clamped %d ground-truth offsets into the edge support", clamped)
    return samples


def generate_object_views(
    n_objects: int,
    views_per_object: int,
    sigma: float,
    seed: int,
    *,
    n_classes: int = 2,
    n_distractors: int = 3,
    support: EdgeSupport | None = None,
    anchor_jitter: float = 1.0,
) -> list[SceneSample]:
    """Scenes where each object is observed several times from jittered
    anchors, so a detector produces redundant near-duplicate boxes.

    Useful for demonstrating suppression behaviour; samples of one object
    share its ground-truth box.
    """
    if n_objects < 1 or views_per_object < 1:
        raise ValueError("need at least one object and one view per object")
    check_non_negative("anchor_jitter", anchor_jitter)
    support = support or default_support()
    rng = np.random.default_rng(seed)
    span = support.e_max - support.e_min
    low = support.e_min + 0.25 * span
    high = support.e_max - 0.25 * span

    samples: list[SceneSample] = []
    for _ in range(n_objects):
        class_id = int(rng.integers(n_classes))
        base_anchor = rng.uniform(2.0 * span, 4.0 * span, size=2)
        offsets = rng.uniform(low, high, size=4)
        gt_box = decode_box(AnchorPoint(*base_anchor), offsets, class_id=class_id)

        noise_scale = np.full(4, sigma * CRISP_NOISE_FACTOR)
        noise_scale[list(ambiguous_edges(class_id))] = sigma
        for _ in range(views_per_object):
            shift = rng.uniform(-anchor_jitter, anchor_jitter, size=2)
            anchor = AnchorPoint(base_anchor[0] + shift[0], base_anchor[1] + shift[1])
            view_offsets = np.array(
                [
                    anchor.y - gt_box.y1,
                    gt_box.y2 - anchor.y,
                    anchor.x - gt_box.x1,
                    gt_box.x2 - anchor.x,
                ]
            )
            direct = view_offsets + rng.normal(size=4) * noise_scale
            onehot = np.zeros(n_classes)
            onehot[class_id] = 1.0
            aux = (np.clip(view_offsets, support.e_min, support.e_max) / support.e_max) ** 2
            aux = aux + rng.normal(size=4) * (noise_scale * AUX_NOISE_FACTOR)
            distractors = rng.normal(size=n_distractors)
            features = np.concatenate([direct, onehot, aux, distractors])
            samples.append(SceneSample(features, anchor, gt_box, class_id, noise_scale))
    return samples


def _format_floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_dataset(samples: list[SceneSample], path) -> None:
    """Write samples as line-delimited text; floats round-trip exactly."""
    lines = []
    for sample in samples:
        lines.append(
            "|".join(
                [
                    f"features={_format_floats(sample.features)}",
                    f"anchor={_format_floats((sample.anchor.x, sample.anchor.y))}",
                    f"gt={_format_floats(sample.gt_box.corners())}",
                    f"class={sample.gt_class}",
                    f"ambiguity={_format_floats(sample.ambiguity)}",
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_fields(line: str, line_no: int) -> dict[str, str]:
    fields: dict[str, str] = {}
    for part in line.split("|"):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"line {line_no}: malformed field {part!r}")
        fields[key.strip()] = value.strip()
    return fields


def load_dataset(path) -> list[SceneSample]:
    """Read a dataset written by :func:`save_dataset`."""
    samples: list[SceneSample] = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = _parse_fields(line, line_no)
        missing = {"features", "anchor", "gt", "class", "ambiguity"} - fields.keys()
        if missing:
            raise ValueError(f"line {line_no}: missing fields {sorted(missing)}")
        try:
            features = np.array([float(v) for v in fields["features"].split(",")])
            ax, ay = (float(v) for v in fields["anchor"].split(","))
            x1, y1, x2, y2 = (float(v) for v in fields["gt"].split(","))
            gt_class = int(fields["class"])
            ambiguity = np.array([float(v) for v in fields["ambiguity"].split(",")])
        except ValueError as exc:
            raise ValueError(f"line {line_no}: {exc}") from None
        samples.append(
            SceneSample(
                features,
                AnchorPoint(ax, ay),
                Box(x1, y1, x2, y2, score=1.0, class_id=gt_class),
                gt_class,
                ambiguity,
            )
        )
    if not samples:
        raise ValueError("dataset file contains no samples")
    return samples
