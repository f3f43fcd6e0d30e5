"""Discrete distributions over box-edge positions.

An edge offset is represented by a probability vector over ``n`` uniformly
spaced candidate positions in ``[e_min, e_max]``. Logits become
probabilities through a temperature softmax; the scalar offset is recovered
as the expectation of the position grid under the distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AnchorPoint, Box, decode_box
from .validation import check_vector

# Lower clamp applied to reference probabilities inside KL so that
# near-Dirac distributions keep the divergence finite.
KL_EPS = 1e-12

EDGE_NAMES = ("top", "bottom", "left", "right")

DEFAULT_E_MIN = 0.0
DEFAULT_E_MAX = 16.0
DEFAULT_N_BINS = 17


class EdgeSupport:
    """Uniformly spaced candidate positions for one edge offset."""

    __slots__ = ("e_min", "e_max", "n", "delta", "positions")

    def __init__(self, e_min: float, e_max: float, n: int):
        e_min = float(e_min)
        e_max = float(e_max)
        n = int(n)
        if not (math.isfinite(e_min) and math.isfinite(e_max)):
            raise ValueError("support endpoints must be finite")
        if not e_min < e_max:
            raise ValueError(f"support needs e_min < e_max, got [{e_min}, {e_max}]")
        if n < 2:
            raise ValueError(f"support needs at least 2 positions, got {n}")
        positions = np.linspace(e_min, e_max, n)
        positions.flags.writeable = False
        self.e_min = e_min
        self.e_max = e_max
        self.n = n
        self.delta = (e_max - e_min) / (n - 1)
        self.positions = positions

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EdgeSupport):
            return NotImplemented
        return (self.e_min, self.e_max, self.n) == (other.e_min, other.e_max, other.n)

    def __hash__(self) -> int:
        return hash((self.e_min, self.e_max, self.n))

    def __repr__(self) -> str:
        return f"EdgeSupport({self.e_min}, {self.e_max}, {self.n})"


def default_support() -> EdgeSupport:
    """The conventional 17-position grid over [0, 16]."""
    return EdgeSupport(DEFAULT_E_MIN, DEFAULT_E_MAX, DEFAULT_N_BINS)


def softmax_with_temperature(z, tau: float) -> np.ndarray:
    """Softmax of ``z / tau``, computed with max subtraction.

    Small temperatures sharpen the distribution toward a point mass at the
    largest logit; large temperatures flatten it toward uniform.
    """
    z = check_vector("logits", z)
    if not (math.isfinite(tau) and tau > 0.0):
        raise ValueError(f"temperature must be positive, got {tau}")
    shifted = (z - z.max()) / tau
    exps = np.exp(shifted)
    return exps / exps.sum()


def expect(support: EdgeSupport, probabilities) -> float:
    """Expectation of the support grid under ``probabilities``."""
    p = check_vector("probabilities", probabilities, length=support.n)
    return float(np.dot(support.positions, p))


def kl_divergence(p, q, *, eps: float = KL_EPS) -> float:
    """KL(p || q) with the reference ``q`` clamped below at ``eps``.

    Terms with p_i == 0 contribute zero, so a Dirac ``p`` against any ``q``
    stays finite.
    """
    p = check_vector("p", p)
    q = check_vector("q", q, length=p.size)
    q = np.maximum(q, eps)
    terms = np.where(p > 0.0, p * (np.log(np.maximum(p, eps)) - np.log(q)), 0.0)
    return float(terms.sum())


@dataclass(frozen=True)
class TargetProjection:
    """A continuous target split over the two support bins that bracket it.

    ``w_left * positions[index] + w_right * positions[index + 1]`` rebuilds
    the (clamped) target exactly.
    """

    index: int
    w_left: float
    w_right: float
    clamped: bool


def project_target(y: float, support: EdgeSupport) -> TargetProjection:
    """Locate ``y`` between two adjacent support positions.

    Targets outside the support are clamped to its ends and flagged.
    """
    y = float(y)
    if not math.isfinite(y):
        raise ValueError(f"target must be finite, got {y}")
    clamped = y < support.e_min or y > support.e_max
    yc = min(max(y, support.e_min), support.e_max)
    index = int((yc - support.e_min) / support.delta)
    index = min(max(index, 0), support.n - 2)
    w_right = float((yc - support.positions[index]) / support.delta)
    w_right = min(max(w_right, 0.0), 1.0)
    return TargetProjection(index, 1.0 - w_right, w_right, clamped)


@dataclass(frozen=True)
class BoxDistribution:
    """Per-edge logits for one box; rows follow ``EDGE_NAMES`` order."""

    logits: np.ndarray
    support: EdgeSupport

    def __post_init__(self) -> None:
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.shape != (4, self.support.n):
            raise ValueError(
                f"logits must have shape (4, {self.support.n}), got {logits.shape}"
            )
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", logits)

    def probabilities(self, tau: float = 1.0) -> np.ndarray:
        """Per-edge distributions at temperature ``tau``, shape (4, n)."""
        return np.stack([softmax_with_temperature(row, tau) for row in self.logits])

    def expected_offsets(self, tau: float = 1.0) -> np.ndarray:
        """Expectation-decoded (top, bottom, left, right) offsets."""
        return self.probabilities(tau) @ self.support.positions


def decode_bbox(
    distribution: BoxDistribution,
    anchor: AnchorPoint,
    *,
    tau: float = 1.0,
    score: float = 1.0,
    class_id: int = 0,
) -> Box:
    """Expectation-decode a box distribution into a concrete box."""
    offsets = distribution.expected_offsets(tau)
    return decode_box(anchor, offsets, score=score, class_id=class_id)
