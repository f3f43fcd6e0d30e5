"""Distributional bounding-box regression with localization distillation.

Box edges are predicted as discrete distributions over a fixed support,
decoded by expectation, and trained with a composed objective of GIoU
regression, a distribution focal term, and (optionally) tempered KL
toward a teacher's edge distributions. On top of the core losses the
package ships a toy MLP detector on synthetic scenes, distillation
pipelines (teacher to student, self, and teacher-assistant chains), and
a command line for reproducible experiments.
"""

from .autodiff import GradCheckReport, Node, Tape, finite_difference_check
from .config import ConfigParseError, ExperimentConfig, load_config, save_config
from .distributions import (
    BoxDistribution,
    EdgeSupport,
    TargetProjection,
    decode_bbox,
    default_support,
    expect,
    kl_divergence,
    project_target,
    softmax_with_temperature,
)
from .estimator import EpochStats, ToyDetector
from .geometry import AnchorPoint, Box, box_offsets, decode_box, giou, iou, nms
from .losses import (
    DistillConfig,
    LossWeights,
    box_distill_loss,
    classification_kd_loss,
    distribution_focal_loss,
    edge_distill_loss,
    giou_regression_loss,
    tbr_gate_active,
    teacher_bounded_regression_loss,
    total_loss,
)
from .metrics import AP_THRESHOLDS, DetectionMetrics, average_precision, evaluate_metrics
from .network import ModelConfig, ModelParams, init_params, load_params, save_params
from .pipelines import (
    RunRecord,
    StageRecord,
    TAPath,
    distill_student,
    enumerate_ta_paths,
    nms_contrast,
    run_ta_sequence,
    save_run_record,
    self_distill,
    temperature_sweep,
    ta_sweep,
)
from .scenes import SceneSample, generate_dataset, generate_object_views, load_dataset, save_dataset
from .seeding import derive_seed
from .validation import ConfigurationError

__version__ = "0.1.0"

__all__ = [
    "AP_THRESHOLDS",
    "AnchorPoint",
    "Box",
    "BoxDistribution",
    "ConfigParseError",
    "ConfigurationError",
    "DetectionMetrics",
    "DistillConfig",
    "EdgeSupport",
    "EpochStats",
    "ExperimentConfig",
    "GradCheckReport",
    "LossWeights",
    "ModelConfig",
    "ModelParams",
    "Node",
    "RunRecord",
    "SceneSample",
    "StageRecord",
    "TAPath",
    "Tape",
    "TargetProjection",
    "ToyDetector",
    "average_precision",
    "box_distill_loss",
    "box_offsets",
    "classification_kd_loss",
    "decode_bbox",
    "decode_box",
    "default_support",
    "derive_seed",
    "distill_student",
    "distribution_focal_loss",
    "edge_distill_loss",
    "enumerate_ta_paths",
    "evaluate_metrics",
    "expect",
    "finite_difference_check",
    "generate_dataset",
    "generate_object_views",
    "giou",
    "giou_regression_loss",
    "init_params",
    "iou",
    "kl_divergence",
    "load_config",
    "load_dataset",
    "load_params",
    "nms",
    "nms_contrast",
    "project_target",
    "run_ta_sequence",
    "save_config",
    "save_dataset",
    "save_params",
    "save_run_record",
    "self_distill",
    "softmax_with_temperature",
    "ta_sweep",
    "tbr_gate_active",
    "teacher_bounded_regression_loss",
    "temperature_sweep",
    "total_loss",
]
