"""Experiment configuration: a flat ``key = value`` text format.

Widths are written ``64x32`` (one model) and assistant ladders as a
comma-separated list of widths, e.g. ``48x24,16``. Optional numeric fields
accept the literal ``auto``. Lines starting with ``#`` and blank lines are
ignored. An empty file yields all defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .validation import ConfigurationError


class ConfigParseError(ValueError):
    """Raised when a config file cannot be parsed; message carries the
    1-based line number."""


@dataclass
class ExperimentConfig:
    # dataset
    n_train: int = 384
    n_eval: int = 160
    sigma: float = 1.5
    n_classes: int = 2
    n_distractors: int = 3
    # model ladder
    teacher_widths: tuple[int, ...] = (64, 32)
    assistant_widths: tuple[tuple[int, ...], ...] = ((24,),)
    student_widths: tuple[int, ...] = (8,)
    # training
    epochs: int = 25
    teacher_epochs: int | None = None
    lr: float = 0.3
    lr_decay_factor: float = 0.1
    lr_decay_epoch: int | None = None
    batch_size: int = 32
    # distillation
    temperature: float = 10.0
    lambda_reg: float = 2.0
    lambda_dfl: float = 0.25
    lambda_distill: float | None = None
    class_weight: float = 1.0
    # evaluation / sweeps
    nms_threshold: float = 0.6
    n_seeds: int = 3
    taus: tuple[float, ...] = (1.0, 5.0, 10.0, 15.0, 20.0)
    # bookkeeping
    seed: int = 0
    out_dir: str = "runs"

    def validate(self) -> "ExperimentConfig":
        """Raise ConfigurationError naming the first offending field."""
        positive_ints = {
            "n_train": self.n_train,
            "n_eval": self.n_eval,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "n_seeds": self.n_seeds,
        }
        for name, value in positive_ints.items():
            if value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value}")
        if self.n_classes < 2:
            raise ConfigurationError(f"n_classes must be at least 2, got {self.n_classes}")
        if self.n_distractors < 0:
            raise ConfigurationError(f"n_distractors must be >= 0, got {self.n_distractors}")
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be > 0, got {self.temperature}")
        for name, value in (
            ("lr", self.lr),
            ("lr_decay_factor", self.lr_decay_factor),
            ("lambda_reg", self.lambda_reg),
            ("lambda_dfl", self.lambda_dfl),
            ("class_weight", self.class_weight),
        ):
            if value < 0:
                raise ConfigurationError(f"{name} must be >= 0, got {value}")
        if self.lambda_distill is not None and self.lambda_distill < 0:
            raise ConfigurationError(
                f"lambda_distill must be >= 0 or auto, got {self.lambda_distill}"
            )
        if not 0.0 <= self.nms_threshold <= 1.0:
            raise ConfigurationError(
                f"nms_threshold must lie in [0, 1], got {self.nms_threshold}"
            )
        if self.teacher_epochs is not None and self.teacher_epochs < 1:
            raise ConfigurationError(
                f"teacher_epochs must be a positive integer or auto, got {self.teacher_epochs}"
            )
        if self.lr_decay_epoch is not None and self.lr_decay_epoch < 0:
            raise ConfigurationError(
                f"lr_decay_epoch must be >= 0 or auto, got {self.lr_decay_epoch}"
            )
        for label, widths in (
            ("teacher_widths", self.teacher_widths),
            ("student_widths", self.student_widths),
            *((f"assistant_widths[{i}]", w) for i, w in enumerate(self.assistant_widths)),
        ):
            if len(widths) == 0 or any(w < 1 for w in widths):
                raise ConfigurationError(f"{label} must list positive layer widths, got {widths}")
        if len(self.taus) == 0 or any(t <= 0 for t in self.taus):
            raise ConfigurationError(f"taus must all be > 0, got {self.taus}")
        return self


def _parse_widths(text: str) -> tuple[int, ...]:
    parts = [p for p in text.strip().split("x") if p]
    if not parts:
        raise ValueError("expected widths like 64x32")
    return tuple(int(p) for p in parts)


def _format_widths(widths: tuple[int, ...]) -> str:
    return "x".join(str(w) for w in widths)


def _parse_ladder(text: str) -> tuple[tuple[int, ...], ...]:
    text = text.strip()
    if text in ("", "none"):
        return ()
    return tuple(_parse_widths(part) for part in text.split(","))


def _format_ladder(ladder: tuple[tuple[int, ...], ...]) -> str:
    return ",".join(_format_widths(w) for w in ladder) or "none"


def _parse_taus(text: str) -> tuple[float, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of temperatures")
    return tuple(float(p) for p in parts)


def _optional(parser):
    return lambda text: None if text.strip() == "auto" else parser(text)


_FORMATTERS = {
    "teacher_widths": _format_widths,
    "student_widths": _format_widths,
    "assistant_widths": _format_ladder,
    "taus": lambda taus: ",".join(repr(t) for t in taus),
}


def _format_value(name: str, value) -> str:
    if value is None:
        return "auto"
    if name in _FORMATTERS:
        return _FORMATTERS[name](value)
    return repr(value) if isinstance(value, float) else str(value)


_PARSERS = {
    "n_train": int,
    "n_eval": int,
    "sigma": float,
    "n_classes": int,
    "n_distractors": int,
    "teacher_widths": _parse_widths,
    "assistant_widths": _parse_ladder,
    "student_widths": _parse_widths,
    "epochs": int,
    "teacher_epochs": _optional(int),
    "lr": float,
    "lr_decay_factor": float,
    "lr_decay_epoch": _optional(int),
    "batch_size": int,
    "temperature": float,
    "lambda_reg": float,
    "lambda_dfl": float,
    "lambda_distill": _optional(float),
    "class_weight": float,
    "nms_threshold": float,
    "n_seeds": int,
    "taus": _parse_taus,
    "seed": int,
    "out_dir": lambda text: text.strip(),
}


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; unknown keys, malformed lines,
    and bad values raise with the 1-based line number."""
    text = Path(path).read_text(encoding="utf-8")
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _PARSERS:
            raise ConfigParseError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigParseError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value.strip())
        except ValueError as exc:
            raise ConfigParseError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return ExperimentConfig(**values).validate()


def save_config(config: ExperimentConfig, path) -> None:
    """Write every field in declaration order; load_config(save_config(c))
    round-trips to an equal config."""
    lines = [
        f"{f.name} = {_format_value(f.name, getattr(config, f.name))}"
        for f in fields(config)
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
