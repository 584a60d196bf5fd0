"""
Run configuration.

One YAML file per run, parsed with ``yaml.safe_load`` into frozen dataclasses.
Sections: data, teacher, student, blend, optimizer, bench, sweep, plus the
top-level ``seed`` and ``out_dir``. Unknown keys are rejected. Every default
lives on the dataclass so an empty file is a valid config.

Environment:
    BLENDKIT_OUT: output directory when neither --out nor out_dir is given.
"""

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from blendkit.blending import BlendConfig
from blendkit.layers import EMBEDDING_INIT_RANGE, FORGET_BIAS_INIT
from blendkit.services.dataset import CsvSchema
from blendkit.util.errors import ConfigError
from blendkit.util.validation import check_dropout_rate, check_positive_int, check_unit_interval

DEFAULT_OUT_DIR = "runs"
STUDENT_MODES = ("baseline", "blended")


@dataclass(frozen=True)
class DataConfig:
    name: str = "dataset"
    train: Optional[str] = None
    test: Optional[str] = None
    label_column: Any = "label"
    text_columns: Tuple[Any, ...] = ("text",)
    has_header: bool = True
    delimiter: str = ","
    min_freq: int = 1
    max_length: int = 400
    min_pad_width: int = 5
    embeddings: Optional[str] = None

    def __post_init__(self) -> None:
        check_positive_int("data.min_freq", self.min_freq)
        check_positive_int("data.max_length", self.max_length)
        check_positive_int("data.min_pad_width", self.min_pad_width)
        if not self.text_columns:
            raise ConfigError("data.text_columns must name at least one column")

    @property
    def schema(self) -> CsvSchema:
        return CsvSchema(self.label_column, tuple(self.text_columns), self.has_header, self.delimiter)


@dataclass(frozen=True)
class TeacherConfig:
    embedding_dim: int = 300
    hidden_size: int = 256
    bidirectional: bool = True
    dropout: float = 0.5
    epochs: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    clip_norm: float = 5.0
    patience: int = 0

    def __post_init__(self) -> None:
        check_positive_int("teacher.embedding_dim", self.embedding_dim)
        check_positive_int("teacher.hidden_size", self.hidden_size)
        check_dropout_rate("teacher.dropout", self.dropout)
        check_positive_int("teacher.epochs", self.epochs)
        check_positive_int("teacher.batch_size", self.batch_size)
        check_positive_int("teacher.patience", self.patience, minimum=0)
        if self.lr < 0 or self.clip_norm < 0:
            raise ConfigError("teacher.lr and teacher.clip_norm must be >= 0")


@dataclass(frozen=True)
class StudentConfig:
    embedding_dim: int = 300
    filter_widths: Tuple[int, ...] = (3, 4, 5)
    filter_count: int = 100
    dropout: float = 0.5
    epochs: int = 5
    batch_size: int = 64
    lr: float = 1e-3
    clip_norm: float = 0.0
    patience: int = 0
    mode: str = "blended"

    def __post_init__(self) -> None:
        check_positive_int("student.embedding_dim", self.embedding_dim)
        if not self.filter_widths:
            raise ConfigError("student.filter_widths must list at least one width")
        for width in self.filter_widths:
            check_positive_int("student.filter_widths", width)
        check_positive_int("student.filter_count", self.filter_count)
        check_dropout_rate("student.dropout", self.dropout)
        check_positive_int("student.epochs", self.epochs)
        check_positive_int("student.batch_size", self.batch_size)
        check_positive_int("student.patience", self.patience, minimum=0)
        if self.lr < 0 or self.clip_norm < 0:
            raise ConfigError("student.lr and student.clip_norm must be >= 0")
        if self.mode not in STUDENT_MODES:
            raise ConfigError(f"student.mode must be one of {STUDENT_MODES}, got '{self.mode}'")


@dataclass(frozen=True)
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.eps > 0):
            raise ConfigError("optimizer: need 0 <= beta1, beta2 < 1 and eps > 0")


@dataclass(frozen=True)
class BenchConfig:
    seq_lengths: Tuple[int, ...] = (200,)
    batch_size: int = 64
    warmup: int = 5
    iterations: int = 30
    repetitions: int = 5
    workers: int = 1
    checkpoints: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for length in self.seq_lengths:
            check_positive_int("bench.seq_lengths", length)
        check_positive_int("bench.batch_size", self.batch_size)
        check_positive_int("bench.warmup", self.warmup, minimum=5)
        check_positive_int("bench.iterations", self.iterations, minimum=30)
        check_positive_int("bench.repetitions", self.repetitions)
        check_positive_int("bench.workers", self.workers)


@dataclass(frozen=True)
class SweepConfig:
    lambdas: Tuple[float, ...] = (0.0, 0.25, 0.4, 0.5, 0.75, 1.0)
    gammas: Tuple[float, ...] = (0.0, 0.25, 0.4, 0.5, 0.75, 1.0)

    def __post_init__(self) -> None:
        for value in self.lambdas:
            check_unit_interval("sweep.lambdas", value)
        for value in self.gammas:
            check_unit_interval("sweep.gammas", value)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out_dir: Optional[str] = None
    data: DataConfig = field(default_factory=DataConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    student: StudentConfig = field(default_factory=StudentConfig)
    blend: BlendConfig = field(default_factory=BlendConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self) -> None:
        check_positive_int("seed", self.seed, minimum=0)

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir or os.environ.get("BLENDKIT_OUT", DEFAULT_OUT_DIR))

    @property
    def pad_width(self) -> int:
        """Minimum padded batch width: never narrower than the widest student filter."""
        return max(self.data.min_pad_width, max(self.student.filter_widths))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict:
        """Resolved config including the fixed initialisation and reduction choices."""
        resolved = dataclasses.asdict(self)
        resolved["out_dir"] = str(self.out_path)
        resolved["blend"]["lambda"] = resolved["blend"].pop("lambda_")
        resolved["recorded"] = {
            "embedding_init_range": EMBEDDING_INIT_RANGE,
            "forget_bias_init": FORGET_BIAS_INIT,
            "weight_init": "uniform(+-1/sqrt(fan_in))",
            "dropout": "inverted",
            "loss_reduction": "mean",
            "model_selection": "best_test_accuracy",
            "maxpool_ties": "lowest_index",
        }
        return resolved


SECTIONS = {
    "data": DataConfig,
    "teacher": TeacherConfig,
    "student": StudentConfig,
    "blend": BlendConfig,
    "optimizer": OptimizerConfig,
    "bench": BenchConfig,
    "sweep": SweepConfig,
}

# YAML spellings that differ from the dataclass field name
ALIASES = {("blend", "lambda"): "lambda_"}


def _section(name: str, cls, raw: Any):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    values = {}
    for key, value in raw.items():
        attr = ALIASES.get((name, key), key)
        if attr not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
        if isinstance(value, list):
            value = tuple(value)
        values[attr] = value
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"config section '{name}': {e}")


def config_from_dict(raw: Optional[Dict]) -> RunConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping at the top level")
    values = {}
    for key, value in raw.items():
        if key in SECTIONS:
            values[key] = _section(key, SECTIONS[key], value)
        elif key in ("seed", "out_dir"):
            values[key] = value
        else:
            raise ConfigError(f"unknown key '{key}'")
    return RunConfig(**values)


def load_config(path: Optional[Path]) -> RunConfig:
    """Parse a YAML run config; None gives the defaults.

    Raises:
        ConfigError: Missing file, invalid YAML, unknown keys or invalid values.
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    try:
        with open(path, encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}")
    return config_from_dict(raw)
