"""
Inference latency benchmark.

Each target model is timed on a fixed random batch per sequence length:
``warmup`` untimed forward passes, then ``iterations`` individually timed
passes, repeated ``repetitions`` times. A row reports the median of the
per-repetition medians together with the quartiles of all samples, and its
ratio to the reference student CNN at the same sequence length (which is
1.0 by definition).

Timing is single-threaded unless ``workers > 1``, in which case an extra,
separately labelled row times the reference CNN with the batch sharded
across a thread pool.
"""

import logging
import os
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from blendkit.models import StudentModel, TeacherModel
from blendkit.services.dataset import Batch
from blendkit.tensor import no_grad
from blendkit.util.errors import BenchError, ConfigError

logger = logging.getLogger(__name__)

MIN_TICKS_PER_ITERATION = 100
THREAD_ENV_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

Model = Union[TeacherModel, StudentModel]


@dataclass(frozen=True)
class BenchTarget:
    label: str
    model: Model
    variant: str = ""

    @property
    def resolved_variant(self) -> str:
        if self.variant:
            return self.variant
        if isinstance(self.model, TeacherModel):
            return "BiLSTM" if self.model.bidirectional else "LSTM"
        return "CNN"


@dataclass(frozen=True)
class BenchSpec:
    """What to time and how.

    Attributes:
        targets: Models to time; at least one student.
        seq_lengths: Token count of every row of the timed batch.
        batch_size: Rows per timed batch.
        warmup: Untimed passes per repetition (>= 5).
        iterations: Timed passes per repetition (>= 30).
        repetitions: Independent repetitions.
        workers: Threads for the extra sharded CNN row; 1 disables it.
        ensemble: Add a teacher + student row when both kinds are present.
        seed: Seed for the random token batches.
    """

    targets: Tuple[BenchTarget, ...]
    seq_lengths: Tuple[int, ...] = (200,)
    batch_size: int = 64
    warmup: int = 5
    iterations: int = 30
    repetitions: int = 5
    workers: int = 1
    ensemble: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 30:
            raise ConfigError(f"bench needs at least 30 measured iterations, got {self.iterations}")
        if self.warmup < 5:
            raise ConfigError(f"bench needs at least 5 warmup iterations, got {self.warmup}")
        if self.repetitions < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigError("bench repetitions, batch_size and workers must be >= 1")
        if not self.targets:
            raise ConfigError("bench needs at least one model to time")
        if not any(isinstance(t.model, StudentModel) for t in self.targets):
            raise ConfigError("bench needs a student CNN checkpoint as the 1.0x reference")


@dataclass
class BenchRow:
    label: str
    model: str
    variant: str
    seq_length: int
    batch_size: int
    threads: int
    median_s: float
    q1_s: float
    q3_s: float
    ratio: float
    parameter_count: int
    samples: List[List[float]] = field(repr=False, default_factory=list)

    @property
    def iqr_s(self) -> float:
        return self.q3_s - self.q1_s

    def to_record(self) -> Dict:
        return {
            "record": "latency",
            "label": self.label,
            "model": self.model,
            "variant": self.variant,
            "seq_length": self.seq_length,
            "batch_size": self.batch_size,
            "threads": self.threads,
            "median_s": self.median_s,
            "q1_s": self.q1_s,
            "q3_s": self.q3_s,
            "iqr_s": self.iqr_s,
            "ratio": self.ratio,
            "parameter_count": self.parameter_count,
        }

    def sample_record(self) -> Dict:
        return {"record": "samples", "label": self.label, "seq_length": self.seq_length,
                "threads": self.threads, "seconds": self.samples}


@dataclass
class BenchReport:
    rows: List[BenchRow]
    context: Dict

    def to_records(self) -> List[Dict]:
        return [dict(self.context, record="context")] + [row.to_record() for row in self.rows]

    def sample_records(self) -> List[Dict]:
        return [row.sample_record() for row in self.rows]

    def row(self, label: str, seq_length: int) -> BenchRow:
        for row in self.rows:
            if row.label == label and row.seq_length == seq_length:
                return row
        raise KeyError(f"no bench row for {label} at length {seq_length}")


def bench_context() -> Dict:
    clock = time.get_clock_info("perf_counter")
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "clock": clock.implementation,
        "clock_resolution_s": clock.resolution,
        "threads_env": {name: os.environ.get(name) for name in THREAD_ENV_VARS},
    }


def random_batch(vocab_size: int, seq_length: int, batch_size: int, seed: int) -> Batch:
    rng = np.random.default_rng([seed, seq_length])
    # Ids 0 and 1 are pad and unk
    ids = rng.integers(2, max(vocab_size, 3), size=(batch_size, seq_length))
    ids = np.minimum(ids, vocab_size - 1)
    lengths = np.full(batch_size, seq_length, dtype=np.int64)
    return Batch(ids.astype(np.int64), lengths, np.zeros(batch_size, dtype=np.int64),
                 [f"bench:{i}" for i in range(batch_size)])


def time_callable(fn: Callable[[], object], warmup: int, iterations: int, repetitions: int) -> List[List[float]]:
    """Per-repetition lists of per-iteration wall-clock seconds, warmup excluded."""
    samples = []
    for _ in range(repetitions):
        for _ in range(warmup):
            fn()
        timings = []
        for _ in range(iterations):
            start = time.perf_counter()
            fn()
            timings.append(time.perf_counter() - start)
        samples.append(timings)
    return samples


def summarize(samples: List[List[float]]) -> Tuple[float, float, float]:
    """Median of the repetition medians, then the first and third quartile of all samples."""
    median = statistics.median(statistics.median(rep) for rep in samples)
    q1, q3 = np.percentile(np.concatenate([np.asarray(rep) for rep in samples]), [25, 75])
    return float(median), float(q1), float(q3)


def _forward(model: Model, batch: Batch) -> Callable[[], object]:
    def run():
        with no_grad():
            return model.logits(batch, training=False)
    return run


def _sharded_forward(model: Model, batch: Batch, pool: ThreadPoolExecutor, workers: int) -> Callable[[], object]:
    bounds = np.linspace(0, len(batch), workers + 1).astype(int)
    shards = [
        Batch(batch.ids[a:b], batch.lengths[a:b], batch.labels[a:b], batch.example_ids[a:b])
        for a, b in zip(bounds[:-1], bounds[1:]) if b > a
    ]

    def shard(part: Batch):
        with no_grad():
            return model.logits(part, training=False)

    def run():
        return list(pool.map(shard, shards))
    return run


def _reference(targets: Sequence[BenchTarget]) -> BenchTarget:
    students = [t for t in targets if isinstance(t.model, StudentModel)]
    plain = [t for t in students if t.resolved_variant == "CNN"]
    return (plain or students)[0]


def run_latency_bench(spec: BenchSpec, log: Optional[logging.Logger] = None) -> BenchReport:
    """Time every target at every sequence length and normalise to the reference CNN.

    Raises:
        BenchError: If a median iteration is shorter than 100 clock ticks.
    """
    log = log or logger
    resolution = time.get_clock_info("perf_counter").resolution
    reference = _reference(spec.targets)
    teacher = next((t for t in spec.targets if isinstance(t.model, TeacherModel)), None)
    rows: List[BenchRow] = []

    def measure(label, model_kind, variant, threads, params, fn, seq_length) -> BenchRow:
        samples = time_callable(fn, spec.warmup, spec.iterations, spec.repetitions)
        median, q1, q3 = summarize(samples)
        if median < MIN_TICKS_PER_ITERATION * resolution:
            raise BenchError(
                f"{label} at length {seq_length}: median {median:.3g}s is under {MIN_TICKS_PER_ITERATION} "
                f"ticks of the {resolution:.3g}s clock; increase the batch size")
        log.info(f"{label} len={seq_length} threads={threads}: median {median * 1e3:.3f} ms "
                 f"(IQR {(q3 - q1) * 1e3:.3f} ms)")
        return BenchRow(label, model_kind, variant, seq_length, spec.batch_size, threads,
                        median, q1, q3, 0.0, params, samples)

    for seq_length in spec.seq_lengths:
        batches = {}

        def batch_for(model: Model) -> Batch:
            size = model.embedding.vocab_size
            if size not in batches:
                batches[size] = random_batch(size, seq_length, spec.batch_size, spec.seed)
            return batches[size]

        length_rows = []
        for target in spec.targets:
            length_rows.append(measure(target.label, target.model.kind, target.resolved_variant, 1,
                                       target.model.parameter_count(), _forward(target.model, batch_for(target.model)),
                                       seq_length))
        if spec.ensemble and teacher is not None:
            teacher_fn = _forward(teacher.model, batch_for(teacher.model))
            student_fn = _forward(reference.model, batch_for(reference.model))

            def both():
                teacher_fn()
                student_fn()

            length_rows.append(measure(f"{teacher.label}+{reference.label}", "ensemble", "Ensemble", 1,
                                       teacher.model.parameter_count() + reference.model.parameter_count(),
                                       both, seq_length))
        if spec.workers > 1:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                fn = _sharded_forward(reference.model, batch_for(reference.model), pool, spec.workers)
                length_rows.append(measure(f"{reference.label} x{spec.workers} workers", "student",
                                           reference.resolved_variant, spec.workers,
                                           reference.model.parameter_count(), fn, seq_length))

        reference_median = next(r.median_s for r in length_rows if r.label == reference.label and r.threads == 1)
        for row in length_rows:
            row.ratio = row.median_s / reference_median
        rows.extend(length_rows)

    return BenchReport(rows, dict(bench_context(), reference=reference.label, batch_size=spec.batch_size,
                                  warmup=spec.warmup, iterations=spec.iterations,
                                  repetitions=spec.repetitions, seed=spec.seed))
