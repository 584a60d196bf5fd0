"""
Training recipes.

- train_teacher: (bi)LSTM teacher on hard cross-entropy, gradient clipping on
- cache_teacher_predictions: frozen teacher posteriors for every train and test example
- train_student: CNN student, baseline (lambda = 0) or blended with the cached teacher

Every recipe keeps the checkpoint with the best test accuracy, writes
``<name>.ckpt``, ``<name>.metrics.jsonl``, ``<name>.timing.jsonl`` and
``<name>.run_config.json`` into the output directory, and is bit-reproducible
for a fixed config and seed.
"""

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from blendkit.blending import BlendConfig, blended_loss, cross_entropy_hard
from blendkit.models import ClassDistribution, StudentModel, TeacherModel
from blendkit.repositories.cache_repo import TeacherCache, TeacherCacheRepository
from blendkit.repositories.checkpoint_repo import CheckpointRepository, decode_checkpoint, encode_checkpoint
from blendkit.repositories.artifact_repo import ArtifactRepository
from blendkit.repositories.metrics_repo import MetricsRepository
from blendkit.services.corpus_service import Corpus
from blendkit.services.dataset import Batch, make_batches
from blendkit.services.embed import EmbeddingService
from blendkit.services.evaluation import EVAL_BATCH_SIZE, EpochRecord, MetricsReport, predict_examples, score
from blendkit.services.optimizer import AdamState, adam_step, clip_grad_norm
from blendkit.tensor import Tensor, zero_grads
from blendkit.util.config import RunConfig, StudentConfig, TeacherConfig
from blendkit.util.errors import ConfigError, DivergenceError, InputError, NumericError
from blendkit.util.validation import require_existing_path

# Independent random streams per purpose, all derived from the run seed
TEACHER_INIT_STREAM = 1
TEACHER_DROPOUT_STREAM = 2
STUDENT_INIT_STREAM = 3
STUDENT_DROPOUT_STREAM = 4
SHUFFLE_STREAM = 5

Model = Union[TeacherModel, StudentModel]
LossFn = Callable[[Batch, Tensor], Tensor]


@dataclass
class TrainingResult:
    model: Model
    report: MetricsReport
    checkpoint: Path
    fingerprint: str


def shuffle_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, SHUFFLE_STREAM, epoch]).generate_state(1)[0])


class TrainerService:
    """
    Trains teacher and student models and builds teacher caches.

    Attributes:
        checkpoints (CheckpointRepository): Checkpoint files.
        caches (TeacherCacheRepository): Teacher cache files.
        metrics (MetricsRepository): Metrics records.
        artifacts (ArtifactRepository): Run config sidecars.
        embeddings (EmbeddingService): Embedding table construction.
        logger (logging.Logger): Logger for progress and errors.
    """

    def __init__(self, checkpoints: CheckpointRepository, caches: TeacherCacheRepository,
                 metrics: MetricsRepository, artifacts: ArtifactRepository,
                 embeddings: EmbeddingService, log: logging.Logger = None):
        self.checkpoints = checkpoints
        self.caches = caches
        self.metrics = metrics
        self.artifacts = artifacts
        self.embeddings = embeddings
        self.logger = log or logging.getLogger(__name__)

    # -- model construction ---------------------------------------------------

    def _embedding(self, cfg: RunConfig, corpus: Corpus, dim: int):
        path = require_existing_path("data.embeddings", cfg.data.embeddings) if cfg.data.embeddings else None
        table, _ = self.embeddings.build_table(corpus.vocab, dim, cfg.seed, path)
        return table

    def build_teacher(self, cfg: RunConfig, corpus: Corpus) -> TeacherModel:
        rng = np.random.default_rng([cfg.seed, TEACHER_INIT_STREAM])
        return TeacherModel.init(self._embedding(cfg, corpus, cfg.teacher.embedding_dim), cfg.teacher.hidden_size,
                                 corpus.num_classes, rng, cfg.teacher.bidirectional, cfg.teacher.dropout)

    def build_student(self, cfg: RunConfig, corpus: Corpus) -> StudentModel:
        rng = np.random.default_rng([cfg.seed, STUDENT_INIT_STREAM])
        return StudentModel.init(self._embedding(cfg, corpus, cfg.student.embedding_dim), cfg.student.filter_widths,
                                 cfg.student.filter_count, corpus.num_classes, rng, cfg.student.dropout)

    # -- recipes --------------------------------------------------------------

    def train_teacher(self, cfg: RunConfig, corpus: Corpus, out_dir: Path, name: str = "teacher") -> TrainingResult:
        """Train the teacher on hard labels and keep its best-test-accuracy checkpoint."""
        try:
            model = self.build_teacher(cfg, corpus)
            variant = "BiLSTM" if cfg.teacher.bidirectional else "LSTM"

            def loss_fn(batch, logits):
                return cross_entropy_hard(logits, batch.labels)

            return self._run(cfg, cfg.teacher, model, corpus, out_dir, name, variant, loss_fn,
                             TEACHER_DROPOUT_STREAM, teacher_test=None, settings={"seed": cfg.seed})
        except Exception as e:
            self.logger.error(f"Error training teacher: {e}")
            raise

    def cache_teacher_predictions(self, teacher_path: Path, corpus: Corpus, cache_path: Path,
                                  min_width: int = 5) -> TeacherCache:
        """Write the frozen teacher's posteriors for every train and test example."""
        try:
            teacher = self.checkpoints.load(teacher_path)
            if not isinstance(teacher, TeacherModel):
                raise ConfigError(f"{teacher_path} holds a {teacher.kind} checkpoint, expected a teacher")
            if teacher.num_classes != corpus.num_classes:
                raise ConfigError(f"teacher predicts {teacher.num_classes} classes, label map has {corpus.num_classes}")
            fingerprint = self.checkpoints.fingerprint(teacher_path)
            examples = list(corpus.train) + list(corpus.test)
            ids = [e.example_id for e in examples]
            if len(set(ids)) != len(ids):
                raise InputError("example ids are not unique across train and test files")
            dist = predict_examples(teacher, examples, EVAL_BATCH_SIZE, min_width)
            cache = TeacherCache(fingerprint, teacher.num_classes, dict(zip(ids, dist.probs)))
            self.caches.save(cache, cache_path)
            return cache
        except Exception as e:
            self.logger.error(f"Error caching teacher predictions: {e}")
            raise

    def train_student(self, cfg: RunConfig, corpus: Corpus, out_dir: Path, mode: str,
                      cache_path: Optional[Path] = None, teacher_path: Optional[Path] = None,
                      name: Optional[str] = None, blend: Optional[BlendConfig] = None) -> TrainingResult:
        """Train the CNN student.

        Args:
            cfg: Run configuration.
            corpus: Encoded train and test examples.
            out_dir: Output directory.
            mode: "baseline" (hard loss only) or "blended" (blended loss with ``blend.lambda_``).
            cache_path: Teacher cache; required in blended mode, optional in baseline mode
                where it only feeds the agreement rate.
            teacher_path: Teacher checkpoint whose fingerprint the cache must carry.
            name: Output file stem, default "student-<mode>".
            blend: Blend weights, default ``cfg.blend``.

        Raises:
            ConfigError: Blended mode without a cache, or a stale cache.
        """
        try:
            blend = blend or cfg.blend
            cache = self._load_cache(mode, cache_path, teacher_path)
            if mode == "baseline":
                blend = BlendConfig(0.0, blend.gamma, blend.temperature)
            elif mode != "blended":
                raise ConfigError(f"unknown student mode '{mode}'")
            teacher_test = None
            if cache is not None:
                teacher_test = ClassDistribution(cache.rows_for([e.example_id for e in corpus.test]), "teacher")
                # Fails early when a training example is missing from the cache
                cache.rows_for([e.example_id for e in corpus.train])

            def loss_fn(batch, logits):
                p_teacher = cache.rows_for(batch.example_ids) if blend.lambda_ > 0 else None
                return blended_loss(blend, p_teacher, logits, batch.labels)

            model = self.build_student(cfg, corpus)
            variant = "Blended" if mode == "blended" else "CNN"
            settings = {"seed": cfg.seed, "mode": mode, "lambda": blend.lambda_, "temperature": blend.temperature}
            return self._run(cfg, cfg.student, model, corpus, out_dir, name or f"student-{mode}", variant,
                             loss_fn, STUDENT_DROPOUT_STREAM, teacher_test, settings)
        except Exception as e:
            self.logger.error(f"Error training student: {e}")
            raise

    def _load_cache(self, mode: str, cache_path: Optional[Path],
                    teacher_path: Optional[Path]) -> Optional[TeacherCache]:
        if cache_path is None:
            if mode == "blended":
                raise ConfigError("blended student training needs a teacher cache (--cache)")
            return None
        expected = None
        if teacher_path is not None:
            expected = self.checkpoints.fingerprint(teacher_path)
        elif mode == "blended":
            raise ConfigError("blended student training needs the teacher checkpoint (--teacher) to verify the cache")
        return self.caches.load(cache_path, expected)

    # -- shared loop ----------------------------------------------------------

    def _run(self, cfg: RunConfig, recipe: Union[TeacherConfig, StudentConfig], model: Model, corpus: Corpus,
             out_dir: Path, name: str, variant: str, loss_fn: LossFn, dropout_stream: int,
             teacher_test: Optional[ClassDistribution], settings: dict) -> TrainingResult:
        out_dir = Path(out_dir)
        checkpoint = out_dir / f"{name}.ckpt"
        report, best_raw = self._fit(cfg, recipe, model, corpus, checkpoint, variant, loss_fn,
                                     dropout_stream, teacher_test)
        report.settings = settings
        report.label = name
        fingerprint = self.checkpoints.save_encoded(best_raw, checkpoint)
        self.metrics.write(out_dir / f"{name}.metrics.jsonl", report.to_records())
        self.metrics.write(out_dir / f"{name}.timing.jsonl", report.timing_records())
        self.artifacts.save_run_config(cfg.to_dict(), out_dir / f"{name}.run_config.json")
        self.logger.info(f"{variant}: best test accuracy {report.accuracy:.4f} at epoch {report.best_epoch}, "
                         f"trained in {report.train_seconds:.1f}s, checkpoint {checkpoint}")
        return TrainingResult(decode_checkpoint(best_raw, str(checkpoint)), report, checkpoint, fingerprint)

    def _fit(self, cfg: RunConfig, recipe, model: Model, corpus: Corpus, checkpoint: Path, variant: str,
             loss_fn: LossFn, dropout_stream: int, teacher_test: Optional[ClassDistribution]):
        if not corpus.train or not corpus.test:
            raise InputError("training needs non-empty train and test splits")
        min_width = cfg.pad_width
        params = model.named_parameters()
        adam = AdamState.for_params(params, recipe.lr, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.eps)
        dropout_rng = np.random.default_rng([cfg.seed, dropout_stream])
        records = []
        best_raw, best_report, best_epoch = None, None, None
        stale = 0
        started = time.perf_counter()

        for epoch in range(1, recipe.epochs + 1):
            epoch_started = time.perf_counter()
            last_good = encode_checkpoint(model)
            batches = make_batches(corpus.train, recipe.batch_size, shuffle_seed(cfg.seed, epoch), min_width)
            loss_sum, seen = 0.0, 0
            for step, batch in enumerate(batches, start=1):
                zero_grads(params.values())
                try:
                    loss = loss_fn(batch, model.logits(batch, training=True, rng=dropout_rng))
                    value = loss.item()
                    if not math.isfinite(value):
                        raise NumericError(f"loss is {value}")
                    loss.backward()
                    if recipe.clip_norm > 0:
                        clip_grad_norm(params, recipe.clip_norm)
                    adam_step(adam, params)
                except NumericError as e:
                    saved = checkpoint.with_name(checkpoint.stem + ".last_good.ckpt")
                    self.checkpoints.save_encoded(last_good, saved)
                    raise DivergenceError(f"{variant} diverged at epoch {epoch} step {step}: {e}; "
                                          f"last good checkpoint written to {saved}")
                loss_sum += value * len(batch)
                seen += len(batch)
                self.logger.debug(f"{variant} epoch {epoch} step {step}/{len(batches)} loss {value:.6f}")

            dist = predict_examples(model, corpus.test, EVAL_BATCH_SIZE, min_width)
            epoch_report = score(dist, corpus.test, model.kind, variant, corpus.name, teacher_test)
            record = EpochRecord(epoch, loss_sum / seen, epoch_report.accuracy, epoch_report.teacher_agreement,
                                 time.perf_counter() - epoch_started)
            records.append(record)
            agreement = "" if record.teacher_agreement is None else f" agreement {record.teacher_agreement:.4f}"
            self.logger.info(f"{variant} epoch {epoch}/{recipe.epochs}: loss {record.train_loss:.4f} "
                             f"test accuracy {record.test_accuracy:.4f}{agreement} ({record.seconds:.1f}s)")

            if best_report is None or epoch_report.accuracy > best_report.accuracy:
                best_raw, best_report, best_epoch, stale = encode_checkpoint(model), epoch_report, epoch, 0
            else:
                stale += 1
                if recipe.patience and stale >= recipe.patience:
                    self.logger.info(f"{variant}: no improvement for {stale} epochs, stopping early")
                    break

        best_report.epochs = records
        best_report.best_epoch = best_epoch
        best_report.train_seconds = time.perf_counter() - started
        best_report.parameter_count = model.parameter_count()
        return best_report, best_raw
