import os
from pathlib import Path
from typing import Any, Dict, Optional

from blendkit.blending import BlendConfig
from blendkit.repositories.artifact_repo import ArtifactRepository
from blendkit.repositories.cache_repo import TeacherCacheRepository
from blendkit.repositories.checkpoint_repo import CheckpointRepository
from blendkit.repositories.metrics_repo import MetricsRepository
from blendkit.services.corpus_service import CorpusService
from blendkit.services.embed import EmbeddingService
from blendkit.services.evaluation import EvaluationService
from blendkit.services.sweep import SweepService
from blendkit.services.trainer import TrainerService
from blendkit.util.config import RunConfig
from blendkit.util.errors import ConfigError
from blendkit.util.run_logger import create_logger
from blendkit.util.validation import require_existing_path

run_name = os.environ.get("BLENDKIT_RUN_NAME", "blendkit-train")

# Setup logging
logger = create_logger(run_name)

# Initialize repositories and services
checkpoints = CheckpointRepository(logger=logger)
caches = TeacherCacheRepository(logger=logger)
metrics = MetricsRepository(logger=logger)
artifacts = ArtifactRepository(logger=logger)
embeddings = EmbeddingService(logger=logger)
corpus_service = CorpusService(artifacts, log=logger)
trainer = TrainerService(checkpoints, caches, metrics, artifacts, embeddings, log=logger)

TEACHER_CHECKPOINT = "teacher.ckpt"
TEACHER_CACHE = "teacher.cache.tsv"


def _path_or(value: Optional[str], default: Path) -> Path:
    return Path(value) if value else default


def train_teacher(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Train the teacher and write teacher.ckpt plus its metrics into the output directory."""
    out_dir = cfg.out_path
    corpus = corpus_service.load(cfg, out_dir)
    result = trainer.train_teacher(cfg, corpus, out_dir, name=event.get("name") or "teacher")
    return {
        "checkpoint": str(result.checkpoint),
        "fingerprint": result.fingerprint,
        "accuracy": result.report.accuracy,
        "best_epoch": result.report.best_epoch,
    }


def cache_teacher(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Write the teacher's posteriors for every train and test example.

    Args:
        cfg (RunConfig): Resolved config.
        event (Dict[str, Any]): Optional ``teacher`` checkpoint and ``cache`` output paths;
            both default to fixed names inside the output directory.

    Returns:
        Dict[str, Any]: Cache path, teacher fingerprint and row count.
    """
    out_dir = cfg.out_path
    teacher_path = require_existing_path("teacher checkpoint", _path_or(event.get("teacher"),
                                                                         out_dir / TEACHER_CHECKPOINT))
    cache_path = _path_or(event.get("cache"), out_dir / TEACHER_CACHE)
    corpus = corpus_service.load(cfg, out_dir)
    cache = trainer.cache_teacher_predictions(teacher_path, corpus, cache_path, cfg.pad_width)
    return {"cache": str(cache_path), "fingerprint": cache.fingerprint, "rows": len(cache)}


def _student_blend(cfg: RunConfig, event: Dict[str, Any]) -> BlendConfig:
    lam = event.get("lambda_")
    temperature = event.get("temperature")
    return BlendConfig(cfg.blend.lambda_ if lam is None else lam, cfg.blend.gamma,
                       cfg.blend.temperature if temperature is None else temperature)


def train_student(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Train the student in baseline or blended mode.

    Blended mode needs an explicit ``--cache``; the teacher checkpoint defaults
    to teacher.ckpt in the output directory and is used to detect a stale cache.

    Raises:
        ConfigError: Blended mode without a cache, a missing path or a stale cache.
    """
    mode = event.get("mode") or cfg.student.mode
    out_dir = cfg.out_path
    cache_path = Path(event["cache"]) if event.get("cache") else None
    if mode == "blended" and cache_path is None:
        raise ConfigError("blended student training needs a teacher cache (--cache)")
    teacher_path = None
    if cache_path is not None:
        require_existing_path("teacher cache", cache_path)
        teacher_path = require_existing_path("teacher checkpoint", _path_or(event.get("teacher"),
                                                                             out_dir / TEACHER_CHECKPOINT))
    corpus = corpus_service.load(cfg, out_dir)
    result = trainer.train_student(cfg, corpus, out_dir, mode, cache_path, teacher_path,
                                   name=event.get("name"), blend=_student_blend(cfg, event))
    return {
        "checkpoint": str(result.checkpoint),
        "fingerprint": result.fingerprint,
        "accuracy": result.report.accuracy,
        "teacher_agreement": result.report.teacher_agreement,
        "best_epoch": result.report.best_epoch,
    }


def sweep(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Train one blended student per configured lambda and score every gamma ensemble."""
    out_dir = cfg.out_path
    teacher_path = require_existing_path("teacher checkpoint", _path_or(event.get("teacher"),
                                                                         out_dir / TEACHER_CHECKPOINT))
    cache_path = require_existing_path("teacher cache", _path_or(event.get("cache"), out_dir / TEACHER_CACHE))
    corpus = corpus_service.load(cfg, out_dir)
    evaluator = EvaluationService(logger, min_width=cfg.pad_width)
    records = SweepService(trainer, evaluator, metrics, log=logger).run(cfg, corpus, out_dir, teacher_path, cache_path)
    return {"sweep": str(out_dir / "sweep.jsonl"), "runs": len(records)}


COMMANDS = {
    "train-teacher": train_teacher,
    "cache-teacher": cache_teacher,
    "train-student": train_student,
    "sweep": sweep,
}


def handle(command: str, cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    return COMMANDS[command](cfg, event)
