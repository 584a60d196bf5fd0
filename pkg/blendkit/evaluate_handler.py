import os
from pathlib import Path
from typing import Any, Dict

from blendkit.models import StudentModel, TeacherModel
from blendkit.repositories.artifact_repo import ArtifactRepository
from blendkit.repositories.checkpoint_repo import CheckpointRepository
from blendkit.repositories.metrics_repo import MetricsRepository
from blendkit.services.corpus_service import CorpusService
from blendkit.services.evaluation import EvaluationService
from blendkit.services.report import ReportService
from blendkit.util.config import RunConfig
from blendkit.util.errors import ConfigError, UsageError
from blendkit.util.run_logger import create_logger
from blendkit.util.validation import check_unit_interval, require_existing_path

run_name = os.environ.get("BLENDKIT_RUN_NAME", "blendkit-evaluate")

# Setup logging
logger = create_logger(run_name)

checkpoints = CheckpointRepository(logger=logger)
metrics = MetricsRepository(logger=logger)
artifacts = ArtifactRepository(logger=logger)
corpus_service = CorpusService(artifacts, log=logger)
report_service = ReportService(metrics, log=logger)


def _load(name: str, path: str):
    return checkpoints.load(require_existing_path(name, path))


def evaluate(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Score one checkpoint on the test file and write ``<stem>.eval.jsonl`` next to the other outputs."""
    if not event.get("checkpoint"):
        raise UsageError("evaluate needs --checkpoint")
    model = _load("checkpoint", event["checkpoint"])
    out_dir = cfg.out_path
    corpus = corpus_service.load(cfg, out_dir, need_train=False)
    evaluator = EvaluationService(logger, min_width=cfg.pad_width)
    report = evaluator.evaluate(model, corpus.test, corpus.num_classes, corpus.name, event.get("variant"))
    report.label = Path(event["checkpoint"]).stem
    path = metrics.write(out_dir / f"{report.label}.eval.jsonl", [report.summary_record()])
    return {"metrics": str(path), "accuracy": report.accuracy, "num_examples": report.num_examples}


def evaluate_ensemble(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Score the gamma-weighted teacher + student mixture on the test file.

    Args:
        cfg (RunConfig): Resolved config; ``blend.gamma`` is the default weight.
        event (Dict[str, Any]): ``teacher`` and ``student`` checkpoint paths, optional ``gamma``.

    Raises:
        ConfigError: Missing checkpoints, wrong checkpoint kinds or class-count mismatch.
    """
    if not event.get("teacher") or not event.get("student"):
        raise UsageError("evaluate-ensemble needs --teacher and --student")
    teacher = _load("teacher checkpoint", event["teacher"])
    student = _load("student checkpoint", event["student"])
    if not isinstance(teacher, TeacherModel) or not isinstance(student, StudentModel):
        raise ConfigError("evaluate-ensemble needs a teacher checkpoint and a student checkpoint")
    gamma = cfg.blend.gamma if event.get("gamma") is None else check_unit_interval("gamma", event["gamma"])
    out_dir = cfg.out_path
    corpus = corpus_service.load(cfg, out_dir, need_train=False)
    evaluator = EvaluationService(logger, min_width=cfg.pad_width)
    report = evaluator.evaluate_ensemble(teacher, student, corpus.test, corpus.num_classes, gamma, corpus.name)
    report.label = f"ensemble-{gamma:g}"
    path = metrics.write(out_dir / f"{report.label}.eval.jsonl", [report.summary_record()])
    return {"metrics": str(path), "accuracy": report.accuracy, "gamma": gamma}


def report(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Merge metrics and bench record files into report.txt / report.jsonl and return the table text."""
    inputs = [require_existing_path("report input", p) for p in event.get("inputs") or []]
    if not inputs:
        raise UsageError("report needs at least one metrics or bench file")
    text = report_service.write_report(inputs, cfg.out_path, event.get("name") or "report")
    return {"text": text}


COMMANDS = {
    "evaluate": evaluate,
    "evaluate-ensemble": evaluate_ensemble,
    "report": report,
}


def handle(command: str, cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    return COMMANDS[command](cfg, event)
