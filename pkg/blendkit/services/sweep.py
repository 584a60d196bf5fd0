import logging
from pathlib import Path
from typing import Dict, List

from blendkit.blending import BlendConfig
from blendkit.repositories.metrics_repo import MetricsRepository
from blendkit.services.corpus_service import Corpus
from blendkit.services.evaluation import EvaluationService
from blendkit.services.trainer import TrainerService
from blendkit.util.config import RunConfig


class SweepService:
    """
    Grid search over the soft-loss weight and the ensemble weight.

    One blended student is trained per lambda; each is then combined with the
    teacher at every gamma. Results go to ``sweep.jsonl``, one record per
    (lambda, gamma) pair.

    Attributes:
        trainer (TrainerService): Student training.
        evaluator (EvaluationService): Ensemble scoring.
        metrics (MetricsRepository): Record output.
        logger (logging.Logger): Logger for progress and errors.
    """

    def __init__(self, trainer: TrainerService, evaluator: EvaluationService, metrics: MetricsRepository,
                 log: logging.Logger = None):
        self.trainer = trainer
        self.evaluator = evaluator
        self.metrics = metrics
        self.logger = log or logging.getLogger(__name__)

    def run(self, cfg: RunConfig, corpus: Corpus, out_dir: Path, teacher_path: Path, cache_path: Path) -> List[Dict]:
        try:
            teacher = self.trainer.checkpoints.load(teacher_path)
            records = []
            for lam in cfg.sweep.lambdas:
                blend = BlendConfig(lam, cfg.blend.gamma, cfg.blend.temperature)
                result = self.trainer.train_student(cfg, corpus, out_dir, "blended", cache_path, teacher_path,
                                                    name=f"sweep-lambda-{lam:g}", blend=blend)
                for gamma in cfg.sweep.gammas:
                    mixed = self.evaluator.evaluate_ensemble(teacher, result.model, corpus.test,
                                                             corpus.num_classes, gamma, corpus.name)
                    records.append({
                        "record": "sweep",
                        "lambda": lam,
                        "gamma": gamma,
                        "student_accuracy": result.report.accuracy,
                        "teacher_agreement": result.report.teacher_agreement,
                        "ensemble_accuracy": mixed.accuracy,
                    })
            self.metrics.write(Path(out_dir) / "sweep.jsonl", records)
            best = max(records, key=lambda r: (r["ensemble_accuracy"], -r["lambda"], -r["gamma"]))
            self.logger.info(f"Best ensemble accuracy {best['ensemble_accuracy']:.4f} "
                             f"at lambda={best['lambda']:g} gamma={best['gamma']:g}")
            return records
        except Exception as e:
            self.logger.error(f"Error running sweep: {e}")
            raise
