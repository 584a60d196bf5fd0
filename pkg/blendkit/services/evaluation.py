import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from blendkit.blending import ensemble
from blendkit.models import ClassDistribution, StudentModel, TeacherModel, predict
from blendkit.services.dataset import MIN_PAD_WIDTH, Example, make_batches
from blendkit.util.errors import ConfigError, InputError

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 256


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    teacher_agreement: Optional[float] = None
    seconds: float = 0.0

    def to_record(self) -> Dict:
        return {
            "record": "epoch",
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "test_accuracy": self.test_accuracy,
            "teacher_agreement": self.teacher_agreement,
        }


@dataclass
class MetricsReport:
    """Accuracy, agreement and training history of one model on one dataset.

    Attributes:
        model (str): "teacher", "student" or "ensemble".
        variant (str): Row label, e.g. "BiLSTM", "CNN", "Blended", "Ensemble".
        dataset (str): Dataset name.
        accuracy (float): Exact-match argmax rate in [0, 1].
        num_examples (int): Examples evaluated.
        confusion (List[List[int]]): confusion[gold][predicted].
        teacher_agreement (float): Fraction of examples where argmax matches the teacher's, if known.
        epochs (List[EpochRecord]): Training history, epoch index increasing.
        train_seconds (float): Total training wall clock, if trained.
        best_epoch (int): Epoch whose checkpoint was kept.
        parameter_count (int): Model size.
        settings (Dict): Run settings worth reporting (lambda, gamma, seed).
        label (str): Row label, usually the checkpoint name; defaults to the variant.
    """

    model: str
    variant: str
    dataset: str
    accuracy: float
    num_examples: int
    confusion: List[List[int]]
    teacher_agreement: Optional[float] = None
    epochs: List[EpochRecord] = field(default_factory=list)
    train_seconds: Optional[float] = None
    best_epoch: Optional[int] = None
    parameter_count: Optional[int] = None
    settings: Dict = field(default_factory=dict)
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise InputError(f"accuracy must lie in [0, 1], got {self.accuracy}")
        indices = [r.epoch for r in self.epochs]
        if indices != sorted(indices):
            raise InputError("epoch records must be in increasing epoch order")

    def summary_record(self) -> Dict:
        return {
            "record": "summary",
            "model": self.model,
            "variant": self.variant,
            "dataset": self.dataset,
            "accuracy": self.accuracy,
            "num_examples": self.num_examples,
            "teacher_agreement": self.teacher_agreement,
            "confusion": self.confusion,
            "best_epoch": self.best_epoch,
            "parameter_count": self.parameter_count,
            "settings": self.settings,
            "label": self.label or self.variant,
        }

    def to_records(self) -> List[Dict]:
        """Deterministic records: one per epoch plus the summary. Timings are kept apart."""
        return [r.to_record() for r in self.epochs] + [self.summary_record()]

    def timing_records(self) -> List[Dict]:
        records = [{"record": "epoch_time", "epoch": r.epoch, "seconds": r.seconds} for r in self.epochs]
        records.append({"record": "train_time", "variant": self.variant, "seconds": self.train_seconds})
        return records


def predict_examples(model, examples: Sequence[Example], batch_size: int = EVAL_BATCH_SIZE,
                     min_width: int = MIN_PAD_WIDTH) -> ClassDistribution:
    """Evaluation-mode posteriors for ``examples`` in their given order."""
    if not examples:
        raise InputError("no examples to predict")
    if isinstance(model, StudentModel):
        min_width = max(min_width, model.min_length)
    rows = [predict(model, batch).probs for batch in make_batches(examples, batch_size, None, min_width)]
    return ClassDistribution(np.concatenate(rows, axis=0), model.kind)


def confusion_matrix(predicted: np.ndarray, gold: np.ndarray, num_classes: int) -> np.ndarray:
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (gold, predicted), 1)
    return matrix


def agreement_rate(predicted: np.ndarray, teacher_predicted: np.ndarray) -> float:
    return int(np.sum(predicted == teacher_predicted)) / len(predicted)


def score(dist: ClassDistribution, examples: Sequence[Example], model: str, variant: str, dataset: str,
          teacher: Optional[ClassDistribution] = None) -> MetricsReport:
    """Accuracy from summed counts; ties in argmax go to the lowest class index."""
    gold = np.array([e.label for e in examples], dtype=np.int64)
    if gold.size and gold.max() >= dist.num_classes:
        raise ConfigError(f"dataset has label id {int(gold.max())}, model predicts {dist.num_classes} classes")
    predicted = dist.argmax()
    matrix = confusion_matrix(predicted, gold, dist.num_classes)
    correct = int(np.trace(matrix))
    agreement = agreement_rate(predicted, teacher.argmax()) if teacher is not None else None
    return MetricsReport(model, variant, dataset, correct / len(examples), len(examples),
                         matrix.tolist(), agreement)


def variant_of(model) -> str:
    if isinstance(model, TeacherModel):
        return "BiLSTM" if model.bidirectional else "LSTM"
    return "CNN"


class EvaluationService:
    """
    Scores checkpoints on labeled examples.

    Attributes:
        logger (logging.Logger): Logger for results.
        batch_size (int): Evaluation batch size.
        min_width (int): Minimum padded width.
    """

    def __init__(self, logger: logging.Logger = None, batch_size: int = EVAL_BATCH_SIZE,
                 min_width: int = MIN_PAD_WIDTH):
        self.logger = logger or logging.getLogger(__name__)
        self.batch_size = batch_size
        self.min_width = min_width

    def _check_classes(self, model, num_classes: int) -> None:
        if model.num_classes != num_classes:
            raise ConfigError(f"{model.kind} predicts {model.num_classes} classes, label map has {num_classes}")

    def evaluate(self, model, examples: Sequence[Example], num_classes: int, dataset: str = "test",
                 variant: Optional[str] = None, teacher: Optional[ClassDistribution] = None) -> MetricsReport:
        """Accuracy and confusion matrix of one model.

        Args:
            model: Teacher or student model.
            examples: Labeled examples.
            num_classes: Size of the label map the dataset was encoded with.
            dataset: Name used in the report.
            variant: Row label override (e.g. "Blended").
            teacher: Teacher posteriors on the same examples, for the agreement rate.

        Raises:
            ConfigError: If the model and label map disagree on the class count.
        """
        try:
            self._check_classes(model, num_classes)
            dist = predict_examples(model, examples, self.batch_size, self.min_width)
            report = score(dist, examples, model.kind, variant or variant_of(model), dataset, teacher)
            report.parameter_count = model.parameter_count()
            self.logger.info(f"{report.variant} on {dataset}: accuracy {report.accuracy:.4f} "
                             f"({report.num_examples} examples)")
            return report
        except Exception as e:
            self.logger.error(f"Error evaluating {model.kind}: {e}")
            raise

    def evaluate_ensemble(self, teacher: TeacherModel, student: StudentModel, examples: Sequence[Example],
                          num_classes: int, gamma: float, dataset: str = "test") -> MetricsReport:
        """Accuracy of argmax(gamma * p_teacher + (1 - gamma) * p_student)."""
        try:
            self._check_classes(teacher, num_classes)
            self._check_classes(student, num_classes)
            p_t = predict_examples(teacher, examples, self.batch_size, self.min_width)
            p_s = predict_examples(student, examples, self.batch_size, self.min_width)
            report = score(ensemble(p_t, p_s, gamma), examples, "ensemble", "Ensemble", dataset, p_t)
            report.parameter_count = teacher.parameter_count() + student.parameter_count()
            report.settings = {"gamma": gamma}
            self.logger.info(f"Ensemble (gamma={gamma}) on {dataset}: accuracy {report.accuracy:.4f}")
            return report
        except Exception as e:
            self.logger.error(f"Error evaluating ensemble: {e}")
            raise
