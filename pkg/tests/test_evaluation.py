import numpy as np
import pytest

from blendkit.layers import EmbeddingTable
from blendkit.models import ClassDistribution, StudentModel
from blendkit.services.evaluation import (
    EpochRecord,
    MetricsReport,
    agreement_rate,
    confusion_matrix,
    predict_examples,
    score,
)
from blendkit.util.errors import ConfigError, InputError
from tests.conftest import make_examples
from tests.test_models import build_student, build_teacher


def majority_student(favoured=0):
    model = build_student(num_classes=2)
    model.head.weight.data[:] = 0.0
    model.head.bias.data[:] = 0.0
    model.head.bias.data[favoured] = 1.0
    return model


@pytest.fixture
def split_examples(rng):
    sequences = [list(rng.integers(2, 12, size=int(rng.integers(1, 9)))) for _ in range(100)]
    return make_examples(sequences, [0] * 60 + [1] * 40)


class TestEvaluate:

    def test_majority_class_predictor(self, evaluator, split_examples):
        report = evaluator.evaluate(majority_student(), split_examples, 2, dataset="synth")
        assert report.accuracy == 0.6
        assert report.confusion == [[60, 0], [40, 0]]
        assert (report.model, report.variant, report.dataset) == ("student", "CNN", "synth")
        assert report.parameter_count == majority_student().parameter_count()

    def test_deterministic(self, evaluator, split_examples):
        model = build_teacher(num_classes=2)
        first = evaluator.evaluate(model, split_examples, 2).summary_record()
        assert evaluator.evaluate(model, split_examples, 2).summary_record() == first

    def test_batch_size_does_not_change_posteriors(self, split_examples):
        model = build_student(num_classes=2)
        small = predict_examples(model, split_examples, batch_size=7).probs
        large = predict_examples(model, split_examples, batch_size=256).probs
        np.testing.assert_allclose(small, large, rtol=0, atol=1e-12)

    def test_student_with_wide_filter_reads_short_sentences(self, rng):
        model = StudentModel.init(EmbeddingTable.init(12, 4, rng), (3, 4, 7), 2, 2, rng, 0.5)
        dist = predict_examples(model, make_examples([[2, 3, 4], [5, 6]]), 8, min_width=5)
        assert dist.probs.shape == (2, 2)
        np.testing.assert_allclose(dist.probs.sum(axis=1), 1.0)

    def test_class_count_mismatch(self, evaluator, split_examples):
        with pytest.raises(ConfigError):
            evaluator.evaluate(build_student(num_classes=3), split_examples, 2)

    def test_variant_override_and_agreement(self, evaluator, split_examples):
        teacher = ClassDistribution(np.tile([0.9, 0.1], (100, 1)), "teacher")
        report = evaluator.evaluate(majority_student(), split_examples, 2, variant="Blended", teacher=teacher)
        assert report.variant == "Blended"
        assert report.teacher_agreement == 1.0


class TestEnsemble:

    def test_endpoints_match_single_models(self, evaluator, split_examples):
        teacher, student = build_teacher(num_classes=2, seed=3), build_student(num_classes=2, seed=5)
        t_report = evaluator.evaluate(teacher, split_examples, 2)
        s_report = evaluator.evaluate(student, split_examples, 2)
        at_one = evaluator.evaluate_ensemble(teacher, student, split_examples, 2, gamma=1.0)
        at_zero = evaluator.evaluate_ensemble(teacher, student, split_examples, 2, gamma=0.0)
        assert (at_one.accuracy, at_one.confusion) == (t_report.accuracy, t_report.confusion)
        assert (at_zero.accuracy, at_zero.confusion) == (s_report.accuracy, s_report.confusion)
        assert at_one.teacher_agreement == 1.0
        assert at_one.settings == {"gamma": 1.0}

    def test_class_mismatch(self, evaluator, split_examples):
        with pytest.raises(ConfigError):
            evaluator.evaluate_ensemble(build_teacher(num_classes=3), build_student(num_classes=2),
                                        split_examples, 2, gamma=0.5)


class TestScoring:

    def test_confusion_matrix_counts(self):
        matrix = confusion_matrix(np.array([0, 1, 1, 2]), np.array([0, 1, 2, 2]), 3)
        np.testing.assert_array_equal(matrix, [[1, 0, 0], [0, 1, 0], [0, 1, 1]])

    def test_ties_go_to_lowest_class(self):
        dist = ClassDistribution(np.array([[0.5, 0.5], [0.5, 0.5]]), "student")
        report = score(dist, make_examples([[2], [3]], [0, 1]), "student", "CNN", "tie")
        assert report.accuracy == 0.5

    def test_label_outside_model_classes(self):
        dist = ClassDistribution(np.array([[0.5, 0.5]]), "student")
        with pytest.raises(ConfigError):
            score(dist, make_examples([[2]], [2]), "student", "CNN", "bad")

    def test_agreement_rate(self):
        assert agreement_rate(np.array([0, 1, 1, 0]), np.array([0, 1, 0, 0])) == 0.75

    def test_records_split_timing(self):
        report = MetricsReport("student", "CNN", "synth", 0.5, 2, [[1, 0], [1, 0]],
                               epochs=[EpochRecord(1, 0.7, 0.5, seconds=1.5)], train_seconds=1.5)
        records = report.to_records()
        assert [r["record"] for r in records] == ["epoch", "summary"]
        assert all("seconds" not in r for r in records)
        assert report.timing_records()[0] == {"record": "epoch_time", "epoch": 1, "seconds": 1.5}

    def test_epochs_must_increase(self):
        with pytest.raises(InputError):
            MetricsReport("student", "CNN", "d", 0.5, 2, [[1]], epochs=[EpochRecord(2, 0.1, 0.5),
                                                                         EpochRecord(1, 0.1, 0.5)])
