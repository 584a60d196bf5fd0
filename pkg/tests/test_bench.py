import numpy as np
import pytest

from blendkit.layers import EmbeddingTable
from blendkit.models import StudentModel, TeacherModel
from blendkit.services.bench import BenchSpec, BenchTarget, random_batch, run_latency_bench, summarize, time_callable
from blendkit.util.errors import ConfigError
from tests.test_models import build_student, build_teacher


def tiny_spec(targets, **overrides):
    values = dict(seq_lengths=(10,), batch_size=4, warmup=5, iterations=30, repetitions=1, seed=0)
    values.update(overrides)
    return BenchSpec(tuple(targets), **values)


class TestBenchSpec:

    @pytest.mark.parametrize("overrides", [{"iterations": 29}, {"warmup": 4}, {"repetitions": 0}])
    def test_protocol_minimums(self, overrides):
        with pytest.raises(ConfigError):
            tiny_spec([BenchTarget("s", build_student())], **overrides)

    def test_needs_a_student_reference(self):
        with pytest.raises(ConfigError, match="student"):
            tiny_spec([BenchTarget("t", build_teacher())])


class TestTiming:

    def test_summarize(self):
        assert summarize([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]) == (3.5, 2.25, 4.75)

    def test_time_callable_counts_iterations(self):
        calls = []
        samples = time_callable(lambda: calls.append(1), warmup=5, iterations=30, repetitions=2)
        assert len(calls) == 70
        assert [len(rep) for rep in samples] == [30, 30]
        assert all(s >= 0 for rep in samples for s in rep)

    def test_random_batch_avoids_reserved_ids(self):
        batch = random_batch(12, 20, 8, seed=3)
        assert batch.ids.shape == (8, 20)
        assert batch.ids.min() >= 2 and batch.ids.max() <= 11
        np.testing.assert_array_equal(batch.ids, random_batch(12, 20, 8, seed=3).ids)


class TestRunLatencyBench:

    def test_reference_ratio_is_one(self, quiet_logger):
        targets = [BenchTarget("teacher", build_teacher()), BenchTarget("student", build_student())]
        report = run_latency_bench(tiny_spec(targets, workers=2), quiet_logger)
        assert report.row("student", 10).ratio == 1.0
        assert report.row("teacher", 10).ratio > 0
        assert report.row("teacher+student", 10).variant == "Ensemble"
        sharded = report.row("student x2 workers", 10)
        assert sharded.threads == 2
        assert report.context["reference"] == "student"

    def test_records(self, quiet_logger):
        report = run_latency_bench(tiny_spec([BenchTarget("student", build_student())], ensemble=False),
                                   quiet_logger)
        records = report.to_records()
        assert [r["record"] for r in records] == ["context", "latency"]
        assert records[1]["iqr_s"] == records[1]["q3_s"] - records[1]["q1_s"]
        samples = report.sample_records()[0]
        assert len(samples["seconds"]) == 1 and len(samples["seconds"][0]) == 30

    def test_plain_cnn_preferred_as_reference(self, quiet_logger):
        targets = [BenchTarget("blended", build_student(seed=1), "Blended"), BenchTarget("plain", build_student())]
        report = run_latency_bench(tiny_spec(targets), quiet_logger)
        assert report.context["reference"] == "plain"
        assert report.row("plain", 10).ratio == 1.0


def matched_models(seed=0):
    rng = np.random.default_rng(seed)
    teacher = TeacherModel.init(EmbeddingTable.init(500, 32, rng), 32, 2, rng, True, 0.0)
    student = StudentModel.init(EmbeddingTable.init(500, 32, rng), (3, 4, 5), 32, 2, rng, 0.0)
    return [BenchTarget("teacher", teacher), BenchTarget("student", student)]


@pytest.mark.slow
class TestLatencyDirection:

    def test_teacher_at_least_twice_as_slow(self, quiet_logger):
        spec = BenchSpec(tuple(matched_models()), seq_lengths=(200,), batch_size=64, repetitions=3, ensemble=False)
        assert run_latency_bench(spec, quiet_logger).row("teacher", 200).ratio >= 2.0

    def test_ratio_does_not_shrink_with_length(self, quiet_logger):
        spec = BenchSpec(tuple(matched_models()), seq_lengths=(100, 200, 400), batch_size=64, repetitions=3,
                         ensemble=False)
        report = run_latency_bench(spec, quiet_logger)
        ratios = [report.row("teacher", n).ratio for n in (100, 200, 400)]
        # 10% allowance for wall-clock noise between lengths
        assert ratios[1] >= 0.9 * ratios[0]
        assert ratios[2] >= 0.9 * ratios[1]

    def test_recurrent_latency_grows_with_length(self, quiet_logger):
        spec = BenchSpec(tuple(matched_models()), seq_lengths=(100, 200, 400), batch_size=64, repetitions=3,
                         ensemble=False)
        report = run_latency_bench(spec, quiet_logger)
        medians = [report.row("teacher", n).median_s for n in (100, 200, 400)]
        assert medians[1] > medians[0]
        assert medians[2] > medians[1]

    def test_ensemble_costs_about_teacher_plus_student(self, quiet_logger):
        spec = BenchSpec(tuple(matched_models()), seq_lengths=(200,), batch_size=64, repetitions=3)
        report = run_latency_bench(spec, quiet_logger)
        separate = report.row("teacher", 200).median_s + report.row("student", 200).median_s
        combined = report.row("teacher+student", 200).median_s
        assert abs(combined - separate) <= 0.15 * separate

    def test_same_checkpoint_twice_is_ratio_one(self, quiet_logger):
        student = matched_models()[1].model
        spec = BenchSpec((BenchTarget("a", student), BenchTarget("b", student)), seq_lengths=(200,),
                         batch_size=64, repetitions=3)
        assert run_latency_bench(spec, quiet_logger).row("b", 200).ratio == pytest.approx(1.0, abs=0.3)
