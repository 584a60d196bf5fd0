import json

import pytest
import yaml

from blendkit.cli_handler import main
from tests.conftest import small_config


def write_config(path, raw):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:

    @pytest.mark.parametrize("argv", [[], ["nope"], ["train-teacher", "--bogus"], ["evaluate"]])
    def test_usage_errors(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == 2
        assert "error=usage" in err

    def test_missing_config_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "build-vocab", "--config", str(tmp_path / "absent.yaml"))
        assert code == 3
        assert "absent.yaml" in err

    def test_unknown_config_key(self, capsys, tmp_path):
        config = write_config(tmp_path / "bad.yaml", {"teacher": {"layers": 2}})
        code, _, err = run(capsys, "build-vocab", "--config", config)
        assert code == 3
        assert "teacher.layers" in err

    def test_bench_with_missing_checkpoint(self, capsys, tmp_path):
        missing = tmp_path / "gone" / "student.ckpt"
        config = write_config(tmp_path / "bench.yaml", small_config(tmp_path, bench={"checkpoints": [str(missing)]}))
        code, _, err = run(capsys, "bench", "--config", config)
        assert code == 3
        assert str(missing) in err
        assert err.strip().splitlines()[-1].startswith("error=config message=")

    def test_blended_student_without_cache(self, capsys, tmp_path):
        code, _, err = run(capsys, "train-student", "--mode", "blended", "--out", str(tmp_path))
        assert code == 3
        assert "--cache" in err

    def test_corrupt_checkpoint_is_runtime_error(self, capsys, tmp_path):
        config = write_config(tmp_path / "run.yaml", small_config(tmp_path))
        assert run(capsys, "synth-data", "--config", config, "--n", "50", "--vocab-size", "10")[0] == 0
        (tmp_path / "broken.ckpt").write_bytes(b"garbage")
        code, _, err = run(capsys, "evaluate", "--config", config, "--checkpoint", str(tmp_path / "broken.ckpt"))
        assert code == 1
        assert "error=format" in err


class TestCommands:

    def test_synth_data_is_reproducible(self, capsys, tmp_path):
        for sub in ("a", "b"):
            code, out, _ = run(capsys, "synth-data", "--out", str(tmp_path / sub), "--seed", "7", "--n", "100")
            assert code == 0
            assert json.loads(out)["train_rows"] == 80
        for name in ("train.csv", "test.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert (tmp_path / "a" / "train.csv").read_text(encoding="utf-8").startswith("label,text\n")

    def test_seed_override_changes_data(self, capsys, tmp_path):
        run(capsys, "synth-data", "--out", str(tmp_path / "a"), "--seed", "7", "--n", "100")
        run(capsys, "synth-data", "--out", str(tmp_path / "b"), "--seed", "8", "--n", "100")
        assert (tmp_path / "a" / "train.csv").read_bytes() != (tmp_path / "b" / "train.csv").read_bytes()

    def test_full_pipeline(self, capsys, tmp_path):
        out = tmp_path / "run"
        config = write_config(tmp_path / "run.yaml", small_config(out, n_epochs=1))

        def ok(*argv):
            code, stdout, err = run(capsys, *argv, "--config", config)
            assert code == 0, err
            return stdout

        ok("synth-data", "--n", "200", "--vocab-size", "20")
        assert json.loads(ok("build-vocab"))["num_classes"] == 2
        teacher = json.loads(ok("train-teacher"))
        assert teacher["checkpoint"] == str(out / "teacher.ckpt")
        assert json.loads(ok("cache-teacher"))["rows"] == 200
        student = json.loads(ok("train-student", "--mode", "blended", "--cache", str(out / "teacher.cache.tsv"),
                                "--lambda", "0.4"))
        assert 0.0 <= student["teacher_agreement"] <= 1.0
        ok("train-student", "--mode", "baseline", "--epochs", "1")
        assert json.loads(ok("evaluate", "--checkpoint", str(out / "student-blended.ckpt")))["num_examples"] == 40
        mixed = json.loads(ok("evaluate-ensemble", "--teacher", str(out / "teacher.ckpt"),
                              "--student", str(out / "student-baseline.ckpt"), "--gamma", "0.4"))
        assert mixed["gamma"] == 0.4
        ratios = json.loads(ok("bench", "--seq-len", "10", "--batch-size", "4", "--repetitions", "1"))["ratios"]
        assert ratios["student-baseline@10"] == 1.0
        text = ok("report", str(out / "student-blended.metrics.jsonl"), str(out / "ensemble-0.4.eval.jsonl"),
                  str(out / "bench.jsonl"))
        assert text.startswith("Accuracy (%)")
        assert "Latency per batch" in text
        assert (out / "report.txt").exists()
