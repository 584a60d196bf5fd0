from pathlib import Path

import pytest

from blendkit.util.config import RunConfig, config_from_dict, load_config
from blendkit.util.errors import ConfigError


class TestLoadConfig:

    def test_none_gives_defaults(self):
        cfg = load_config(None)
        assert cfg == RunConfig()
        assert cfg.teacher.hidden_size == 256
        assert cfg.student.filter_widths == (3, 4, 5)
        assert cfg.blend.lambda_ == 0.5

    def test_yaml_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("seed: 3\nblend:\n  lambda: 0.25\n  gamma: 0.6\nstudent:\n  filter_widths: [2, 3]\n",
                        encoding="utf-8")
        cfg = load_config(path)
        assert (cfg.seed, cfg.blend.lambda_, cfg.blend.gamma) == (3, 0.25, 0.6)
        assert cfg.student.filter_widths == (2, 3)

    def test_empty_file_is_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")
        assert load_config(path) == RunConfig()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="nope.yaml"):
            load_config(tmp_path / "nope.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("teacher: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_config(path)

    def test_shipped_configs_parse(self):
        root = Path(__file__).resolve().parent.parent / "configs"
        for path in sorted(root.glob("*.yaml")):
            assert isinstance(load_config(path), RunConfig)


class TestValidation:

    @pytest.mark.parametrize("raw,fragment", [
        ({"teacher": {"hidden": 3}}, "teacher.hidden"),
        ({"extra": 1}, "'extra'"),
        ({"blend": {"lambda_": 0.5}}, "blend.lambda_"),
    ])
    def test_unknown_keys(self, raw, fragment):
        with pytest.raises(ConfigError, match=fragment):
            config_from_dict(raw)

    @pytest.mark.parametrize("raw", [
        {"blend": {"lambda": 1.5}},
        {"blend": {"gamma": -0.1}},
        {"teacher": {"dropout": 1.0}},
        {"teacher": {"epochs": 0}},
        {"student": {"filter_widths": []}},
        {"student": {"mode": "distilled"}},
        {"bench": {"iterations": 10}},
        {"bench": {"warmup": 2}},
        {"sweep": {"gammas": [0.5, 2.0]}},
        {"seed": -1},
        {"data": {"max_length": 0}},
        {"optimizer": {"beta1": 1.0}},
    ])
    def test_invalid_values(self, raw):
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_section_must_be_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            config_from_dict({"teacher": [1, 2]})


class TestResolution:

    def test_out_dir_precedence(self, monkeypatch):
        monkeypatch.delenv("BLENDKIT_OUT", raising=False)
        assert config_from_dict({}).out_path == Path("runs")
        monkeypatch.setenv("BLENDKIT_OUT", "/tmp/elsewhere")
        assert config_from_dict({}).out_path == Path("/tmp/elsewhere")
        assert config_from_dict({"out_dir": "mine"}).out_path == Path("mine")

    def test_to_dict_uses_yaml_spelling_and_records_choices(self, tmp_path):
        resolved = config_from_dict({"out_dir": str(tmp_path)}).to_dict()
        assert resolved["blend"]["lambda"] == 0.5
        assert "lambda_" not in resolved["blend"]
        assert resolved["out_dir"] == str(tmp_path)
        assert resolved["recorded"]["forget_bias_init"] == 1.0

    def test_pad_width_covers_widest_filter(self):
        assert RunConfig().pad_width == 5
        assert config_from_dict({"student": {"filter_widths": [3, 4, 7]}}).pad_width == 7
        assert config_from_dict({"data": {"min_pad_width": 9}}).pad_width == 9

    def test_replace(self):
        cfg = RunConfig().replace(seed=11)
        assert cfg.seed == 11
        assert RunConfig().seed == 0
