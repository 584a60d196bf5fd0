"""
Shared fixtures: a small synthetic corpus on disk, a matching run config with
desk-scale model sizes, and services wired with a quiet logger.
"""

import logging
from pathlib import Path

import numpy as np
import pytest

from blendkit.data_handler import synth_data
from blendkit.repositories.artifact_repo import ArtifactRepository
from blendkit.repositories.cache_repo import TeacherCacheRepository
from blendkit.repositories.checkpoint_repo import CheckpointRepository
from blendkit.repositories.metrics_repo import MetricsRepository
from blendkit.services.corpus_service import CorpusService
from blendkit.services.dataset import Batch, Example, pad_batch
from blendkit.services.embed import EmbeddingService
from blendkit.services.evaluation import EvaluationService
from blendkit.services.trainer import TrainerService
from blendkit.util.config import config_from_dict


def small_config(out_dir: Path, n_epochs: int = 2, **overrides) -> dict:
    """Raw config dict for a desk-scale run writing into ``out_dir``."""
    raw = {
        "seed": 0,
        "out_dir": str(out_dir),
        "data": {"name": "synth", "train": str(out_dir / "train.csv"), "test": str(out_dir / "test.csv")},
        "teacher": {"embedding_dim": 6, "hidden_size": 5, "dropout": 0.1, "epochs": n_epochs,
                    "batch_size": 32, "lr": 0.02},
        "student": {"embedding_dim": 6, "filter_widths": [3, 4, 5], "filter_count": 4, "dropout": 0.1,
                    "epochs": n_epochs, "batch_size": 32, "lr": 0.02},
        "blend": {"lambda": 0.5, "gamma": 0.4},
    }
    for section, values in overrides.items():
        if isinstance(values, dict):
            raw.setdefault(section, {}).update(values)
        else:
            raw[section] = values
    return raw


@pytest.fixture
def quiet_logger():
    logger = logging.getLogger("blendkit.tests")
    logger.setLevel(logging.WARNING)
    return logger


@pytest.fixture
def synth_cfg(tmp_path):
    """Run config whose train/test CSVs (240/60 synthetic rows) already exist."""
    cfg = config_from_dict(small_config(tmp_path / "run"))
    synth_data(cfg, {"n": 300, "vocab_size": 20})
    return cfg


@pytest.fixture
def corpus_service(quiet_logger):
    return CorpusService(ArtifactRepository(quiet_logger), log=quiet_logger)


@pytest.fixture
def corpus(synth_cfg, corpus_service):
    return corpus_service.load(synth_cfg, synth_cfg.out_path)


@pytest.fixture
def trainer(quiet_logger):
    return TrainerService(CheckpointRepository(quiet_logger), TeacherCacheRepository(quiet_logger),
                          MetricsRepository(quiet_logger), ArtifactRepository(quiet_logger),
                          EmbeddingService(quiet_logger), log=quiet_logger)


@pytest.fixture
def evaluator(quiet_logger):
    return EvaluationService(quiet_logger)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_examples(sequences, labels=None, prefix="ex") -> list:
    labels = labels if labels is not None else [0] * len(sequences)
    return [Example(f"{prefix}:{i + 1}", tuple(ids), label, "")
            for i, (ids, label) in enumerate(zip(sequences, labels))]


def make_batch(sequences, labels=None, min_width: int = 5) -> Batch:
    return pad_batch(make_examples(sequences, labels), min_width)


QUESTION_FRAMES = {
    "ABBR": "what does {} stand for",
    "DESC": "why do {} happen",
    "ENTY": "what color is {}",
    "HUM": "who invented {}",
    "LOC": "where is {}",
    "NUM": "how many {} are there",
}


def write_question_csv(path: Path, n: int, seed: int = 0) -> Path:
    """Six-class question file shaped like TREC-6: one frame per class around random filler words."""
    rng = np.random.default_rng(seed)
    labels = list(QUESTION_FRAMES)
    lines = ["label,text"]
    for i in range(n):
        # every class appears within the first six rows
        label = labels[i] if i < len(labels) else labels[int(rng.integers(0, len(labels)))]
        filler = " ".join(f"w{int(j)}" for j in rng.integers(0, 60, size=int(rng.integers(1, 5))))
        lines.append(f"{label},{QUESTION_FRAMES[label].format(filler)}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
