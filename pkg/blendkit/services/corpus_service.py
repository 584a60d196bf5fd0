import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

from blendkit.repositories.artifact_repo import ArtifactRepository
from blendkit.services.dataset import Example, LabelMap, read_labeled_rows, to_examples
from blendkit.services.text_service import Vocabulary, build_vocab, tokenize
from blendkit.util.config import RunConfig
from blendkit.util.validation import require_existing_path

VOCAB_FILE = "vocab.txt"
LABEL_MAP_FILE = "labels.tsv"


@dataclass
class Corpus:
    name: str
    train: List[Example]
    test: List[Example]
    vocab: Vocabulary
    label_map: LabelMap

    @property
    def num_classes(self) -> int:
        return len(self.label_map)


class CorpusService:
    """
    Turns the configured CSV files into encoded train/test examples.

    The vocabulary and label map are built from the training file once and
    persisted in the output directory; later runs reuse them so teacher and
    student agree on token and class ids.

    Attributes:
        artifacts (ArtifactRepository): Sidecar file access.
        logger (logging.Logger): Logger for progress and errors.
    """

    def __init__(self, artifacts: ArtifactRepository, log: logging.Logger = None):
        self.artifacts = artifacts
        self.logger = log or logging.getLogger(__name__)

    def build_vocab(self, cfg: RunConfig, out_dir: Path) -> Tuple[Vocabulary, LabelMap]:
        """Build and persist the vocabulary and label map from the training file."""
        try:
            train_path = require_existing_path("data.train", cfg.data.train)
            rows = read_labeled_rows(train_path, cfg.data.schema)
            vocab = build_vocab((tokenize(row.text)[:cfg.data.max_length] for row in rows), cfg.data.min_freq)
            label_map = LabelMap()
            for row in rows:
                label_map.assign(row.label)
            self.artifacts.save_vocab(vocab, Path(out_dir) / VOCAB_FILE)
            self.artifacts.save_label_map(label_map, Path(out_dir) / LABEL_MAP_FILE)
            self.logger.info(f"Built vocabulary of {len(vocab)} tokens and {len(label_map)} classes "
                             f"from {len(rows)} rows of {train_path}")
            return vocab, label_map
        except Exception as e:
            self.logger.error(f"Error building vocabulary: {e}")
            raise

    def load_sidecars(self, cfg: RunConfig, out_dir: Path) -> Tuple[Vocabulary, LabelMap]:
        vocab_path = Path(out_dir) / VOCAB_FILE
        labels_path = Path(out_dir) / LABEL_MAP_FILE
        if vocab_path.exists() and labels_path.exists():
            return self.artifacts.load_vocab(vocab_path), self.artifacts.load_label_map(labels_path)
        return self.build_vocab(cfg, out_dir)

    def load(self, cfg: RunConfig, out_dir: Path, need_train: bool = True) -> Corpus:
        """Encode the configured train and test files against the persisted sidecars.

        Raises:
            ConfigError: If a configured path is missing (the message names it).
            InputError: If a test label is not in the label map.
        """
        try:
            vocab, label_map = self.load_sidecars(cfg, out_dir)
            train: List[Example] = []
            if need_train:
                train_path = require_existing_path("data.train", cfg.data.train)
                train = to_examples(read_labeled_rows(train_path, cfg.data.schema), vocab, label_map,
                                    frozen_labels=True, max_length=cfg.data.max_length)
            test_path = require_existing_path("data.test", cfg.data.test)
            test = to_examples(read_labeled_rows(test_path, cfg.data.schema), vocab, label_map,
                               frozen_labels=True, max_length=cfg.data.max_length)
            self.logger.info(f"Loaded {len(train)} train / {len(test)} test examples, K={len(label_map)}")
            return Corpus(cfg.data.name, train, test, vocab, label_map)
        except Exception as e:
            self.logger.error(f"Error loading corpus: {e}")
            raise
