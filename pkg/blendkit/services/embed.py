import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from blendkit.layers import EMBEDDING_INIT_RANGE, EmbeddingTable
from blendkit.services.text_service import PAD_ID, RESERVED_TOKENS, Vocabulary
from blendkit.tensor import Tensor
from blendkit.util.errors import ConfigError, FormatError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbeddingCoverage:
    """How much of the vocabulary a pretrained vector file covered.

    Attributes:
        found (int): Non-reserved vocabulary tokens present in the file.
        total (int): Non-reserved vocabulary tokens.
    """

    found: int
    total: int

    @property
    def fraction(self) -> float:
        return self.found / self.total if self.total else 0.0


def read_vectors(path: Path, wanted: Dict[str, int]) -> Tuple[Dict[str, np.ndarray], int]:
    """Read a GloVe-style text file, keeping only the rows for ``wanted`` tokens.

    Every row must have the same dimension; the first row fixes it.

    Returns:
        Tuple of (token -> vector, dimension).

    Raises:
        FormatError: On a row with a different dimension or a non-numeric value.
    """
    vectors: Dict[str, np.ndarray] = {}
    dim: Optional[int] = None
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise FormatError(f"{path}:{line_number}: row has no vector values")
            elif len(values) != dim:
                raise FormatError(f"{path}:{line_number}: expected {dim} values, found {len(values)}")
            if token not in wanted or token in vectors:
                continue
            try:
                vectors[token] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}:{line_number}: non-numeric vector value")
    if dim is None:
        raise FormatError(f"{path}:1: embedding file is empty")
    return vectors, dim


class EmbeddingService:
    """
    Builds embedding tables for a vocabulary.

    Rows are first drawn uniform(-0.1, 0.1) from a generator seeded with the
    run seed, then overwritten by pretrained vectors where the file has them.
    The pad row is zero. Teacher and student built with the same seed, file
    and dimension therefore start from the same table.

    Attributes:
        logger (logging.Logger): Logger for coverage and progress messages.
    """

    def __init__(self, logger: logging.Logger = None):
        """
        Initialize the EmbeddingService.

        Args:
            logger (logging.Logger): Logger for debug and error messages.
                                     If None, uses module logger.
        """
        self.logger = logger or logging.getLogger(__name__)

    def build_table(self, vocab: Vocabulary, dim: int, seed: int,
                    path: Optional[Path] = None) -> Tuple[EmbeddingTable, EmbeddingCoverage]:
        """Create the embedding table for ``vocab``.

        Args:
            vocab (Vocabulary): Token ids to cover.
            dim (int): Embedding dimension; must equal the file's when a file is given.
            seed (int): Seed for the uniform draw of uncovered rows.
            path (Path): Optional GloVe-style text file.

        Returns:
            Tuple[EmbeddingTable, EmbeddingCoverage]: The table and file coverage.

        Raises:
            FormatError: If the file is malformed.
            ConfigError: If the file dimension differs from ``dim``.
        """
        try:
            rng = np.random.default_rng(seed)
            values = rng.uniform(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE, size=(len(vocab), dim))
            values[PAD_ID] = 0.0
            total = len(vocab) - len(RESERVED_TOKENS)
            if path is None:
                return EmbeddingTable(Tensor(values, requires_grad=True), PAD_ID), EmbeddingCoverage(0, total)

            wanted = {t: i for t, i in vocab.index.items() if t not in RESERVED_TOKENS}
            vectors, file_dim = read_vectors(Path(path), wanted)
            if file_dim != dim:
                raise ConfigError(f"embedding file {path} has dimension {file_dim}, config says {dim}")
            for token, vector in vectors.items():
                values[wanted[token]] = vector
            coverage = EmbeddingCoverage(len(vectors), total)
            self.logger.info(
                f"Pretrained vectors cover {coverage.found}/{coverage.total} tokens ({coverage.fraction:.1%})")
            return EmbeddingTable(Tensor(values, requires_grad=True), PAD_ID), coverage
        except Exception as e:
            self.logger.error(f"Error building embedding table: {e}")
            raise


def load_embeddings(path: Path, vocab: Vocabulary, seed: int = 0,
                    dim: Optional[int] = None) -> Tuple[EmbeddingTable, EmbeddingCoverage]:
    """Embedding table for ``vocab`` from a GloVe-style file, with coverage statistics."""
    if dim is None:
        _, dim = read_vectors(Path(path), {})
    return EmbeddingService().build_table(vocab, dim, seed, path)
