"""
Teacher and student sentence classifiers.

TeacherModel: embedding -> dropout -> (bi)LSTM final states -> dropout -> linear head.
StudentModel: embedding -> conv banks (widths 3, 4, 5) -> max over time -> concat
              -> dropout -> linear head.

Both expose ``logits(batch, training, rng)`` for training and the
``teacher_predict`` / ``student_predict`` functions for evaluation-mode
posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence

import numpy as np

from blendkit.layers import (
    ConvFilterBank,
    EmbeddingTable,
    Linear,
    LstmParams,
    bilstm_encode,
    conv_text,
    dropout,
    lstm_encode,
    max_width,
    parameter_count,
)
from blendkit.tensor import Tensor, concat, no_grad, softmax
from blendkit.util.errors import DimensionError, InputError

if TYPE_CHECKING:
    from blendkit.services.dataset import Batch

PROVENANCES = ("teacher", "student", "ensemble")


@dataclass
class ClassDistribution:
    """Posterior over K classes, one row per example.

    Attributes:
        probs (np.ndarray): n x K, rows nonnegative and summing to 1.
        provenance (str): "teacher", "student" or "ensemble".
    """

    probs: np.ndarray
    provenance: str

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim == 1:
            probs = probs[None, :]
        if probs.ndim != 2 or probs.shape[1] < 1:
            raise DimensionError(f"class distribution must be n x K, got shape {probs.shape}")
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance '{self.provenance}'")
        if not np.all(np.isfinite(probs)) or (probs < 0).any():
            raise InputError("class distribution has negative or non-finite entries")
        if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-9:
            raise InputError("class distribution rows do not sum to 1")
        self.probs = probs

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]

    def __len__(self) -> int:
        return self.probs.shape[0]

    def argmax(self) -> np.ndarray:
        # Ties go to the lowest class index
        return np.argmax(self.probs, axis=1)


@dataclass
class TeacherModel:
    embedding: EmbeddingTable
    fwd: LstmParams
    bwd: Optional[LstmParams]
    head: Linear
    dropout_rate: float = 0.5
    kind: str = field(default="teacher", init=False)

    def __post_init__(self) -> None:
        directions = 2 if self.bwd is not None else 1
        if self.head.in_features != directions * self.fwd.hidden_size:
            raise DimensionError(
                f"teacher head expects {self.head.in_features} inputs, encoder gives "
                f"{directions * self.fwd.hidden_size}")

    @classmethod
    def init(cls, embedding: EmbeddingTable, hidden_size: int, num_classes: int,
             rng: np.random.Generator, bidirectional: bool = True, dropout_rate: float = 0.5) -> "TeacherModel":
        fwd = LstmParams.init(embedding.dim, hidden_size, rng)
        bwd = LstmParams.init(embedding.dim, hidden_size, rng) if bidirectional else None
        directions = 2 if bidirectional else 1
        head = Linear.init(directions * hidden_size, num_classes, rng)
        return cls(embedding, fwd, bwd, head, dropout_rate)

    @property
    def num_classes(self) -> int:
        return self.head.out_features

    @property
    def bidirectional(self) -> bool:
        return self.bwd is not None

    def hyperparameters(self) -> Dict:
        return {
            "vocab_size": self.embedding.vocab_size,
            "embedding_dim": self.embedding.dim,
            "pad_id": self.embedding.pad_id,
            "hidden_size": self.fwd.hidden_size,
            "bidirectional": self.bidirectional,
            "dropout": self.dropout_rate,
        }

    def named_parameters(self) -> Dict[str, Tensor]:
        named = dict(self.embedding.named_parameters("embedding"))
        named.update(self.fwd.named_parameters("fwd"))
        if self.bwd is not None:
            named.update(self.bwd.named_parameters("bwd"))
        named.update(self.head.named_parameters("head"))
        return named

    def parameter_count(self) -> int:
        return parameter_count(self.named_parameters())

    def logits(self, batch: "Batch", training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        embedded = dropout(self.embedding.lookup(batch.ids), self.dropout_rate, training, rng)
        if self.bwd is not None:
            encoded = bilstm_encode(self.fwd, self.bwd, embedded, batch.lengths)
        else:
            encoded = lstm_encode(self.fwd, embedded, batch.lengths)
        return self.head(dropout(encoded, self.dropout_rate, training, rng))


@dataclass
class StudentModel:
    embedding: EmbeddingTable
    banks: List[ConvFilterBank]
    head: Linear
    dropout_rate: float = 0.5
    kind: str = field(default="student", init=False)

    def __post_init__(self) -> None:
        features = sum(bank.count for bank in self.banks)
        if self.head.in_features != features:
            raise DimensionError(f"student head expects {self.head.in_features} inputs, banks give {features}")

    @classmethod
    def init(cls, embedding: EmbeddingTable, filter_widths: Sequence[int], filter_count: int,
             num_classes: int, rng: np.random.Generator, dropout_rate: float = 0.5) -> "StudentModel":
        banks = [ConvFilterBank.init(width, filter_count, embedding.dim, rng) for width in filter_widths]
        head = Linear.init(filter_count * len(banks), num_classes, rng)
        return cls(embedding, banks, head, dropout_rate)

    @property
    def num_classes(self) -> int:
        return self.head.out_features

    @property
    def min_length(self) -> int:
        return max_width(self.banks)

    def hyperparameters(self) -> Dict:
        return {
            "vocab_size": self.embedding.vocab_size,
            "embedding_dim": self.embedding.dim,
            "pad_id": self.embedding.pad_id,
            "filter_widths": [bank.width for bank in self.banks],
            "filter_count": self.banks[0].count,
            "dropout": self.dropout_rate,
        }

    def named_parameters(self) -> Dict[str, Tensor]:
        named = dict(self.embedding.named_parameters("embedding"))
        for bank in self.banks:
            named.update(bank.named_parameters(f"conv{bank.width}"))
        named.update(self.head.named_parameters("head"))
        return named

    def parameter_count(self) -> int:
        return parameter_count(self.named_parameters())

    def logits(self, batch: "Batch", training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        embedded = self.embedding.lookup(batch.ids)
        # Sentences shorter than the widest filter are read together with their padding
        lengths = np.maximum(np.asarray(batch.lengths), self.min_length)
        pooled = [conv_text(bank, embedded, lengths) for bank in self.banks]
        features = dropout(concat(pooled, axis=1), self.dropout_rate, training, rng)
        return self.head(features)


def _predict(model, batch: "Batch", provenance: str) -> ClassDistribution:
    with no_grad():
        probs = softmax(model.logits(batch, training=False)).data
    return ClassDistribution(probs, provenance)


def teacher_predict(model: TeacherModel, batch: "Batch") -> ClassDistribution:
    """Evaluation-mode teacher posterior for every example of the batch."""
    return _predict(model, batch, "teacher")


def student_predict(model: StudentModel, batch: "Batch") -> ClassDistribution:
    """Evaluation-mode student posterior for every example of the batch."""
    return _predict(model, batch, "student")


def predict(model, batch: "Batch") -> ClassDistribution:
    return _predict(model, batch, model.kind)
