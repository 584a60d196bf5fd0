"""
Labeled text datasets and padded batches.

- CsvSchema / read_labeled_rows: CSV ingestion with a configurable column layout
- LabelMap: class ids by first appearance of each label string
- Example / to_examples / read_labeled_csv: tokenized, truncated, id-encoded sentences
- Batch / make_batches: padded id matrices, seeded shuffling, last partial batch kept
- synth_corpus / synth_dataset: separable two-class marker data for desk-scale runs
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from blendkit.services.text_service import PAD_ID, Vocabulary, build_vocab, detokenize, tokenize
from blendkit.util.errors import FormatError, InputError

logger = logging.getLogger(__name__)

DEFAULT_MAX_LENGTH = 400
MIN_PAD_WIDTH = 5
SYNTH_MARKERS = ("great", "superb", "wonderful")
SYNTH_LABELS = ("0", "1")
SYNTH_TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of a labeled CSV file.

    Attributes:
        label_column: Header name, or 0-based position when the file has no header.
        text_columns: One or more text columns, joined with a space.
        has_header (bool): Whether the first row names the columns.
        delimiter (str): Field separator.
    """

    label_column: Union[str, int] = "label"
    text_columns: Tuple[Union[str, int], ...] = ("text",)
    has_header: bool = True
    delimiter: str = ","


@dataclass(frozen=True)
class LabeledRow:
    example_id: str
    label: str
    text: str


@dataclass
class LabelMap:
    """Label string -> class id, assigned in order of first appearance."""

    labels: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.index: Dict[str, int] = {label: i for i, label in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise InputError("label map contains duplicate labels")

    def __len__(self) -> int:
        return len(self.labels)

    def assign(self, label: str) -> int:
        if label not in self.index:
            self.index[label] = len(self.labels)
            self.labels.append(label)
        return self.index[label]

    def lookup(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise InputError(f"unknown label '{label}', label map has {self.labels}")


@dataclass(frozen=True)
class Example:
    """One tokenized sentence.

    Attributes:
        example_id (str): Stable id, "<file stem>:<data row number>".
        ids (Tuple[int, ...]): Token ids, at least one.
        label (int): Class id.
        text (str): Raw text kept for audit.
    """

    example_id: str
    ids: Tuple[int, ...]
    label: int
    text: str

    def __post_init__(self) -> None:
        if len(self.ids) < 1:
            raise InputError(f"example {self.example_id} has no tokens")
        if self.label < 0:
            raise InputError(f"example {self.example_id} has negative label {self.label}")


@dataclass
class Batch:
    """Padded batch of examples.

    Attributes:
        ids (np.ndarray): batch x max_len token ids, pad id past each true length.
        lengths (np.ndarray): True length of every row.
        labels (np.ndarray): Class id of every row.
        example_ids (List[str]): Example id of every row.
    """

    ids: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray
    example_ids: List[str]

    def __len__(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]


def _column(header: Optional[List[str]], column: Union[str, int], path: Path) -> int:
    if isinstance(column, int):
        return column
    if header is None:
        raise FormatError(f"{path}:1: column '{column}' named but the schema declares no header")
    try:
        return header.index(column)
    except ValueError:
        raise FormatError(f"{path}:1: header {header} has no column '{column}'")


def read_labeled_rows(path: Path, schema: CsvSchema) -> List[LabeledRow]:
    """Read raw (id, label, text) rows. Row numbers count data rows from 1.

    Raises:
        FormatError: Malformed CSV, missing columns or an empty label, naming the row.
    """
    path = Path(path)
    rows: List[LabeledRow] = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter=schema.delimiter)
        try:
            header = next(reader) if schema.has_header else None
            label_at = _column(header, schema.label_column, path)
            text_at = [_column(header, c, path) for c in schema.text_columns]
            needed = max([label_at] + text_at) + 1
            for row_number, record in enumerate(reader, start=1):
                if not record:
                    continue
                if len(record) < needed:
                    raise FormatError(f"{path} row {row_number}: expected {needed} columns, found {len(record)}")
                label = record[label_at].strip()
                if not label:
                    raise FormatError(f"{path} row {row_number}: empty label")
                text = " ".join(record[i] for i in text_at)
                rows.append(LabeledRow(f"{path.stem}:{row_number}", label, text))
        except StopIteration:
            raise FormatError(f"{path}:1: file is empty")
        except csv.Error as e:
            raise FormatError(f"{path} line {reader.line_num}: {e}")
    return rows


def to_examples(rows: Sequence[LabeledRow], vocab: Vocabulary, label_map: LabelMap,
                frozen_labels: bool = False, max_length: int = DEFAULT_MAX_LENGTH) -> List[Example]:
    """Tokenize, truncate to ``max_length`` and encode rows.

    With ``frozen_labels`` the label map is read-only and an unseen label is an
    InputError; otherwise new labels get the next id.
    """
    examples = []
    for row in rows:
        tokens = tokenize(row.text)[:max_length]
        label = label_map.lookup(row.label) if frozen_labels else label_map.assign(row.label)
        examples.append(Example(row.example_id, tuple(vocab.encode(tokens)), label, row.text))
    return examples


def read_labeled_csv(path: Path, schema: CsvSchema, vocab: Vocabulary, label_map: LabelMap,
                     frozen_labels: bool = False, max_length: int = DEFAULT_MAX_LENGTH) -> List[Example]:
    return to_examples(read_labeled_rows(path, schema), vocab, label_map, frozen_labels, max_length)


def pad_batch(examples: Sequence[Example], min_width: int = MIN_PAD_WIDTH, pad_id: int = PAD_ID) -> Batch:
    lengths = np.array([len(e.ids) for e in examples], dtype=np.int64)
    width = max(int(lengths.max()), min_width)
    ids = np.full((len(examples), width), pad_id, dtype=np.int64)
    for row, example in enumerate(examples):
        ids[row, :len(example.ids)] = example.ids
    labels = np.array([e.label for e in examples], dtype=np.int64)
    return Batch(ids, lengths, labels, [e.example_id for e in examples])


def make_batches(examples: Sequence[Example], batch_size: int, shuffle_seed: Optional[int] = None,
                 min_width: int = MIN_PAD_WIDTH) -> List[Batch]:
    """Split examples into padded batches.

    Args:
        examples: Examples in dataset order.
        batch_size: Rows per batch; the last batch may be smaller.
        shuffle_seed: Permute with ``default_rng(shuffle_seed)``; None keeps dataset order.
        min_width: Minimum padded width (the widest student filter).

    Returns:
        List[Batch]
    """
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(examples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(examples))
    return [
        pad_batch([examples[i] for i in order[start:start + batch_size]], min_width)
        for start in range(0, len(examples), batch_size)
    ]


@dataclass
class SynthDataset:
    train: List[Example]
    test: List[Example]
    vocab: Vocabulary
    label_map: LabelMap


def synth_corpus(n: int, vocab_size: int, seed: int, min_len: int = 4,
                 max_len: int = 16) -> Tuple[List[LabeledRow], List[LabeledRow]]:
    """Two-class marker sentences: label "1" iff a marker word occurs.

    Noise words are drawn uniformly from ``vocab_size - len(SYNTH_MARKERS)``
    filler words; positive sentences get one or two marker words at random
    positions. The first 80% of rows are the training split.
    """
    if n < 2:
        raise InputError(f"synthetic dataset needs n >= 2, got {n}")
    noise_size = vocab_size - len(SYNTH_MARKERS)
    if noise_size < 1:
        raise InputError(f"vocab_size must exceed {len(SYNTH_MARKERS)}, got {vocab_size}")
    rng = np.random.default_rng(seed)
    n_train = min(n - 1, max(1, int(n * SYNTH_TRAIN_FRACTION)))
    train, test = [], []
    for i in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        words = [f"w{int(j)}" for j in rng.integers(0, noise_size, size=length)]
        positive = bool(rng.random() < 0.5)
        if positive:
            for _ in range(int(rng.integers(1, 3))):
                words[int(rng.integers(0, length))] = SYNTH_MARKERS[int(rng.integers(0, len(SYNTH_MARKERS)))]
        label = SYNTH_LABELS[int(positive)]
        if i < n_train:
            train.append(LabeledRow(f"train:{i + 1}", label, detokenize(words)))
        else:
            test.append(LabeledRow(f"test:{i - n_train + 1}", label, detokenize(words)))
    return train, test


def synth_dataset(n: int, vocab_size: int, seed: int) -> SynthDataset:
    """Synthetic corpus encoded with a vocabulary built from its training split."""
    train_rows, test_rows = synth_corpus(n, vocab_size, seed)
    vocab = build_vocab(tokenize(row.text) for row in train_rows)
    label_map = LabelMap(list(SYNTH_LABELS))
    train = to_examples(train_rows, vocab, label_map, frozen_labels=True)
    test = to_examples(test_rows, vocab, label_map, frozen_labels=True)
    return SynthDataset(train, test, vocab, label_map)
