import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from blendkit.util.errors import ConfigError, FormatError, InputError, StaleCacheError
from blendkit.util.validation import require_existing_path

logger = logging.getLogger(__name__)

CACHE_FORMAT = "blendkit-teacher-cache"
CACHE_VERSION = 1


@dataclass
class TeacherCache:
    """Teacher posteriors keyed by example id, tagged with the teacher fingerprint.

    Attributes:
        fingerprint (str): SHA-256 of the teacher checkpoint that produced the rows.
        num_classes (int): K.
        rows (Dict[str, np.ndarray]): example id -> length-K distribution.
    """

    fingerprint: str
    num_classes: int
    rows: Dict[str, np.ndarray]

    def __post_init__(self) -> None:
        for example_id, probs in self.rows.items():
            if probs.shape != (self.num_classes,):
                raise InputError(f"cache row {example_id} has {probs.shape[0]} classes, expected {self.num_classes}")
            if (probs < 0).any() or abs(float(probs.sum()) - 1.0) > 1e-9:
                raise InputError(f"cache row {example_id} is not a probability distribution")

    def __len__(self) -> int:
        return len(self.rows)

    def check_fingerprint(self, expected: str) -> None:
        if self.fingerprint != expected:
            raise StaleCacheError(
                f"teacher cache was built from checkpoint {self.fingerprint[:12]}, "
                f"the configured teacher is {expected[:12]}")

    def rows_for(self, example_ids: Sequence[str]) -> np.ndarray:
        """Stack the rows for ``example_ids``; every id must be cached."""
        missing = [i for i in example_ids if i not in self.rows]
        if missing:
            raise ConfigError(f"teacher cache has no rows for {len(missing)} examples, e.g. {missing[0]}")
        return np.stack([self.rows[i] for i in example_ids])


class TeacherCacheRepository:
    """Line-oriented cache files.

    Line 1 is a JSON header (format, version, fingerprint, num_classes, count,
    temperature); each further line is ``example_id<TAB>p_1 ... p_K`` with
    17 significant digits, sorted by example id.
    """

    def __init__(self, logger: logging.Logger = None):
        self.logger = logger or logging.getLogger(__name__)

    def save(self, cache: TeacherCache, path: Path) -> None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            header = {
                "count": len(cache),
                "fingerprint": cache.fingerprint,
                "format": CACHE_FORMAT,
                "num_classes": cache.num_classes,
                "temperature": 1.0,
                "version": CACHE_VERSION,
            }
            lines = [json.dumps(header, sort_keys=True)]
            for example_id in sorted(cache.rows):
                if "\t" in example_id or "\n" in example_id:
                    raise InputError(f"example id {example_id!r} contains a tab or newline")
                values = " ".join(f"{p:.17g}" for p in cache.rows[example_id])
                lines.append(f"{example_id}\t{values}")
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
            tmp.replace(path)
            self.logger.info(f"Wrote teacher cache {path} ({len(cache)} rows, K={cache.num_classes})")
        except Exception as e:
            self.logger.error(f"Failed to write teacher cache {path}: {e}")
            raise

    def load(self, path: Path, expected_fingerprint: Optional[str] = None) -> TeacherCache:
        """Read a cache file, optionally enforcing the teacher fingerprint.

        Raises:
            ConfigError: Path missing.
            FormatError: Malformed header or row, naming the line.
            StaleCacheError: Fingerprint differs from ``expected_fingerprint``.
        """
        path = require_existing_path("teacher cache", path)
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        if not lines:
            raise FormatError(f"{path}:1: empty teacher cache")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:1: unreadable cache header: {e}")
        if header.get("format") != CACHE_FORMAT or header.get("version") != CACHE_VERSION:
            raise FormatError(f"{path}:1: not a {CACHE_FORMAT} v{CACHE_VERSION} file")
        num_classes = header["num_classes"]
        rows: Dict[str, np.ndarray] = {}
        for line_number, line in enumerate(lines[1:], start=2):
            example_id, sep, values = line.partition("\t")
            if not sep:
                raise FormatError(f"{path}:{line_number}: expected '<id>\\t<probabilities>'")
            try:
                probs = np.array([float(v) for v in values.split()], dtype=np.float64)
            except ValueError:
                raise FormatError(f"{path}:{line_number}: non-numeric probability")
            if probs.shape != (num_classes,):
                raise FormatError(f"{path}:{line_number}: expected {num_classes} values, found {probs.size}")
            if (probs < 0).any() or abs(float(probs.sum()) - 1.0) > 1e-9:
                raise FormatError(f"{path}:{line_number}: row is not a probability distribution")
            rows[example_id] = probs
        if len(rows) != header["count"]:
            raise FormatError(f"{path}: header announces {header['count']} rows, found {len(rows)}")
        cache = TeacherCache(header["fingerprint"], num_classes, rows)
        if expected_fingerprint is not None:
            cache.check_fingerprint(expected_fingerprint)
        return cache
