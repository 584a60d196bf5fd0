import json
import logging
from pathlib import Path
from typing import Dict

from blendkit.services.dataset import LabelMap
from blendkit.services.text_service import Vocabulary
from blendkit.util.errors import FormatError, InputError
from blendkit.util.validation import require_existing_path

logger = logging.getLogger(__name__)


class ArtifactRepository:
    """
    Sidecar files that teacher and student runs share.

    - vocab.txt: one token per line, line i holds id i-1
    - labels.tsv: ``label<TAB>id`` per line, ids 0..K-1 in order
    - run_config.json: resolved run configuration, keys sorted
    """

    def __init__(self, logger: logging.Logger = None):
        self.logger = logger or logging.getLogger(__name__)

    def save_vocab(self, vocab: Vocabulary, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(token + "\n" for token in vocab.tokens), encoding="utf-8")
        self.logger.info(f"Wrote vocabulary of {len(vocab)} tokens to {path}")

    def load_vocab(self, path: Path) -> Vocabulary:
        path = require_existing_path("vocabulary", path)
        tokens = path.read_text(encoding="utf-8").split("\n")
        if tokens and tokens[-1] == "":
            tokens.pop()
        for line_number, token in enumerate(tokens, start=1):
            if not token or token != token.strip():
                raise FormatError(f"{path}:{line_number}: blank or padded vocabulary entry")
        try:
            return Vocabulary(tokens)
        except InputError as e:
            raise FormatError(f"{path}: {e}")

    def save_label_map(self, label_map: LabelMap, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = []
        for label in label_map.labels:
            if "\t" in label or "\n" in label:
                raise InputError(f"label {label!r} contains a tab or newline")
            lines.append(f"{label}\t{label_map.index[label]}\n")
        path.write_text("".join(lines), encoding="utf-8")

    def load_label_map(self, path: Path) -> LabelMap:
        path = require_existing_path("label map", path)
        labels = []
        for line_number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            label, sep, class_id = line.rpartition("\t")
            if not sep or not class_id.isdigit() or int(class_id) != len(labels):
                raise FormatError(f"{path}:{line_number}: expected '<label>\\t{len(labels)}'")
            labels.append(label)
        return LabelMap(labels)

    def save_run_config(self, config: Dict, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(config, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        self.logger.debug(f"Wrote run config to {path}")

    def load_run_config(self, path: Path) -> Dict:
        path = require_existing_path("run config", path)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}:{e.lineno}: invalid run config: {e.msg}")
