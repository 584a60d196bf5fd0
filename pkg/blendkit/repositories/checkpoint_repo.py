"""
Checkpoint files for teacher and student models.

Layout: one JSON header line (sorted keys) followed by the raw little-endian
float64 values of every parameter, in header order. The header holds the
format name, version, model kind, hyperparameters, class count and a table
of (name, shape, byte offset). Files are byte-deterministic, so the SHA-256
of the file doubles as the model fingerprint.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from blendkit.layers import ConvFilterBank, EmbeddingTable, Linear, LstmParams
from blendkit.models import StudentModel, TeacherModel
from blendkit.tensor import Tensor
from blendkit.util.errors import FormatError, InputError
from blendkit.util.validation import is_valid_param_name, require_existing_path

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "blendkit-checkpoint"
CHECKPOINT_VERSION = 1
LITTLE_ENDIAN_F8 = np.dtype("<f8")

Model = Union[TeacherModel, StudentModel]


def file_fingerprint(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def parameter_checksum(params: Dict[str, Tensor]) -> str:
    """SHA-256 over parameter names and values, for before/after mutation checks."""
    digest = hashlib.sha256()
    for name in sorted(params):
        digest.update(name.encode("utf-8"))
        digest.update(params[name].data.astype(LITTLE_ENDIAN_F8).tobytes())
    return digest.hexdigest()


def encode_checkpoint(model: Model) -> bytes:
    named = model.named_parameters()
    table: List[Dict] = []
    offset = 0
    for name, param in named.items():
        if not is_valid_param_name(name):
            raise InputError(f"invalid parameter name '{name}'")
        table.append({"name": name, "offset": offset, "shape": list(param.shape)})
        offset += param.size * LITTLE_ENDIAN_F8.itemsize
    header = {
        "format": CHECKPOINT_FORMAT,
        "hyperparameters": model.hyperparameters(),
        "kind": model.kind,
        "num_classes": model.num_classes,
        "params": table,
        "version": CHECKPOINT_VERSION,
    }
    body = b"".join(param.data.astype(LITTLE_ENDIAN_F8).tobytes() for param in named.values())
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n" + body


def _teacher_from(params: Dict[str, Tensor], hp: Dict) -> TeacherModel:
    embedding = EmbeddingTable(params["embedding.weight"], hp["pad_id"])
    fwd = LstmParams(**{k.split(".", 1)[1]: v for k, v in params.items() if k.startswith("fwd.")})
    bwd = None
    if hp["bidirectional"]:
        bwd = LstmParams(**{k.split(".", 1)[1]: v for k, v in params.items() if k.startswith("bwd.")})
    head = Linear(params["head.weight"], params["head.bias"])
    return TeacherModel(embedding, fwd, bwd, head, hp["dropout"])


def _student_from(params: Dict[str, Tensor], hp: Dict) -> StudentModel:
    embedding = EmbeddingTable(params["embedding.weight"], hp["pad_id"])
    banks = [ConvFilterBank(params[f"conv{w}.kernels"], params[f"conv{w}.bias"]) for w in hp["filter_widths"]]
    head = Linear(params["head.weight"], params["head.bias"])
    return StudentModel(embedding, banks, head, hp["dropout"])


def decode_checkpoint(raw: bytes, source: str = "<bytes>") -> Model:
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError(f"{source}:1: missing checkpoint header line")
    try:
        header = json.loads(raw[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{source}:1: unreadable checkpoint header: {e}")
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"{source}:1: expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, "
            f"got {header.get('format')} v{header.get('version')}")
    body = raw[newline + 1:]
    params: Dict[str, Tensor] = {}
    expected = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        start = entry["offset"]
        if start != expected:
            raise FormatError(f"{source}: parameter '{entry['name']}' at offset {start}, expected {expected}")
        stop = start + count * LITTLE_ENDIAN_F8.itemsize
        if stop > len(body):
            raise FormatError(f"{source}: truncated data for parameter '{entry['name']}'")
        values = np.frombuffer(body[start:stop], dtype=LITTLE_ENDIAN_F8).reshape(shape)
        params[entry["name"]] = Tensor(values, requires_grad=True)
        expected = stop
    if expected != len(body):
        raise FormatError(f"{source}: {len(body) - expected} trailing bytes after the last parameter")
    try:
        if header["kind"] == "teacher":
            model = _teacher_from(params, header["hyperparameters"])
        elif header["kind"] == "student":
            model = _student_from(params, header["hyperparameters"])
        else:
            raise FormatError(f"{source}:1: unknown model kind '{header['kind']}'")
    except (KeyError, TypeError) as e:
        raise FormatError(f"{source}: checkpoint is missing parameter or field {e}")
    if model.num_classes != header["num_classes"]:
        raise FormatError(f"{source}: head has {model.num_classes} classes, header says {header['num_classes']}")
    return model


class CheckpointRepository:
    """Reads and writes model checkpoints.

    Attributes:
        logger (logging.Logger): Logger for write and load messages.
    """

    def __init__(self, logger: logging.Logger = None):
        self.logger = logger or logging.getLogger(__name__)

    def save(self, model: Model, path: Path) -> str:
        """Write ``model`` to ``path`` and return its fingerprint."""
        fingerprint = self.save_encoded(encode_checkpoint(model), path)
        self.logger.info(f"Saved {model.kind} checkpoint {path} ({model.parameter_count()} parameters)")
        return fingerprint

    def save_encoded(self, raw: bytes, path: Path) -> str:
        """Write already encoded checkpoint bytes atomically and return their fingerprint."""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_name(path.name + ".tmp")
            tmp.write_bytes(raw)
            tmp.replace(path)
            return hashlib.sha256(raw).hexdigest()
        except Exception as e:
            self.logger.error(f"Failed to save checkpoint {path}: {e}")
            raise

    def load(self, path: Path) -> Model:
        path = require_existing_path("checkpoint", path)
        model = decode_checkpoint(path.read_bytes(), str(path))
        self.logger.debug(f"Loaded {model.kind} checkpoint {path}")
        return model

    def fingerprint(self, path: Path) -> str:
        return file_fingerprint(require_existing_path("checkpoint", path))
