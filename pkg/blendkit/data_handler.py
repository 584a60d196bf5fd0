import csv
import os
from pathlib import Path
from typing import Any, Dict

from blendkit.repositories.artifact_repo import ArtifactRepository
from blendkit.services.corpus_service import LABEL_MAP_FILE, VOCAB_FILE, CorpusService
from blendkit.services.dataset import synth_corpus
from blendkit.util.config import RunConfig
from blendkit.util.run_logger import create_logger

run_name = os.environ.get("BLENDKIT_RUN_NAME", "blendkit-data")

# Setup logging
logger = create_logger(run_name)

artifacts = ArtifactRepository(logger=logger)
corpus_service = CorpusService(artifacts, log=logger)

DEFAULT_SYNTH_N = 2000
DEFAULT_SYNTH_VOCAB = 50


def write_rows(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["label", "text"])
        for row in rows:
            writer.writerow([row.label, row.text])


def build_vocab(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Build the vocabulary and label map from the configured training file."""
    out_dir = cfg.out_path
    vocab, label_map = corpus_service.build_vocab(cfg, out_dir)
    return {
        "vocab": str(out_dir / VOCAB_FILE),
        "labels": str(out_dir / LABEL_MAP_FILE),
        "vocab_size": len(vocab),
        "num_classes": len(label_map),
    }


def synth_data(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Write the synthetic marker dataset as train.csv and test.csv (columns label,text).

    Args:
        cfg (RunConfig): Resolved config; ``seed`` and ``out_path`` are used.
        event (Dict[str, Any]): Command options ``n`` and ``vocab_size``.

    Returns:
        Dict[str, Any]: Paths and row counts.
    """
    n = event.get("n") or DEFAULT_SYNTH_N
    vocab_size = event.get("vocab_size") or DEFAULT_SYNTH_VOCAB
    train, test = synth_corpus(n, vocab_size, cfg.seed)
    out_dir = cfg.out_path
    write_rows(out_dir / "train.csv", train)
    write_rows(out_dir / "test.csv", test)
    logger.info(f"Wrote {len(train)} train and {len(test)} test rows to {out_dir} (seed {cfg.seed})")
    return {
        "train": str(out_dir / "train.csv"),
        "test": str(out_dir / "test.csv"),
        "train_rows": len(train),
        "test_rows": len(test),
    }


COMMANDS = {
    "build-vocab": build_vocab,
    "synth-data": synth_data,
}


def handle(command: str, cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    return COMMANDS[command](cfg, event)
