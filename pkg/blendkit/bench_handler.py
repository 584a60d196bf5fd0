import os
from pathlib import Path
from typing import Any, Dict, List

from blendkit.repositories.checkpoint_repo import CheckpointRepository
from blendkit.repositories.metrics_repo import MetricsRepository
from blendkit.services.bench import BenchSpec, BenchTarget, run_latency_bench
from blendkit.util.config import RunConfig
from blendkit.util.run_logger import create_logger
from blendkit.util.validation import require_existing_path

run_name = os.environ.get("BLENDKIT_RUN_NAME", "blendkit-bench")

# Setup logging
logger = create_logger(run_name)

checkpoints = CheckpointRepository(logger=logger)
metrics = MetricsRepository(logger=logger)

DEFAULT_CHECKPOINTS = ("teacher.ckpt", "student-baseline.ckpt", "student-blended.ckpt")


def _checkpoint_paths(cfg: RunConfig, event: Dict[str, Any]) -> List[Path]:
    explicit = list(event.get("checkpoints") or cfg.bench.checkpoints)
    if explicit:
        return [Path(p) for p in explicit]
    # Without an explicit list, time whichever standard checkpoints exist
    found = [cfg.out_path / name for name in DEFAULT_CHECKPOINTS if (cfg.out_path / name).exists()]
    return found or [cfg.out_path / "student-baseline.ckpt"]


def _targets(paths: List[Path]) -> List[BenchTarget]:
    targets, seen = [], {}
    for path in paths:
        model = checkpoints.load(require_existing_path("checkpoint", path))
        label = path.stem
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}-{seen[label]}"
        variant = "Blended" if path.stem.startswith("student-blended") else ""
        targets.append(BenchTarget(label, model, variant))
    return targets


def bench(cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    """Time inference of the given checkpoints and write bench.jsonl and bench.samples.jsonl.

    Args:
        cfg (RunConfig): Resolved config; the ``bench`` section holds the defaults.
        event (Dict[str, Any]): Command-line overrides: ``checkpoints``, ``seq_lengths``,
            ``batch_size``, ``iterations``, ``warmup``, ``repetitions``, ``workers``, ``ensemble``.

    Returns:
        Dict[str, Any]: Output paths and the ratio of every row.

    Raises:
        ConfigError: A checkpoint path does not exist (the message names it) or the
            timing protocol is below its minimums.
        BenchError: The timed region is too short for the clock.
    """
    settings = cfg.bench

    def pick(key: str, default):
        value = event.get(key)
        return default if value is None else value

    spec = BenchSpec(
        targets=tuple(_targets(_checkpoint_paths(cfg, event))),
        seq_lengths=tuple(pick("seq_lengths", None) or settings.seq_lengths),
        batch_size=pick("batch_size", settings.batch_size),
        warmup=pick("warmup", settings.warmup),
        iterations=pick("iterations", settings.iterations),
        repetitions=pick("repetitions", settings.repetitions),
        workers=pick("workers", settings.workers),
        ensemble=pick("ensemble", True),
        seed=cfg.seed,
    )
    result = run_latency_bench(spec, log=logger)
    out_dir = cfg.out_path
    records_path = metrics.write(out_dir / "bench.jsonl", result.to_records())
    samples_path = metrics.write(out_dir / "bench.samples.jsonl", result.sample_records())
    return {
        "bench": str(records_path),
        "samples": str(samples_path),
        "ratios": {f"{row.label}@{row.seq_length}": round(row.ratio, 4) for row in result.rows},
    }


COMMANDS = {
    "bench": bench,
}


def handle(command: str, cfg: RunConfig, event: Dict[str, Any]) -> Dict[str, Any]:
    return COMMANDS[command](cfg, event)
