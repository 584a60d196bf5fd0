import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from blendkit.repositories.metrics_repo import MetricsRepository
from blendkit.util.errors import InputError

logger = logging.getLogger(__name__)

FAMILY = {
    "BiLSTM": "LSTM",
    "LSTM": "LSTM",
    "CNN": "CNN",
    "Blended": "CNN",
    "Ensemble": "CNN + LSTM",
}
VARIANT_ORDER = ("LSTM", "BiLSTM", "CNN", "Blended", "Ensemble")


def _row_key(variant: str, label: str) -> Tuple[int, str]:
    rank = VARIANT_ORDER.index(variant) if variant in VARIANT_ORDER else len(VARIANT_ORDER)
    return rank, label


def _align(rows: List[List[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * width for width in widths))
    return "\n".join(lines)


def accuracy_table(summaries: Sequence[Dict]) -> Tuple[str, List[Dict]]:
    """Rows are model family x variant, one accuracy column per dataset."""
    datasets = sorted({s["dataset"] for s in summaries})
    cells: Dict[Tuple[str, str], Dict[str, float]] = {}
    for s in summaries:
        cells.setdefault((s["variant"], s.get("label", s["variant"])), {})[s["dataset"]] = s["accuracy"]
    rows = [["Model", "Variant"] + datasets]
    records = []
    for variant, label in sorted(cells, key=lambda k: _row_key(*k)):
        values = cells[(variant, label)]
        name = variant if label == variant else f"{variant} ({label})"
        rows.append([FAMILY.get(variant, variant), name] +
                    [f"{100 * values[d]:.2f}" if d in values else "-" for d in datasets])
        records.append({"record": "accuracy_row", "family": FAMILY.get(variant, variant), "variant": name,
                        "accuracy": {d: values[d] for d in datasets if d in values}})
    return _align(rows), records


def latency_table(latencies: Sequence[Dict]) -> Tuple[str, List[Dict]]:
    """One row per timed model and sequence length; ratios relative to the reference CNN."""
    rows = [["Model", "Variant", "Label", "SeqLen", "Threads", "Median ms", "IQR ms", "Ratio"]]
    records = []
    ordered = sorted(latencies, key=lambda r: (r["seq_length"], _row_key(r["variant"], r["label"]), r["threads"]))
    for r in ordered:
        rows.append([FAMILY.get(r["variant"], r["variant"]), r["variant"], r["label"], str(r["seq_length"]),
                     str(r["threads"]), f"{1e3 * r['median_s']:.3f}", f"{1e3 * r['iqr_s']:.3f}",
                     f"{r['ratio']:.2f}x"])
        records.append({"record": "latency_row", "family": FAMILY.get(r["variant"], r["variant"]),
                        "variant": r["variant"], "label": r["label"], "seq_length": r["seq_length"],
                        "threads": r["threads"], "median_ms": 1e3 * r["median_s"],
                        "iqr_ms": 1e3 * r["iqr_s"], "ratio": r["ratio"]})
    return _align(rows), records


def emit_report_table(reports: Sequence[Dict]) -> Tuple[str, List[Dict]]:
    """Format metrics summaries and latency rows as aligned text plus structured records.

    Args:
        reports: Records as written by the metrics and bench commands; only
            ``summary`` and ``latency`` records are used.

    Returns:
        Tuple of (plain-text tables, machine-readable row records).

    Raises:
        InputError: If no summary or latency record is given.
    """
    summaries = [r for r in reports if r.get("record") == "summary"]
    latencies = [r for r in reports if r.get("record") == "latency"]
    if not summaries and not latencies:
        raise InputError("no summary or latency records to report")
    sections, records = [], []
    if summaries:
        text, rows = accuracy_table(summaries)
        sections.append("Accuracy (%)\n\n" + text)
        records.extend(rows)
    if latencies:
        text, rows = latency_table(latencies)
        sections.append("Latency per batch\n\n" + text)
        records.extend(rows)
    return "\n\n".join(sections) + "\n", records


class ReportService:
    """Merges metrics and bench record files into one report.

    Attributes:
        metrics (MetricsRepository): Record file access.
        logger (logging.Logger): Logger for progress and errors.
    """

    def __init__(self, metrics: MetricsRepository, log: logging.Logger = None):
        self.metrics = metrics
        self.logger = log or logging.getLogger(__name__)

    def write_report(self, inputs: Sequence[Path], out_dir: Path, name: str = "report") -> str:
        try:
            reports = []
            for path in inputs:
                reports.extend(self.metrics.read(path))
            text, records = emit_report_table(reports)
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / f"{name}.txt").write_text(text, encoding="utf-8")
            self.metrics.write(out_dir / f"{name}.jsonl", records)
            return text
        except Exception as e:
            self.logger.error(f"Error writing report: {e}")
            raise
