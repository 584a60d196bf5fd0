import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List

from blendkit.util.errors import FormatError
from blendkit.util.validation import require_existing_path

logger = logging.getLogger(__name__)


class MetricsRepository:
    """JSON-lines records: one object per line, keys sorted."""

    def __init__(self, logger: logging.Logger = None):
        self.logger = logger or logging.getLogger(__name__)

    def write(self, path: Path, records: Iterable[Dict]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            lines = [json.dumps(record, sort_keys=True) for record in records]
            path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
            self.logger.info(f"Wrote {len(lines)} records to {path}")
            return path
        except Exception as e:
            self.logger.error(f"Failed to write records to {path}: {e}")
            raise

    def read(self, path: Path) -> List[Dict]:
        path = require_existing_path("records file", path)
        records = []
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise FormatError(f"{path}:{line_number}: invalid JSON record: {e}")
        return records
