"""
Results Store - result CSVs and the run manifest

Floats are written with repr so identical runs produce identical bytes;
the manifest records a sha256 per result file.
"""

import csv
import hashlib
import io
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pydantic
import scipy
import yaml

from src import __version__
from src.errors import ResultsIOError


logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "" if value is None else str(value)


def records_to_csv(
    records: Sequence[Mapping[str, Any]], columns: Optional[List[str]] = None
) -> str:
    """CSV text with a header line; columns default to the keys of the first record"""
    if columns is None:
        columns = list(records[0].keys()) if records else []
    if not columns:
        return ""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for record in records:
        writer.writerow([_cell(record.get(c)) for c in columns])
    return buffer.getvalue()


@dataclass
class ResultTable:
    """One output CSV"""
    name: str
    records: List[Dict[str, Any]]
    columns: Optional[List[str]] = None

    @property
    def filename(self) -> str:
        return self.name if self.name.endswith(".csv") else f"{self.name}.csv"

    def render(self) -> str:
        return records_to_csv(self.records, self.columns)


@dataclass
class RunManifest:
    config: Dict[str, Any]
    master_seed: int
    workers: int
    wall_time: float
    tables: Dict[str, str] = field(default_factory=dict)
    overrides: List[str] = field(default_factory=list)
    with_replacement: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "versions": software_versions(),
            "wall_time_seconds": round(self.wall_time, 3),
            "tables": self.tables,
            "overrides": self.overrides,
            "with_replacement": self.with_replacement,
            **self.extra,
        }


def software_versions() -> Dict[str, str]:
    return {
        "bootstrap-diagnostics": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
        "pyyaml": yaml.__version__,
    }


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as e:
        raise ResultsIOError(path, f"cannot write: {e}") from e


def emit_results(
    tables: Sequence[ResultTable],
    out_dir: Path,
    manifest: RunManifest,
) -> RunManifest:
    """
    Write every table as CSV and the manifest beside them

    An empty table still gets its header line (or an empty file when no
    columns are known).
    """
    out_dir = Path(out_dir)
    for table in tables:
        text = table.render()
        _write(out_dir / table.filename, text)
        manifest.tables[table.filename] = content_hash(text)
        logger.info(f"Wrote {len(table.records)} rows to {out_dir / table.filename}")

    _write(
        out_dir / MANIFEST_NAME,
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True, default=str) + "\n",
    )
    logger.debug(f"Manifest written to {out_dir / MANIFEST_NAME}")
    return manifest


def print_summary(lines: Sequence[str]) -> None:
    """Result summary on stdout; logging stays on stderr"""
    for line in lines:
        sys.stdout.write(line + "\n")
