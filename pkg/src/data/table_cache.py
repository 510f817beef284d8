"""
Table Cache - write-once store for simulated reference tables

One file per table: a JSON header line (format version, measure, m_ref,
replications, seed) followed by the sorted statistics in .npy format. The
statistics are reproducible bit for bit from the header.
"""

import json
import logging
import re
from pathlib import Path
from typing import Optional

import numpy as np

from src.errors import ResultsIOError
from src.models.diagnostic import ReferenceTable
from src.models.measures import DiscrepancyMeasure, MeasureKind
from src.models.seeds import SeedSpec


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SUFFIX = ".table"


def _safe_name(key: str) -> str:
    return re.sub(r"[^A-Za-z0-9._+-]", "_", key)


def _measure_header(measure: DiscrepancyMeasure) -> dict:
    header = {"kind": measure.kind.value}
    if measure.kind == MeasureKind.INTERVAL_SUP:
        header["lower"] = repr(measure.lower)
        header["upper"] = repr(measure.upper)
    elif measure.kind == MeasureKind.POINT_ABS:
        header["x"] = repr(measure.x)
    elif measure.kind == MeasureKind.MOMENT:
        header["omega"] = [list(row) for row in measure.omega]
    return header


def _measure_from_header(header: dict) -> DiscrepancyMeasure:
    kind = MeasureKind(header["kind"])
    if kind == MeasureKind.INTERVAL_SUP:
        return DiscrepancyMeasure.interval(float(header["lower"]), float(header["upper"]))
    if kind == MeasureKind.POINT_ABS:
        return DiscrepancyMeasure.point(float(header["x"]))
    if kind == MeasureKind.MOMENT:
        return DiscrepancyMeasure.moment(header["omega"])
    return DiscrepancyMeasure(kind)


class TableCache:
    """Reference tables on disk, keyed by measure + m_ref + replications + seed"""

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def path_for(self, key: str) -> Path:
        return self.directory / f"{_safe_name(key)}{SUFFIX}"

    def load(self, key: str) -> Optional[ReferenceTable]:
        path = self.path_for(key)
        if not path.exists():
            return None
        try:
            with open(path, "rb") as fh:
                header = json.loads(fh.readline().decode("utf-8"))
                statistics = np.load(fh, allow_pickle=False)
        except (OSError, ValueError) as e:
            raise ResultsIOError(path, f"unreadable reference table: {e}") from e

        if header.get("format_version") != FORMAT_VERSION:
            logger.warning(
                f"Ignoring {path.name}: format version {header.get('format_version')} "
                f"!= {FORMAT_VERSION}"
            )
            return None

        logger.debug(f"Loaded reference table {key} from {path}")
        return ReferenceTable(
            measure=_measure_from_header(header["measure"]),
            m_ref=int(header["m_ref"]),
            replications=int(header["replications"]),
            statistics=statistics,
            seed=SeedSpec(int(header["master_seed"]), tuple(header["stream_path"])),
            key=header["key"],
        )

    def save(self, table: ReferenceTable) -> Path:
        path = self.path_for(table.table_id)
        header = {
            "format_version": FORMAT_VERSION,
            "key": table.table_id,
            "measure": _measure_header(table.measure),
            "m_ref": table.m_ref,
            "replications": table.replications,
            "master_seed": table.seed.master_seed,
            "stream_path": list(table.seed.stream_path),
        }
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(path.suffix + ".tmp")
            with open(tmp, "wb") as fh:
                fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
                np.save(fh, np.ascontiguousarray(table.statistics), allow_pickle=False)
            tmp.replace(path)
        except OSError as e:
            raise ResultsIOError(path, f"cannot write reference table: {e}") from e

        logger.info(f"Saved reference table {table.table_id} to {path}")
        return path
