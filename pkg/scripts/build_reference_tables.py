"""
Reference Table Builder - populate the table cache

Simulates the null laws of the table-backed measures (CvM, AD, interval,
point, moment) and stores them in the cache directory, so later runs can
use --set tables.build=false.
"""

import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from src.config.settings import Settings
from src.data.table_cache import TableCache
from src.engines.reference import ReferenceLibrary, needs_table
from src.errors import BootDiagError
from src.models.measures import DiscrepancyMeasure
from src.models.seeds import TABLE_STREAM, SeedSpec


DEFAULT_MEASURES = ["cvm", "ad"]


class TableBuilder:
    """Builds and caches the tables of a list of measures"""

    def __init__(self, settings: Settings, workers: int = 1):
        self.settings = settings
        self.cache = TableCache(settings.cache_dir)
        self.library = ReferenceLibrary(
            cache=self.cache,
            m_ref=settings.table_m_ref,
            reps=settings.table_reps,
            seed=SeedSpec(settings.table_seed, (TABLE_STREAM,)),
            allow_build=True,
            workers=workers,
        )

    def build(self, measures: Sequence[DiscrepancyMeasure], m: int) -> List[str]:
        """Table ids, one per measure that needs a table"""
        built = []
        for measure in measures:
            if not needs_table(measure):
                print(f"  {measure.label}: closed-form null law, no table needed")
                continue
            started = time.perf_counter()
            table = self.library.table_for(measure, m)
            path = self.cache.path_for(table.table_id)
            print(f"  {table.table_id} -> {path} ({time.perf_counter() - started:.1f}s)")
            built.append(table.table_id)
        return built


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Build reference tables"""
    import argparse

    parser = argparse.ArgumentParser(description="Build null reference tables for bootdiag")
    parser.add_argument("measures", nargs="*", default=DEFAULT_MEASURES,
                        help="Measures (cvm, ad, interval:a,b, point:x, moment)")
    parser.add_argument("--cache-dir", type=str, default=None,
                        help="Cache directory (default: BOOTDIAG_CACHE_DIR or data/tables)")
    parser.add_argument("--m-ref", type=int, default=None, help="Draws per replication")
    parser.add_argument("--reps", type=int, default=None, help="Replications per table")
    parser.add_argument("--seed", type=int, default=None, help="Table master seed")
    parser.add_argument("--m", type=int, default=20,
                        help="Test size for the finite-m moment table")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes")

    args = parser.parse_args(argv)

    settings = Settings(cache_dir=Path(args.cache_dir) if args.cache_dir else None)
    if args.m_ref is not None:
        settings.table_m_ref = args.m_ref
    if args.reps is not None:
        settings.table_reps = args.reps
    if args.seed is not None:
        settings.table_seed = args.seed

    print(f"Cache: {settings.cache_dir}")
    print(f"m_ref={settings.table_m_ref}, reps={settings.table_reps}, seed={settings.table_seed}")

    try:
        measures = [DiscrepancyMeasure.parse(text) for text in args.measures]
        TableBuilder(settings, args.workers).build(measures, args.m)
    except BootDiagError as e:
        print(f"Error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
