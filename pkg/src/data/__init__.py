"""
Bootstrap Diagnostics Data Layer
"""

from src.data.results_store import ResultTable, RunManifest, emit_results
from src.data.table_cache import TableCache

__all__ = [
    "ResultTable",
    "RunManifest",
    "TableCache",
    "emit_results",
]
