"""Shared fixtures: seeds, an isolated table cache and a small reference library"""

import numpy as np
import pytest

from src.data.table_cache import TableCache
from src.engines.reference import MIN_LIMIT_M_REF, MIN_REPLICATIONS, ReferenceLibrary
from src.models.seeds import TABLE_STREAM, SeedSpec


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    """Every test gets its own cache directory"""
    cache_dir = tmp_path / "tables"
    monkeypatch.setenv("BOOTDIAG_CACHE_DIR", str(cache_dir))
    return cache_dir


@pytest.fixture
def seed():
    return SeedSpec(20240611)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture(scope="session")
def library(tmp_path_factory):
    """Smallest admissible tables, shared by the whole session"""
    cache = TableCache(tmp_path_factory.mktemp("session-tables"))
    return ReferenceLibrary(
        cache=cache,
        m_ref=MIN_LIMIT_M_REF,
        reps=MIN_REPLICATIONS,
        seed=SeedSpec(7, (TABLE_STREAM,)),
    )
