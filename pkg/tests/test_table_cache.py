import json

import numpy as np
import pytest

from src.data.table_cache import FORMAT_VERSION, TableCache
from src.errors import ResultsIOError
from src.models.diagnostic import ReferenceTable
from src.models.measures import DiscrepancyMeasure
from src.models.seeds import SeedSpec


def _table(measure, key="t-1"):
    stats = np.random.Generator(np.random.Philox(1)).exponential(size=500)
    return ReferenceTable(
        measure=measure,
        m_ref=1000,
        replications=500,
        statistics=stats,
        seed=SeedSpec(7, (1_000_003,)),
        key=key,
    )


@pytest.mark.parametrize("text", ["cvm", "interval:-1.5,0.25", "point:0.3", "moment"])
def test_round_trip(tmp_path, text):
    cache = TableCache(tmp_path / "cache")
    table = _table(DiscrepancyMeasure.parse(text), key=f"{text}/key")
    path = cache.save(table)
    assert path.exists()
    assert "/" not in path.name

    loaded = cache.load(table.table_id)
    assert loaded.measure == table.measure
    assert loaded.seed == table.seed
    assert loaded.table_id == table.table_id
    assert np.array_equal(loaded.statistics, table.statistics)


def test_missing_key(tmp_path):
    assert TableCache(tmp_path).load("nothing-here") is None


def test_version_mismatch_is_ignored(tmp_path):
    cache = TableCache(tmp_path)
    path = cache.path_for("old")
    header = {"format_version": FORMAT_VERSION + 1, "key": "old"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        np.save(fh, np.arange(3.0))
    assert cache.load("old") is None


def test_corrupt_file(tmp_path):
    cache = TableCache(tmp_path)
    cache.path_for("bad").write_bytes(b"not json\n")
    with pytest.raises(ResultsIOError):
        cache.load("bad")


def test_table_quantiles():
    table = ReferenceTable(
        measure=DiscrepancyMeasure.parse("cvm"),
        m_ref=1000,
        replications=4,
        statistics=np.array([0.4, 0.1, 0.3, 0.2]),
        seed=SeedSpec(0),
    )
    assert table.cdf(0.25) == 0.5
    assert table.p_value(0.4) == 0.0
    assert table.quantile(0.5) == 0.2
    assert table.quantile(0.51) == 0.3
    assert table.table_id == "cvm-m1000-r4"


def test_table_builder_script(tmp_path, capsys):
    from scripts.build_reference_tables import main

    code = main([
        "ks", "moment", "--cache-dir", str(tmp_path), "--reps", "10000", "--m", "20",
    ])
    assert code == 0
    out = capsys.readouterr().out
    assert "ks: closed-form null law" in out
    assert len(list(tmp_path.iterdir())) == 1
    assert main(["bogus", "--cache-dir", str(tmp_path)]) == 2
