import numpy as np
import pytest

from src.engines.external import ExternalDrawPool, run_external
from src.errors import ExternalPoolError, ResultsIOError
from src.models.diagnostic import DiagnosticConfig
from src.models.seeds import SeedSpec


def _pool(values):
    return ExternalDrawPool(np.asarray(values, dtype=float), label="test-pool")


def test_csv_with_header(tmp_path):
    path = tmp_path / "draws.csv"
    path.write_text("t_star\n0.5\n-1.25\n\n2.0\n")
    pool = ExternalDrawPool.from_csv(path)
    assert pool.B == 3
    assert pool.label == "draws"
    assert np.array_equal(pool.draws, [0.5, -1.25, 2.0])


def test_csv_problems_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("draw\n0.1\n0.2\nabc\n0.3\nnan\n1,2\n")
    with pytest.raises(ExternalPoolError) as info:
        ExternalDrawPool.from_csv(path)
    message = str(info.value)
    assert "line 4" in message
    assert "line 6" in message
    assert "line 7" in message


def test_empty_and_missing_pools(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("draw\n")
    with pytest.raises(ExternalPoolError):
        ExternalDrawPool.from_csv(path)
    with pytest.raises(ResultsIOError):
        ExternalDrawPool.from_csv(tmp_path / "absent.csv")
    with pytest.raises(ExternalPoolError):
        _pool([0.0, np.inf])


def test_disjoint_blocks_cover_pool(rng, seed):
    pool = _pool(rng.standard_normal(200))
    result = run_external(pool, m=20, K=10, config=DiagnosticConfig(m=20), seed=seed)
    assert result.blocks.shape == (10, 20)
    assert np.array_equal(np.sort(result.blocks.ravel()), np.arange(200))
    assert len(result.to_records()) == 10
    assert result.to_records()[3]["test"] == 3

    again = run_external(pool, m=20, K=10, config=DiagnosticConfig(m=20), seed=seed)
    assert np.array_equal(again.blocks, result.blocks)


def test_pool_too_small(rng, seed):
    pool = _pool(rng.standard_normal(200))
    with pytest.raises(ExternalPoolError):
        run_external(pool, m=21, K=10, config=DiagnosticConfig(m=21), seed=seed)
    result = run_external(
        pool, m=21, K=10, config=DiagnosticConfig(m=21), seed=seed, with_replacement=True
    )
    assert result.with_replacement
    assert result.blocks.shape == (10, 21)
    assert result.blocks.min() >= 0 and result.blocks.max() < 200


def test_constant_pool(seed):
    with pytest.raises(ExternalPoolError):
        run_external(_pool(np.ones(50)), m=5, K=2, config=DiagnosticConfig(m=5), seed=seed)


def test_normal_pool_keeps_size(rng, seed):
    pool = _pool(rng.standard_normal(10_000))
    result = run_external(pool, m=20, K=500, config=DiagnosticConfig(m=20), seed=seed)
    assert 0.02 <= result.profile.rate_at(0.05) <= 0.08
    assert result.location == pytest.approx(np.mean(pool.draws))


def test_heavy_tailed_pool_is_detected(rng, seed):
    pool = _pool(rng.standard_t(3, size=10_000))
    result = run_external(pool, m=500, K=20, config=DiagnosticConfig(m=500), seed=seed)
    assert result.profile.rate_at(0.05) >= 0.5
