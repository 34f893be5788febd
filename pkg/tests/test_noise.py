import numpy as np
import pytest
from scipy import stats

from spdelp.noise import (
    NoisePath,
    TimeGrid,
    brownian_value,
    map_chunks,
    sample_batch,
    sample_noise,
)


def test_time_grid():
    tg = TimeGrid(1.0, 256)
    assert tg.dt * tg.M == tg.T
    assert tg.times[-1] == 1.0
    assert TimeGrid.from_dt(1.0, 2.0**-10).M == 1024
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValueError):
        TimeGrid.from_dt(1.0, 0.3)


def test_empty_table():
    n = sample_noise(TimeGrid(1.0, 16), 0, seed=3)
    assert n.dW.shape == (0, 16)


def test_reproducible_and_keyed():
    tg = TimeGrid(1.0, 64)
    a = sample_noise(tg, 3, seed=7, replicate=2)
    b = sample_noise(tg, 3, seed=7, replicate=2)
    assert np.array_equal(a.dW, b.dW)
    assert not np.array_equal(a.dW, sample_noise(tg, 3, seed=7, replicate=3).dW)
    assert not np.array_equal(a.dW, sample_noise(tg, 3, seed=8, replicate=2).dW)
    # adding modes leaves existing modes untouched
    assert np.array_equal(sample_noise(tg, 5, seed=7, replicate=2).dW[:3], a.dW)


def test_batch_matches_single():
    tg = TimeGrid(1.0, 32)
    batch = sample_batch(tg, 2, 11, range(4, 8))
    for i, r in enumerate(range(4, 8)):
        assert np.array_equal(batch[i], sample_noise(tg, 2, 11, r).dW)


def test_mean_and_variance():
    M = 10**5
    tg = TimeGrid(1.0, M)
    dW = sample_noise(tg, 1, seed=2024).dW[0]
    assert abs(dW.mean()) <= 4 * np.sqrt(tg.dt / M)
    assert 0.98 <= np.var(dW / np.sqrt(tg.dt)) <= 1.02


def test_mode_independence():
    dW = sample_noise(TimeGrid(1.0, 10**5), 2, seed=99).dW
    assert abs(np.corrcoef(dW)[0, 1]) <= 0.02


def test_brownian_value():
    n = sample_noise(TimeGrid(2.0, 4096), 2, seed=5)
    assert brownian_value(n, 1, 0) == 0.0
    assert brownian_value(n, 1, 4096) == n.brownian()[1, -1]
    assert brownian_value(n, 0, 100) == pytest.approx(n.dW[0, :100].sum(), abs=1e-12)
    qv = (n.dW[0] ** 2).sum() / n.tg.T
    assert 0.9 <= qv <= 1.1
    with pytest.raises(IndexError):
        brownian_value(n, 2, 0)
    with pytest.raises(IndexError):
        brownian_value(n, 0, 4097)


def test_coarsening_is_equal_in_law():
    R = 10**4
    fine = sample_batch(TimeGrid(1.0, 16), 1, 31, range(R))[:, 0].sum(axis=1)
    coarse = sample_batch(TimeGrid(1.0, 8), 1, 32, range(R))[:, 0].sum(axis=1)
    assert stats.ks_2samp(fine, coarse).pvalue > 1e-3


def test_coarsened_path_keeps_endpoints():
    n = sample_noise(TimeGrid(1.0, 64), 2, seed=1)
    c = n.coarsened(4)
    assert c.tg.M == 16
    assert np.allclose(c.brownian()[:, -1], n.brownian()[:, -1], atol=1e-14)


def test_noise_path_validation():
    with pytest.raises(ValueError):
        NoisePath(TimeGrid(1.0, 4), np.zeros((1, 5)))
    with pytest.raises(ValueError):
        NoisePath(TimeGrid(1.0, 4), np.full((1, 4), np.inf))


def test_map_chunks_independent_of_threads():
    f = lambda b: np.asarray(list(b)) ** 2
    one = np.concatenate(map_chunks(f, range(300), threads=1))
    many = np.concatenate(map_chunks(f, range(300), threads=4))
    assert np.array_equal(one, many)
