"""Seeded Wiener increments on a uniform time grid.

Each mode of each replicate draws from its own Philox (counter-based) stream
keyed on ``(seed, replicate, k)`` through :class:`numpy.random.SeedSequence`,
so modes are independent, replicates never overlap, and any single path can be
regenerated without touching the others.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "M", int(self.M))
        if self.M * self.dt != self.T:
            raise ValueError(f"T={self.T} is not an exact multiple of dt for M={self.M}")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt

    def refined(self, factor: int) -> TimeGrid:
        return TimeGrid(self.T, self.M * factor)

    @classmethod
    def from_dt(cls, T: float, dt: float) -> TimeGrid:
        M = int(round(T / dt))
        if M < 1 or not np.isclose(M * dt, T, rtol=1e-12, atol=0):
            raise ValueError(f"dt={dt} does not divide T={T}")
        return cls(T, M)


@dataclass(frozen=True, eq=False)
class NoisePath:
    tg: TimeGrid
    dW: np.ndarray = field(repr=False)
    seed: int = 0
    replicate: int = 0

    def __post_init__(self):
        dW = np.array(self.dW, dtype=float)
        if dW.size == 0:
            dW = dW.reshape(0, self.tg.M)
        if dW.ndim != 2 or dW.shape[1] != self.tg.M:
            raise ValueError(f"dW must have shape (K, {self.tg.M}), got {dW.shape}")
        if not np.all(np.isfinite(dW)):
            raise ValueError("non-finite increments")
        dW.flags.writeable = False
        object.__setattr__(self, "dW", dW)

    @property
    def K(self) -> int:
        return self.dW.shape[0]

    def brownian(self) -> np.ndarray:
        """All mode paths, shape ``(K, M + 1)`` with ``w[:, 0] == 0``."""
        w = np.zeros((self.K, self.tg.M + 1))
        np.cumsum(self.dW, axis=1, out=w[:, 1:])
        return w

    def coarsened(self, factor: int) -> NoisePath:
        """Same Brownian path on a grid ``factor`` times coarser."""
        if self.tg.M % factor:
            raise ValueError(f"factor {factor} does not divide M={self.tg.M}")
        dW = self.dW.reshape(self.K, self.tg.M // factor, factor).sum(axis=2)
        return NoisePath(TimeGrid(self.tg.T, self.tg.M // factor), dW, self.seed, self.replicate)


def mode_generator(seed: int, replicate: int, k: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(int(replicate), int(k)))
    return np.random.Generator(np.random.Philox(ss))


def sample_increments(tg: TimeGrid, K: int, seed: int, replicate: int) -> np.ndarray:
    if K < 0:
        raise ValueError(f"K must be >= 0, got {K}")
    dW = np.empty((K, tg.M))
    sdt = np.sqrt(tg.dt)
    for k in range(K):
        dW[k] = mode_generator(seed, replicate, k).standard_normal(tg.M) * sdt
    return dW


def sample_noise(tg: TimeGrid, K: int, seed: int, replicate: int = 0) -> NoisePath:
    return NoisePath(tg, sample_increments(tg, K, seed, replicate), int(seed), int(replicate))


def sample_batch(tg: TimeGrid, K: int, seed: int, replicates) -> np.ndarray:
    """Stacked increments for several replicates, shape ``(R, K, M)``."""
    replicates = list(replicates)
    out = np.empty((len(replicates), K, tg.M))
    for i, r in enumerate(replicates):
        out[i] = sample_increments(tg, K, seed, r)
    return out


def brownian_value(noise: NoisePath, k: int, m: int) -> float:
    if not (0 <= k < noise.K):
        raise IndexError(f"mode {k} out of range for K={noise.K}")
    if not (0 <= m <= noise.tg.M):
        raise IndexError(f"step {m} out of range for M={noise.tg.M}")
    # sequential accumulation, matching brownian() and the Euler recursion
    return float(np.cumsum(noise.dW[k, :m])[-1]) if m else 0.0


CHUNK = 64


def replicate_chunks(replicates: range, chunk: int = CHUNK) -> list[range]:
    """Fixed-size blocks of replicate indices, independent of the thread count."""
    return [replicates[i : i + chunk] for i in range(0, len(replicates), chunk)]


def map_chunks(fn, replicates: range, threads: int | None = 1, chunk: int = CHUNK) -> list:
    """``[fn(block) for block in replicate_chunks(replicates)]``, optionally threaded.

    Blocks are fixed before scheduling and results come back in block order, so
    the thread count never changes the output.
    """
    blocks = replicate_chunks(replicates, chunk)
    threads = (os.cpu_count() or 1) if threads is None else max(1, int(threads))
    if threads == 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, blocks))
