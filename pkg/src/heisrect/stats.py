"""Monte Carlo bookkeeping: estimates and counter-based random substreams.

All randomness is drawn from Philox generators keyed on
``(seed, tag, block)``. Work is cut into fixed-size blocks, so a sample is
identical whatever the number of workers that computed it.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

BLOCK = 1024


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("an estimate needs at least one sample")
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")

    @classmethod
    def from_samples(cls, contributions, seed: int) -> "Estimate":
        x = np.asarray(contributions, dtype=float)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(np.mean(x)), se, n, seed)

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, self.std_error * abs(factor), self.n_samples, self.seed)

    def agrees_with(self, other: "Estimate", n_sigma: float = 3.0) -> bool:
        combined = math.hypot(self.std_error, other.std_error)
        return abs(self.value - other.value) <= n_sigma * combined

    def as_dict(self) -> dict:
        return {"value": self.value, "std_error": self.std_error, "n_samples": self.n_samples, "seed": self.seed}


def _tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for block ``index`` of stream ``tag``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, _tag_id(tag), int(index)])
    key = ss.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def blocks(n: int, size: int = BLOCK):
    """Yield ``(block_index, start, stop)`` covering ``range(n)``."""
    for b, start in enumerate(range(0, n, size)):
        yield b, start, min(n, start + size)


def map_blocks(fn, n: int, workers: int = 1, size: int = BLOCK) -> list:
    """Apply ``fn(block, start, stop)`` to every block; results in block order."""
    jobs = list(blocks(n, size))
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere S^{dim-1} in R^dim."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def random_directions(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
