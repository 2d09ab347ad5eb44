from __future__ import annotations

import numpy as np

from amortprox.errors import ContractError


class Rng:
    """Seeded random stream.

    Wraps a PCG64 ``numpy.random.Generator``. Single owner: do not share one instance between
    concurrent tasks, derive independent children with `child` instead.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ContractError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, key: int) -> "Rng":
        """Independent stream derived from (seed, key); does not advance this stream."""
        seq = np.random.SeedSequence([self.seed, int(key)])
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child.generator = np.random.Generator(np.random.PCG64(seq))
        return child

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, low: float, high: float, size: int | tuple[int, ...]) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def integers(self, high: int, size: int | tuple[int, ...]) -> np.ndarray:
        return self.generator.integers(0, high, size)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"
