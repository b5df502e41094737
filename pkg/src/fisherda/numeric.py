"""Dense float64 matrix helpers and the seeded random source.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64, one
sample per row. The random source wraps numpy's PCG64 bit generator, whose
output stream is fixed by the algorithm and therefore identical across
platforms for a given seed.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, EmptyInputError, ParameterError

DTYPE = np.float64


def as_matrix(a) -> np.ndarray:
    """Coerce to a 2-D float64 array (vectors become a single row)."""
    m = np.asarray(a, dtype=DTYPE)
    if m.ndim == 0:
        return m.reshape(1, 1)
    if m.ndim == 1:
        return m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def reduce(a, kind: str = "sum"):
    """Reduce a matrix: ``sum``/``mean`` give a scalar, ``row_mean`` the
    per-column mean over rows as a 1 x cols matrix."""
    a = as_matrix(a)
    if a.size == 0:
        raise EmptyInputError(f"cannot reduce an empty {a.shape[0]}x{a.shape[1]} matrix")
    if kind == "sum":
        return float(a.sum())
    if kind == "mean":
        return float(a.mean())
    if kind == "row_mean":
        return a.mean(axis=0, keepdims=True)
    raise ParameterError(f"unknown reduction {kind!r}")


class SeededRng:
    """Deterministic random source (PCG64 seeded from a 64-bit integer)."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def normal(self, shape, mu: float = 0.0, sigma: float = 1.0) -> np.ndarray:
        if not sigma > 0:
            raise ParameterError(f"normal sigma must be > 0, got {sigma}")
        return self._gen.normal(mu, sigma, size=shape).astype(DTYPE, copy=False)

    def uniform(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if not lo < hi:
            raise ParameterError(f"uniform requires lo < hi, got [{lo}, {hi})")
        return self._gen.uniform(lo, hi, size=shape).astype(DTYPE, copy=False)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def spawn(self, key: int) -> "SeededRng":
        """Independent child stream derived from this seed and ``key``."""
        child = int(np.random.SeedSequence([self.seed, int(key)]).generate_state(1, np.uint64)[0])
        return SeededRng(child)


def rng_draw(rng: SeededRng, shape, dist: str = "normal", *params: float) -> np.ndarray:
    """Draw a matrix of i.i.d. values; ``dist`` is ``normal`` (mu, sigma)
    or ``uniform`` (lo, hi)."""
    if dist == "normal":
        mu, sigma = params if params else (0.0, 1.0)
        return rng.normal(shape, mu, sigma)
    if dist == "uniform":
        lo, hi = params if params else (0.0, 1.0)
        return rng.uniform(shape, lo, hi)
    raise ParameterError(f"unknown distribution {dist!r}")
