"""Zipf content popularity, cache-miss statistics and request sampling.

The cache always holds the ``M`` most popular files (ranks ``1..M``), all
files have the same size, and each user issues exactly one request per slot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ZipfCatalog:
    """Catalog of ``R`` equally sized files with Zipf(s) popularity.

    Parameters
    ----------
    s : float
        Decay exponent, must exceed 1.
    R : int
        Number of files in the catalog.
    M : int
        Number of top-ranked files held in the cache, ``0 <= M <= R``.
    """

    s: float
    R: int
    M: int
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    normalizer: float = field(init=False, repr=False, compare=False)
    precomputed_cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.s > 1:
            raise ValueError(f"Zipf exponent s must be > 1, got {self.s}")
        if int(self.R) != self.R or self.R < 1:
            raise ValueError(f"catalog size R must be a positive integer, got {self.R}")
        if int(self.M) != self.M or not 0 <= self.M <= self.R:
            raise ValueError(f"cache size M must be in [0, R={self.R}], got {self.M}")
        ranks = np.arange(1, int(self.R) + 1, dtype=np.float64)
        weights = ranks ** (-float(self.s))
        # smallest terms first keeps the normalizer accurate for large R
        normalizer = math.fsum(weights[::-1])
        cdf = np.cumsum(weights) / normalizer
        cdf[-1] = 1.0
        weights.setflags(write=False)
        cdf.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "normalizer", normalizer)
        object.__setattr__(self, "precomputed_cdf", cdf)

    def with_cache_size(self, M: int) -> "ZipfCatalog":
        return ZipfCatalog(self.s, self.R, M)


def zipf_pmf(j: int, cat: ZipfCatalog) -> float:
    """Probability that a request targets the file of rank ``j``."""
    if int(j) != j or not 1 <= j <= cat.R:
        raise ValueError(f"rank must be an integer in [1, {cat.R}], got {j}")
    return float(cat.weights[int(j) - 1] / cat.normalizer)


def miss_probability(cat: ZipfCatalog) -> float:
    """Probability that a single request falls outside the top-``M`` cache."""
    if cat.M == 0:
        return 1.0
    if cat.M == cat.R:
        return 0.0
    tail = math.fsum(cat.weights[cat.M:][::-1])
    return tail / cat.normalizer


def backhaul_access_probability(eps_m: float, n_users: int) -> float:
    """Probability that at least one of ``n_users`` requests misses the cache."""
    if not 0.0 <= eps_m <= 1.0:
        raise ValueError(f"miss probability must be in [0, 1], got {eps_m}")
    if n_users < 1:
        raise ValueError(f"n_users must be >= 1, got {n_users}")
    # 1 - (1 - eps)^n without cancellation for small eps
    return float(-math.expm1(n_users * math.log1p(-eps_m))) if eps_m < 1.0 else 1.0


def sample_requests(rng: np.random.Generator, cat: ZipfCatalog, n_users: int,
                    n_slots: int | None = None):
    """Draw one request rank per user per slot by inverse-CDF lookup.

    Returns
    -------
    ranks : ndarray of int64
        Shape ``(n_users,)`` when ``n_slots`` is None, else ``(n_slots, n_users)``.
    miss : bool or ndarray of bool
        True where any user's requested rank exceeds the cache size.
    """
    shape = (n_users,) if n_slots is None else (n_slots, n_users)
    u = rng.random(shape)
    ranks = np.searchsorted(cat.precomputed_cdf, u, side="right") + 1
    # guards the u -> 1 edge against rounding in the cdf
    np.minimum(ranks, cat.R, out=ranks)
    miss = (ranks > cat.M).any(axis=-1)
    if n_slots is None:
        return ranks, bool(miss)
    return ranks, miss
