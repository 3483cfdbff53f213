"""Weighted chi-square mixtures sum_k xi_k chi2_{1,k}.

Random draws come from fixed-size chunks, chunk c seeded by the entropy list
(seed, stream, c). A draw's value depends only on its index, so any split of
the chunks across workers returns the same stream, and a longer run extends a
shorter one.
"""

from typing import Any, Callable, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import model_validator
from scipy import stats

from .config import DRAW_CHUNK
from .exceptions import DataError, UsageError
from .schemas import ArrayModel, frozen_array


class WeightedChiSq(ArrayModel):
    weights: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _positive_weights(cls, data: Any) -> Any:
        if isinstance(data, dict):
            xi = np.atleast_1d(np.asarray(data.get("weights"), dtype=float))
            if xi.ndim != 1 or xi.shape[0] < 1:
                raise DataError("a weighted chi-square needs at least one weight")
            if not np.all(xi > 0) or not np.all(np.isfinite(xi)):
                raise DataError("weighted chi-square weights must be finite and > 0")
            data = dict(data, weights=frozen_array(xi))
        return data

    @property
    def d(self) -> int:
        return int(self.weights.shape[0])


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 32-bit seed for the stream identified by (seed, keys)."""
    return int(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1)[0])


def chunked_draws(
    B: int,
    seed: int,
    draw_chunk: Callable[[np.random.Generator, int], np.ndarray],
    stream: int = 0,
    n_jobs: int = 1,
) -> np.ndarray:
    """Concatenate draw_chunk(rng, size) over fixed-size chunks of a B-draw stream."""
    if B < 1:
        raise UsageError("number of draws must be >= 1")
    if seed < 0:
        raise UsageError("seed must be a non-negative integer")
    sizes = [min(DRAW_CHUNK, B - start) for start in range(0, B, DRAW_CHUNK)]

    def one(c: int, size: int) -> np.ndarray:
        return draw_chunk(np.random.default_rng([int(seed), int(stream), c]), size)

    if n_jobs == 1 or len(sizes) == 1:
        parts = [one(c, size) for c, size in enumerate(sizes)]
    else:
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(one)(c, size) for c, size in enumerate(sizes))
    return np.concatenate(parts)


def sample(dist: WeightedChiSq, B: int, seed: int, stream: int = 0, n_jobs: int = 1) -> np.ndarray:
    xi = dist.weights

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, xi.shape[0]))
        return (z * z) @ xi

    return chunked_draws(B, seed, draw, stream=stream, n_jobs=n_jobs)


def moments(dist: WeightedChiSq) -> Tuple[float, float, float]:
    """Mean, variance and third central moment."""
    xi = dist.weights
    return float(np.sum(xi)), float(2.0 * np.sum(xi ** 2)), float(8.0 * np.sum(xi ** 3))


def tail_moment_match(dist: WeightedChiSq, q: float) -> float:
    """P(X > q) from a shifted, scaled chi2_nu with matched mean, variance and skewness."""
    if q <= 0:
        return 1.0
    mean, variance, third = moments(dist)
    sd = np.sqrt(variance)
    skewness = third / sd ** 3
    nu = 8.0 / skewness ** 2
    x = nu + np.sqrt(2.0 * nu) * (q - mean) / sd
    return float(stats.chi2.sf(x, nu))
