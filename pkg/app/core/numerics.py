# app/core/numerics.py
"""
Special functions and reproducible normal variates.

Normal variates come from the inverse-CDF transform of uniform variates so that
a replication draws the same numbers on every platform and under every worker
schedule. Each replication owns an `RngStream`; its sub-seed is derived from
(master_seed, stream_index) through numpy's SeedSequence hashing, so replication
r does not depend on which replications ran before it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

ArrayLike = Union[float, np.ndarray]

# Φ is clamped into the open unit interval so log Φ and log(1 - Φ) stay finite.
_P_LOW = np.finfo(float).tiny
_P_HIGH = np.nextafter(1.0, 0.0)

_UNIFORM_BITS = 53
_UNIFORM_SCALE = 2.0 ** -_UNIFORM_BITS


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ValueError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.Philox(seq))


def std_normal_cdf(x: ArrayLike) -> ArrayLike:
    p = np.clip(special.ndtr(x), _P_LOW, _P_HIGH)
    return float(p) if np.ndim(p) == 0 else p


def std_normal_pdf(x: ArrayLike) -> ArrayLike:
    x = np.asarray(x, dtype=float)
    d = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return float(d) if d.ndim == 0 else d


def std_normal_quantile(p: ArrayLike) -> ArrayLike:
    q = special.ndtri(p)
    return float(q) if np.ndim(q) == 0 else q


def log_std_normal_cdf(x: ArrayLike) -> ArrayLike:
    return special.log_ndtr(x)


def expit(x: ArrayLike) -> ArrayLike:
    v = special.expit(x)
    return float(v) if np.ndim(v) == 0 else v


def logit(p: ArrayLike) -> ArrayLike:
    v = special.logit(p)
    return float(v) if np.ndim(v) == 0 else v


def draw_uniform_open(stream: RngStream, count: int) -> np.ndarray:
    """Uniform variates on the open interval (0, 1), on a 2**-53 lattice."""
    if count < 0:
        raise ValueError("count must be >= 0")
    k = stream.generator().integers(0, 2**_UNIFORM_BITS, size=count, dtype=np.uint64)
    return (k.astype(float) + 0.5) * _UNIFORM_SCALE


def draw_std_normal(stream: RngStream, count: int) -> np.ndarray:
    if count == 0:
        return np.empty(0, dtype=float)
    return special.ndtri(draw_uniform_open(stream, count))
