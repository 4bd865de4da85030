"""Random channel matrices for the Wyner and exponentially decaying models.

All randomness flows through :class:`RandomStream`, a ``(seed, stream_id)``
pair expanded into independent substreams with :class:`numpy.random.SeedSequence`
spawn keys. A trial or a transmitter gets its own substream, so draws do not
depend on the order in which trials are executed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "MODELS",
    "WynerParams",
    "ExpDecayParams",
    "RandomStream",
    "as_generator",
    "crandn",
    "gen_wyner",
    "gen_expdecay",
    "gen_channel",
    "support_mask",
    "entry_std",
]

MODELS = ("wyner", "expdecay")

_MASK64 = (1 << 64) - 1


def _check_params(K: int, mu: float) -> None:
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"mu must lie in (0,1], got {mu!r}")


@dataclass(frozen=True)
class WynerParams:
    K: int
    mu: float

    def __post_init__(self):
        _check_params(self.K, self.mu)


@dataclass(frozen=True)
class ExpDecayParams:
    K: int
    mu: float

    def __post_init__(self):
        _check_params(self.K, self.mu)


@dataclass(frozen=True)
class RandomStream:
    """Counter-style handle on a reproducible random stream.

    Two streams with the same ``seed``, ``stream_id`` and ``path`` produce
    the same draws bit for bit. :meth:`substream` derives child streams
    keyed by integers, e.g. ``RandomStream(seed, trial).substream(1, tx)``.
    """

    seed: int
    stream_id: int = 0
    path: tuple = ()

    def __post_init__(self):
        for v in (self.seed, self.stream_id, *self.path):
            if int(v) != v or v < 0:
                raise ValueError("seed and stream keys must be nonnegative integers")

    def substream(self, *keys: int) -> "RandomStream":
        return RandomStream(self.seed, self.stream_id, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed) & _MASK64,
            spawn_key=(int(self.stream_id) & _MASK64, *self.path))
        return np.random.Generator(np.random.PCG64(ss))


RandomSource = Union[RandomStream, np.random.Generator]


def as_generator(rng: RandomSource) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RandomStream or numpy Generator, got {type(rng).__name__}")


def crandn(gen: np.random.Generator, size) -> np.ndarray:
    """i.i.d. CN(0, 1) samples: real and imaginary parts each of variance 1/2."""
    return (gen.standard_normal(size) + 1j * gen.standard_normal(size)) / np.sqrt(2.0)


def gen_wyner(p: WynerParams, rng: RandomSource) -> np.ndarray:
    """Draw a tridiagonal Wyner channel.

    The diagonal holds ``d_i``, the super-diagonal ``mu a_i`` and the
    sub-diagonal ``mu b_i`` with ``a, b, d`` i.i.d. CN(0, 1).
    """
    gen = as_generator(rng)
    K = p.K
    d = crandn(gen, K)
    a = crandn(gen, K - 1)
    b = crandn(gen, K - 1)
    H = np.diag(d)
    if K > 1:
        H += np.diag(p.mu * a, 1) + np.diag(p.mu * b, -1)
    return H


def gen_expdecay(p: ExpDecayParams, rng: RandomSource) -> np.ndarray:
    """Draw ``H_ij = mu**|i-j| G_ij`` with ``G`` i.i.d. CN(0, 1)."""
    gen = as_generator(rng)
    G = crandn(gen, (p.K, p.K))
    return entry_std("expdecay", p.K, p.mu) * G


def gen_channel(model: str, K: int, mu: float, rng: RandomSource) -> np.ndarray:
    if model == "wyner":
        return gen_wyner(WynerParams(K, mu), rng)
    if model == "expdecay":
        return gen_expdecay(ExpDecayParams(K, mu), rng)
    raise ValueError(f"unknown channel model {model!r}")


def support_mask(model: str, K: int) -> np.ndarray:
    """Boolean ``K x K`` mask of the structurally nonzero channel entries."""
    if model == "wyner":
        dist = np.abs(np.subtract.outer(np.arange(K), np.arange(K)))
        return dist <= 1
    if model == "expdecay":
        return np.ones((K, K), dtype=bool)
    raise ValueError(f"unknown channel model {model!r}")


def entry_std(model: str, K: int, mu: float) -> np.ndarray:
    """Standard deviation of every channel entry (0 off the support)."""
    dist = np.abs(np.subtract.outer(np.arange(K), np.arange(K)))
    if model == "wyner":
        return np.where(dist == 0, 1.0, np.where(dist == 1, mu, 0.0))
    if model == "expdecay":
        return np.power(float(mu), dist)
    raise ValueError(f"unknown channel model {model!r}")
