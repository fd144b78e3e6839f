"""Seeded random streams and the distributions the benchmarks draw from.

One root seed feeds every component through named sub-streams:

    bundle = SeedBundle(7)
    rng = bundle.rng("dataset.noise")     # same name -> same stream, every time

Sub-stream derivation: the purpose name is hashed with SHA-256 and the first
four 32-bit words become the ``spawn_key`` of a ``numpy.random.SeedSequence``
rooted at the root seed. Names are independent of call order, so any component
can be re-run alone and still see its own stream.

All samplers accept an ``int`` seed, a ``SeedBundle`` (its ``default`` stream)
or a ready ``numpy.random.Generator``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import ParameterError

SeedLike = Union[int, "SeedBundle", np.random.Generator]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class GammaParams:
    """Three-parameter Gamma: ``location + Gamma(shape, scale)``."""
    shape: float
    location: float
    scale: float

    def validate(self) -> "GammaParams":
        if not (self.shape > 0 and self.scale > 0):
            raise ParameterError(
                f"Gamma needs shape > 0 and scale > 0, got shape={self.shape}, scale={self.scale}"
            )
        return self

    @property
    def mean(self) -> float:
        return self.shape * self.scale + self.location

    @property
    def variance(self) -> float:
        return self.shape * self.scale ** 2


def _name_words(name: str) -> Tuple[int, ...]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


@dataclass(frozen=True)
class SeedBundle:
    """Root seed plus a path of purpose names; hands out independent generators."""
    root_seed: int
    path: Tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.root_seed, (int, np.integer)) or not 0 <= int(self.root_seed) <= _MASK64:
            raise ParameterError(f"Seed must be a 64-bit unsigned integer, got {self.root_seed!r}")

    def spawn_key(self, name: str = "default") -> Tuple[int, ...]:
        words: Tuple[int, ...] = ()
        for part in self.path + (name,):
            words += _name_words(part)
        return words

    def derive(self, name: str = "default") -> int:
        """Deterministic 64-bit integer seed for ``name``."""
        seq = np.random.SeedSequence(int(self.root_seed), spawn_key=self.spawn_key(name))
        return int(seq.generate_state(2, dtype=np.uint32).view(np.uint64)[0])

    def rng(self, name: str = "default") -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.root_seed), spawn_key=self.spawn_key(name))
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, name: str) -> "SeedBundle":
        return SeedBundle(self.root_seed, self.path + (name,))


def as_generator(seed: SeedLike, name: str = "default") -> np.random.Generator:
    """Normalize the accepted seed forms to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedBundle):
        return seed.rng(name)
    if isinstance(seed, (int, np.integer)):
        return SeedBundle(int(seed)).rng(name)
    raise ParameterError(f"Unsupported seed type: {type(seed).__name__}")


def _check_count(n: int) -> int:
    if int(n) < 1:
        raise ParameterError(f"Sample count must be >= 1, got {n}")
    return int(n)


def sample_gamma(params: GammaParams, n: int, seed: SeedLike) -> np.ndarray:
    """``n`` i.i.d. draws of ``location + Gamma(shape, scale)``.

    numpy's sampler (Marsaglia-Tsang with the shape<1 boosting identity) is exact
    for every shape > 0, which covers the diameter shape of 0.68.
    """
    params.validate()
    rng = as_generator(seed)
    return rng.gamma(params.shape, params.scale, size=_check_count(n)) + params.location


def sample_gaussian(mean: float, stddev: float, n: int, seed: SeedLike) -> np.ndarray:
    if stddev < 0:
        raise ParameterError(f"Gaussian stddev must be >= 0, got {stddev}")
    rng = as_generator(seed)
    return mean + stddev * rng.standard_normal(_check_count(n))


def sample_poisson(lam: float, n: int, seed: SeedLike) -> np.ndarray:
    """Exact Poisson draws (numpy uses transformed rejection for large lambda)."""
    if lam < 0:
        raise ParameterError(f"Poisson lambda must be >= 0, got {lam}")
    rng = as_generator(seed)
    return rng.poisson(lam, size=_check_count(n)).astype(np.int64)


__all__ = [
    'GammaParams',
    'SeedBundle',
    'SeedLike',
    'as_generator',
    'sample_gamma',
    'sample_gaussian',
    'sample_poisson',
]
