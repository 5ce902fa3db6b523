"""Reproducible random streams and the innovation distributions used in simulation.

Every stream is keyed by a ``(master_seed, stream_id)`` pair through
:class:`numpy.random.SeedSequence` and driven by the counter-based Philox
generator, so a stream never depends on which thread or process asks for it.

Bootstrap multipliers use a second, random-access layout: replicate ``r``
owns a fixed block of Philox counters, which lets any range of replicates be
regenerated independently (see :func:`multiplier_block`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "SeedSpec",
    "child_seed",
    "derive_stream",
    "multiplier_block",
    "sample_std_normal",
    "sample_centered_gamma",
    "sample_scaled_t",
    "sample_centered_chisq",
    "sample_uniform",
    "INNOVATIONS",
]

_U64 = (1 << 64) - 1

# spawn-key domains that keep bootstrap and power multipliers disjoint
BOOT_DOMAIN = 0
STAR_DOMAIN = 1


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one random stream.

    Parameters
    ----------
    master_seed : int
        64-bit unsigned master seed.
    stream_id : int, default=0
        64-bit unsigned stream (task) index.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {type(v).__name__}")
            if not 0 <= int(v) <= _U64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v}")
            object.__setattr__(self, name, int(v))

    @classmethod
    def coerce(cls, value) -> "SeedSpec":
        """Build a SeedSpec from an int, a mapping or an existing SeedSpec."""
        if isinstance(value, SeedSpec):
            return value
        if isinstance(value, dict):
            return cls(int(value["master_seed"]), int(value.get("stream_id", 0)))
        return cls(int(value))

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "stream_id": self.stream_id}


def child_seed(master_seed: int, *path: int) -> int:
    """Derive a 64-bit seed for the node ``path`` below ``master_seed``.

    Used to build seed trees such as master -> cell -> run.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in path))
    return int(ss.generate_state(1, np.uint64)[0])


def _philox_key(master_seed: int, stream_id: int) -> np.ndarray:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id),))
    return ss.generate_state(2, np.uint64)


def derive_stream(seed: SeedSpec | int) -> np.random.Generator:
    """Return the generator for ``seed``; output depends only on the seed pair."""
    seed = SeedSpec.coerce(seed)
    return np.random.Generator(np.random.Philox(key=_philox_key(seed.master_seed, seed.stream_id)))


def multiplier_block(seed: int, start: int, stop: int, width: int, domain: int = BOOT_DOMAIN) -> np.ndarray:
    """Standard-normal multipliers for replicates ``start <= r < stop``.

    Row ``r - start`` holds the ``width`` multipliers of replicate ``r``.
    Replicate ``r`` reads its own fixed range of Philox counters, so a row is
    bitwise identical however the replicate range is split into chunks.
    Normals come from the exact inverse CDF applied to 53-bit uniforms.
    """
    if stop < start:
        raise ValueError("stop must be >= start")
    words = -(-width // 4) * 4  # Philox4x64 emits 4 words per counter step
    bitgen = np.random.Philox(key=_philox_key(seed, domain), counter=[start * (words // 4), 0, 0, 0])
    raw = bitgen.random_raw((stop - start) * words).reshape(stop - start, words)[:, :width]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def _check_count(count):
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")


def sample_std_normal(stream: np.random.Generator, count) -> np.ndarray:
    _check_count(np.prod(count))
    return stream.standard_normal(count)


def sample_centered_gamma(stream: np.random.Generator, count) -> np.ndarray:
    """Gamma(shape=16, scale=1/4) minus its mean 4: mean 0, variance 1.

    numpy draws gamma variates with the Marsaglia-Tsang squeeze method, which
    is exact.
    """
    _check_count(np.prod(count))
    return stream.gamma(16.0, 0.25, count) - 4.0


def sample_scaled_t(stream: np.random.Generator, count) -> np.ndarray:
    """Student t with 5 degrees of freedom rescaled to unit variance."""
    _check_count(np.prod(count))
    return stream.standard_t(5, count) * np.sqrt(3.0 / 5.0)


def sample_centered_chisq(stream: np.random.Generator, count) -> np.ndarray:
    """(chi2(4) - 4) / sqrt(8): mean 0, variance 1."""
    _check_count(np.prod(count))
    return (stream.chisquare(4, count) - 4.0) / np.sqrt(8.0)


def sample_uniform(stream: np.random.Generator, count, lo: float, hi: float) -> np.ndarray:
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    _check_count(np.prod(count))
    return stream.uniform(lo, hi, count)


INNOVATIONS = {
    "normal": sample_std_normal,
    "gamma": sample_centered_gamma,
    "t5": sample_scaled_t,
    "chisq4": sample_centered_chisq,
}
