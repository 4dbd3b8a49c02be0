"""Random Binning Features over token positions.

A hash draws a bin width ``b ~ Gamma(shape=2, scale=sigma)`` and an offset
``c ~ U[0, b)``, then maps a position ``u`` to ``floor((u - c) / b)``. Two
positions collide with probability ``exp(-|i - j| / sigma)``, the ALiBi
kernel. Because the bins are intervals, the bins restricted to the integer
positions ``0..n-1`` form a contiguous partition.
"""

import math
from dataclasses import dataclass

import numpy as np

from poslsh._rng import COLLISION_STREAM, MASK_STREAM, child_rng
from poslsh.errors import ParameterError


def _check_sigma(sigma):
    if not sigma > 0 or not math.isfinite(sigma):
        raise ParameterError(f"sigma must be a positive finite number, got {sigma!r}")


@dataclass(frozen=True)
class RbfHash:
    b: float
    c: float

    def __post_init__(self):
        if not self.b > 0:
            raise ParameterError(f"bin width must be positive, got {self.b!r}")
        if not 0 <= self.c < self.b:
            raise ParameterError(f"offset must lie in [0, b), got c={self.c!r}, b={self.b!r}")


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous blocks ``[boundaries[j], boundaries[j+1])`` covering ``0..n-1``."""

    n: int
    boundaries: tuple

    def __post_init__(self):
        bnd = tuple(int(x) for x in self.boundaries)
        object.__setattr__(self, "boundaries", bnd)
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if len(bnd) < 2 or bnd[0] != 0 or bnd[-1] != self.n:
            raise ParameterError(f"boundaries must run from 0 to n={self.n}, got {bnd[:3]}...{bnd[-3:]}")
        if any(b1 <= b0 for b0, b1 in zip(bnd, bnd[1:])):
            raise ParameterError("boundaries must be strictly increasing")

    @property
    def sizes(self):
        return np.diff(np.asarray(self.boundaries, dtype=np.int64))

    @property
    def num_blocks(self):
        return len(self.boundaries) - 1

    def blocks(self):
        return [range(a, b) for a, b in zip(self.boundaries, self.boundaries[1:])]

    def max_block_size(self):
        return int(self.sizes.max())

    def block_ends(self):
        """End (exclusive) of the block containing each position."""
        bnd = np.asarray(self.boundaries, dtype=np.int64)
        return np.repeat(bnd[1:], np.diff(bnd))


def sample_gamma(sigma, rng, size=None):
    """Draw from Gamma(2, sigma) as the sum of two exponentials.

    Each exponential is ``-sigma * ln(U)`` with ``U`` uniform on (0, 1]. ``rng``
    only needs a numpy-style ``random(size)`` method.
    """
    _check_sigma(sigma)
    u1 = 1.0 - np.asarray(rng.random(size))
    u2 = 1.0 - np.asarray(rng.random(size))
    z = -sigma * np.log(u1) - sigma * np.log(u2)
    # -0.0 when both uniforms are exactly 1
    z = np.abs(z)
    return float(z) if size is None else z


def _offset_below(b, u):
    c = b * u
    # b * u can round up to b when u is within an ulp of 1
    return c if c < b else math.nextafter(b, 0.0)


def sample_rbf_hash(sigma, rng):
    b = sample_gamma(sigma, rng)
    while b == 0.0:
        # probability ~2^-106; the hash needs b > 0
        b = sample_gamma(sigma, rng)
    return RbfHash(b, _offset_below(b, float(rng.random())))


def hash_position(h, u):
    return math.floor((u - h.c) / h.b)


def partition_from_hash(h, n):
    """Group positions ``0..n-1`` by bin.

    Block starts are the integer ceilings of the bin edges ``c + k*b`` that fall
    in ``(0, n-1]``; walking the edges instead of hashing each position keeps
    the blocks contiguous by construction.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if h.b < 1.0:
        # every unit interval holds an edge, so every position starts a block
        return BlockPartition(n, tuple(range(n + 1)))
    k0 = 0 if h.c > 0 else 1
    k1 = math.floor((n - 1 - h.c) / h.b) + 1
    starts = [0]
    for k in range(k0, k1 + 1):
        edge = h.c + k * h.b
        if edge <= 0 or edge > n - 1:
            continue
        s = math.ceil(edge)
        if s > starts[-1]:
            starts.append(s)
    starts.append(n)
    return BlockPartition(n, tuple(starts))


def sample_hashes(sigma, s, seed):
    """``s`` hashes, hash ``i`` drawn from its own child stream of ``seed``."""
    _check_sigma(sigma)
    if s < 1:
        raise ParameterError(f"sample count must be >= 1, got {s}")
    return [sample_rbf_hash(sigma, child_rng(seed, MASK_STREAM, i)) for i in range(s)]


def sample_partitions(sigma, n, s, seed):
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return [partition_from_hash(h, n) for h in sample_hashes(sigma, s, seed)]


def estimate_collision_probability(i, j, sigma, trials, seed):
    """Fraction of ``trials`` independent hashes under which ``i`` and ``j`` share a bin."""
    _check_sigma(sigma)
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials}")
    rng = child_rng(seed, COLLISION_STREAM)
    b = sample_gamma(sigma, rng, size=trials)
    u = rng.random(trials)
    b = np.where(b > 0, b, np.finfo(float).tiny)
    c = np.minimum(b * u, np.nextafter(b, 0.0))
    hi = np.floor((i - c) / b)
    hj = np.floor((j - c) / b)
    return float(np.count_nonzero(hi == hj)) / trials
