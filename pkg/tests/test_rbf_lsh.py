import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from poslsh.errors import ParameterError
from poslsh.rbf_lsh import (
    BlockPartition,
    RbfHash,
    estimate_collision_probability,
    hash_position,
    partition_from_hash,
    sample_gamma,
    sample_hashes,
    sample_partitions,
    sample_rbf_hash,
)


class _ConstantUniforms:
    """Stand-in rng whose uniforms are always ``value`` (so U = 1 - value)."""

    def __init__(self, value):
        self.value = value

    def random(self, size=None):
        return self.value if size is None else np.full(size, self.value)


def _partition_by_hashing(h, n):
    # independent oracle: hash each position and split where the label changes
    labels = [hash_position(h, u) for u in range(n)]
    bnd = [0] + [u for u in range(1, n) if labels[u] != labels[u - 1]] + [n]
    return tuple(bnd)


# -- gamma sampler -------------------------------------------------------------

def test_gamma_mean_sigma8():
    z = sample_gamma(8.0, np.random.default_rng(123), size=1_000_000)
    assert abs(z.mean() - 16.0) <= 0.05


def test_gamma_second_moment_sigma1():
    z = sample_gamma(1.0, np.random.default_rng(7), size=1_000_000)
    assert abs(np.mean(z**2) - 6.0) <= 0.05


def test_gamma_degenerate_corner_is_zero():
    assert sample_gamma(8.0, _ConstantUniforms(0.0)) == 0.0


@pytest.mark.parametrize("sigma", [0.5, 3.0, 40.0])
def test_gamma_mean_and_variance_within_three_se(sigma):
    m = 200_000
    z = sample_gamma(sigma, np.random.default_rng(11), size=m)
    # Gamma(2, sigma): mean 2s, var 2s^2, central fourth moment 3k(k+2) s^4 = 24 s^4
    assert abs(z.mean() - 2 * sigma) <= 3 * math.sqrt(2 * sigma**2 / m)
    se_var = math.sqrt((24 - 4) * sigma**4 / m)
    assert abs(z.var() - 2 * sigma**2) <= 3 * se_var


@pytest.mark.parametrize("sigma", [0.0, -1.0])
def test_gamma_rejects_bad_sigma(sigma):
    with pytest.raises(ParameterError):
        sample_gamma(sigma, np.random.default_rng(0))


# -- hashes --------------------------------------------------------------------

def test_rbf_hash_width_matches_gamma_density():
    rng = np.random.default_rng(2024)
    b = np.array([sample_rbf_hash(4.0, rng).b for _ in range(100_000)])
    # density b e^{-b/sigma} / sigma^2 is scipy's gamma(a=2, scale=sigma)
    assert stats.kstest(b, "gamma", args=(2, 0, 4.0)).pvalue > 0.01


def test_rbf_hash_offset_in_range():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        h = sample_rbf_hash(2.0, rng)
        assert 0 <= h.c < h.b


def test_rbf_hash_seed_determinism():
    a = sample_rbf_hash(8.0, np.random.default_rng(42))
    b = sample_rbf_hash(8.0, np.random.default_rng(42))
    assert a == b


def test_rbf_hash_invariants():
    with pytest.raises(ParameterError):
        RbfHash(0.0, 0.0)
    with pytest.raises(ParameterError):
        RbfHash(2.0, 2.0)
    with pytest.raises(ParameterError):
        RbfHash(2.0, -0.1)


@pytest.mark.parametrize("u, expected", [(1, 0), (5, 1), (0, -1), (4, 0), (4.2, 1)])
def test_hash_position_examples(u, expected):
    assert hash_position(RbfHash(3.2, 1.0), u) == expected


def test_hash_position_at_offset_is_zero():
    h = RbfHash(2.5, 0.7)
    assert hash_position(h, h.c) == 0


# -- partitions ----------------------------------------------------------------

def test_partition_example_matches_hash_definition():
    # h(u) = floor((u - 1)/3.2): u=0 -> -1, u=1..4 -> 0, u=5 -> 1
    p = partition_from_hash(RbfHash(3.2, 1.0), 6)
    assert p.boundaries == (0, 1, 5, 6)
    assert p.boundaries == _partition_by_hashing(RbfHash(3.2, 1.0), 6)


@pytest.mark.parametrize("c", [0.0, 0.2, 0.49])
def test_partition_narrow_bins_are_singletons(c):
    assert partition_from_hash(RbfHash(0.5, c), 5).boundaries == (0, 1, 2, 3, 4, 5)


def test_partition_single_block_when_bin_covers_range():
    assert partition_from_hash(RbfHash(50.0, 0.0), 20).boundaries == (0, 20)
    assert partition_from_hash(RbfHash(50.0, 30.0), 20).boundaries == (0, 20)


def test_partition_rejects_empty_context():
    with pytest.raises(ParameterError):
        partition_from_hash(RbfHash(2.0, 1.0), 0)


def test_partition_integer_width_gives_exact_blocks():
    p = partition_from_hash(RbfHash(4.0, 1.5), 20)
    assert p.boundaries == (0, 2, 6, 10, 14, 18, 20)


@settings(max_examples=300, deadline=None)
@given(b=st.floats(0.05, 80.0), frac=st.just(0.0) | st.floats(1e-9, 1.0, exclude_max=True), n=st.integers(1, 300))
def test_partition_structure(b, frac, n):
    # offsets far below ulp(b) let c + b round onto an integer, shrinking a bin by one
    h = RbfHash(b, min(b * frac, math.nextafter(b, 0)))
    p = partition_from_hash(h, n)
    sizes = p.sizes
    assert sizes.sum() == n and (sizes >= 1).all()
    interior = sizes[1:-1]
    if b < 1:
        assert (sizes == 1).all()
    else:
        assert set(interior.tolist()) <= {math.floor(b), math.ceil(b)}
    assert sizes.max() <= math.ceil(b)


def test_partition_agrees_with_per_position_hashing():
    rng = np.random.default_rng(99)
    for sigma in (0.3, 2.0, 8.0, 64.0):
        for _ in range(200):
            h = sample_rbf_hash(sigma, rng)
            n = int(rng.integers(1, 200))
            assert partition_from_hash(h, n).boundaries == _partition_by_hashing(h, n)


def test_block_partition_validation():
    with pytest.raises(ParameterError):
        BlockPartition(4, (0, 2, 2, 4))
    with pytest.raises(ParameterError):
        BlockPartition(4, (0, 2, 3))
    with pytest.raises(ParameterError):
        BlockPartition(4, (1, 4))
    p = BlockPartition(6, (0, 4, 6))
    assert p.block_ends().tolist() == [4, 4, 4, 4, 6, 6]
    assert [list(r) for r in p.blocks()] == [[0, 1, 2, 3], [4, 5]]


# -- sample sets ---------------------------------------------------------------

def test_sample_partitions_length_and_determinism():
    assert len(sample_partitions(8.0, 32, 1, seed=0)) == 1
    assert sample_partitions(8.0, 64, 20, seed=3) == sample_partitions(8.0, 64, 20, seed=3)
    assert sample_partitions(8.0, 64, 20, seed=3) != sample_partitions(8.0, 64, 20, seed=4)


def test_sample_streams_are_per_index():
    # sample i does not depend on how many samples are drawn
    short = sample_hashes(8.0, 5, seed=17)
    long = sample_hashes(8.0, 50, seed=17)
    assert long[:5] == short


def test_adjacent_collision_frequency():
    parts = sample_partitions(8.0, 256, 10_000, seed=0)
    together = np.mean([p.block_ends()[0] > 1 for p in parts])
    assert abs(together - math.exp(-1 / 8)) <= 0.01


# -- collision probability -----------------------------------------------------

def test_collision_same_position_is_certain():
    assert estimate_collision_probability(7, 7, 3.0, 1000, seed=0) == 1.0


def test_collision_at_distance_sigma():
    trials = 100_000
    p = math.exp(-1)
    est = estimate_collision_probability(0, 8, 8.0, trials, seed=1)
    assert abs(est - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_collision_far_apart_is_rare():
    assert estimate_collision_probability(0, 160, 8.0, 20_000, seed=2) <= 0.01


def test_collision_grid_mostly_within_band():
    trials = 20_000
    cells = ok = 0
    for sigma in (1.0, 3.0, 10.0):
        for dist in (1, 2, 5, 10, 20):
            p = math.exp(-dist / sigma)
            est = estimate_collision_probability(3, 3 + dist, sigma, trials, seed=dist)
            cells += 1
            ok += abs(est - p) <= 3 * math.sqrt(p * (1 - p) / trials) + 1e-12
    assert ok >= math.ceil(0.99 * cells)
