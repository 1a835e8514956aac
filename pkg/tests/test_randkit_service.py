import math
from collections import Counter

import numpy as np
import pytest
from scipy import special, stats

from core.exceptions import ParameterException
from models.randkit_model import ParetoParams, Partition, RngStream, StableParams
from services.oracle_service import iter_partitions
from services.randkit_service import (
    PartitionCounts,
    divisor_sums,
    multiplicity_partition,
    partition_counts,
    power_law_variates,
    uniform_below,
)


# ── Streams ───────────────────────────────────────────────────────────────

def test_equal_streams_give_equal_sequences():
    a = RngStream(seed=7, stream_id=3).generator().random(5)
    b = RngStream(seed=7, stream_id=3).generator().random(5)
    np.testing.assert_array_equal(a, b)


def test_derived_streams_differ_from_parent_and_siblings():
    root = RngStream(seed=7)
    parent = root.generator().random(4)
    first = root.derive(0, 1).generator().random(4)
    second = root.derive(0, 2).generator().random(4)
    assert not np.array_equal(parent, first)
    assert not np.array_equal(first, second)
    assert root.derive(0, 1) == root.derive(0, 1)


def test_sibling_streams_are_uncorrelated():
    root = RngStream(seed=11)
    draws = [root.generator().random(100_000)]
    draws += [root.derive(tag, index).generator().random(100_000) for tag, index in ((0, 0), (0, 1), (1, 0))]
    rho = np.corrcoef(draws)
    off_diagonal = rho[~np.eye(len(draws), dtype=bool)]
    assert np.all(np.abs(off_diagonal) < 0.01)


def test_seed_accepts_full_unsigned_range():
    stream = RngStream(seed=2 ** 64 - 1)
    assert stream.generator().random() < 1.0
    with pytest.raises(ValueError):
        RngStream(seed=2 ** 64)


# ── Continuous laws ───────────────────────────────────────────────────────

def test_pareto_support_and_law(randkit):
    params = ParetoParams(xmin=2.0, mu=1.5)
    x = randkit.sample_pareto(params, 50_000, RngStream(seed=1))
    assert x.min() >= 2.0
    ks = stats.kstest(x, stats.pareto(b=1.5, scale=2.0).cdf).statistic
    assert ks < 0.01


def test_pareto_is_deterministic(randkit):
    params = ParetoParams(mu=1.2)
    a = randkit.sample_pareto(params, 100, RngStream(seed=9))
    b = randkit.sample_pareto(params, 100, RngStream(seed=9))
    np.testing.assert_array_equal(a, b)


def test_sample_count_must_be_positive(randkit):
    with pytest.raises(ParameterException):
        randkit.sample_pareto(ParetoParams(mu=1.5), 0, RngStream(seed=1))


def test_lognormal_rejects_zero_spread(randkit):
    with pytest.raises(ParameterException):
        randkit.sample_lognormal(0.0, 0.0, 10, RngStream(seed=1))


def test_stable_alpha_two_is_gaussian_with_variance_two_scale_squared(randkit):
    x = randkit.sample_stable(StableParams(alpha=2.0, beta=0.7, scale=1.5), 200_000, RngStream(seed=2))
    assert abs(np.std(x) - 1.5 * math.sqrt(2.0)) < 0.02
    assert stats.kstest(x, stats.norm(scale=1.5 * math.sqrt(2.0)).cdf).statistic < 0.01


def test_stable_alpha_one_symmetric_is_cauchy(randkit):
    x = randkit.sample_stable(StableParams(alpha=1.0, beta=0.0, scale=0.5, location=1.0), 100_000, RngStream(seed=3))
    assert stats.kstest(x, stats.cauchy(loc=1.0, scale=0.5).cdf).statistic < 0.01


def test_stable_matches_scipy_s1_parameterization(randkit):
    params = StableParams(alpha=1.5, beta=0.5, scale=1.0)
    x = randkit.sample_stable(params, 100_000, RngStream(seed=4))
    reference = stats.levy_stable(1.5, 0.5)
    for point in (-2.0, -0.5, 0.0, 0.5, 2.0):
        empirical = float(np.mean(x <= point))
        assert abs(empirical - float(reference.cdf(point))) < 0.01


def test_stable_totally_skewed_has_thin_left_tail(randkit):
    x = randkit.sample_stable(StableParams(alpha=1.5, beta=1.0), 100_000, RngStream(seed=5))
    assert np.mean(x < -5) < np.mean(x > 5) / 10


# ── Discrete laws ─────────────────────────────────────────────────────────

def test_discrete_power_law_head_probability(randkit):
    k = randkit.sample_discrete_power_law(1.2, 1, 100_000, RngStream(seed=6))
    assert k.min() >= 1
    assert k.dtype == np.int64
    expected = 1.0 / special.zeta(2.2)
    assert abs(np.mean(k == 1) - expected) < 0.01


def test_discrete_power_law_tail_beyond_table(settings_env, randkit):
    settings_env(GRANULAR_GROWTH_KMAX=100)
    k = randkit.sample_discrete_power_law(1.2, 1, 100_000, RngStream(seed=7))
    expected = special.zeta(2.2, 101) / special.zeta(2.2)
    assert abs(np.mean(k > 100) - expected) < 0.003
    assert k.max() > 1000


def test_discrete_power_law_tail_index(randkit):
    k = randkit.sample_discrete_power_law(1.2, 1, 1_000_000, RngStream(seed=8))
    ratio = np.mean(k >= 100) / np.mean(k >= 10)
    assert ratio == pytest.approx(special.zeta(2.2, 100) / special.zeta(2.2, 10), rel=0.1)


def test_discrete_power_law_rejects_kmin_above_table(settings_env, randkit):
    settings_env(GRANULAR_GROWTH_KMAX=100)
    with pytest.raises(ParameterException):
        randkit.sample_discrete_power_law(1.2, 500, 10, RngStream(seed=1))


def test_power_law_tail_continuation_keeps_the_index():
    gen = RngStream(seed=10).generator()
    k = power_law_variates(gen, 0.5, 1, 200_000, 100)
    tail = k[k > 100]
    assert tail.min() >= 101
    assert np.mean(tail > 400) == pytest.approx((100.5 / 400.5) ** 0.5, abs=0.03)


def test_geometric_mean_and_support(randkit):
    x = randkit.sample_geometric(20.0, 100_000, RngStream(seed=11))
    assert x.min() >= 0
    assert x.mean() == pytest.approx(20.0, rel=0.02)


def test_uniform_below_large_bound_is_in_range():
    gen = RngStream(seed=12).generator()
    bound = 10 ** 40 + 7
    draws = [uniform_below(gen, bound) for _ in range(200)]
    assert all(0 <= d < bound for d in draws)
    assert max(draws) > bound // 2


# ── Partitions ────────────────────────────────────────────────────────────

def test_partition_counts_known_values():
    counts = PartitionCounts()
    assert [counts.total(n) for n in range(1, 11)] == [1, 2, 3, 5, 7, 11, 15, 22, 30, 42]
    assert counts.count(100, 100) == 190_569_292
    assert counts.count(10, 3) == 14
    assert counts.total(1000) == 24061467864032622473692149727991


def test_table_and_pentagonal_counts_agree():
    counts = PartitionCounts()
    for n in (1, 17, 99, 250):
        assert counts.count(n, n) == counts.total(n)


def test_divisor_sums():
    sigma = divisor_sums(12)
    assert list(sigma[1:]) == [1, 3, 4, 7, 6, 12, 8, 15, 13, 18, 12, 28]


def _chi_square_p(draws, total):
    index = {parts: i for i, parts in enumerate(iter_partitions(total))}
    observed = np.zeros(len(index))
    for parts in draws:
        observed[index[tuple(parts)]] += 1
    return stats.chisquare(observed).pvalue


def test_table_sampler_is_uniform(randkit):
    partitions = randkit.sample_uniform_partitions(7, 15 * 400, RngStream(seed=13))
    assert all(isinstance(p, Partition) and p.total == 7 for p in partitions)
    assert _chi_square_p([p.parts for p in partitions], 7) > 1e-4


@pytest.mark.slow
def test_partitions_of_ten_are_uniform(randkit):
    partitions = randkit.sample_uniform_partitions(10, 42 * 1000, RngStream(seed=16))
    assert _chi_square_p([p.parts for p in partitions], 10) > 1e-3


def test_multiplicity_sampler_is_uniform():
    gen = RngStream(seed=14).generator()
    sigma = divisor_sums(10)
    draws = [multiplicity_partition(gen, 7, partition_counts, sigma) for _ in range(15 * 400)]
    assert _chi_square_p(draws, 7) > 1e-4


def test_large_partition_uses_multiplicity_tier(randkit):
    partition = randkit.sample_uniform_partition(5000, RngStream(seed=15))
    assert partition.total == 5000
    assert sum(partition.parts) == 5000
    assert list(partition.parts) == sorted(partition.parts, reverse=True)
    # the number of parts concentrates near sqrt(6n)/pi * log(sqrt(6n)/pi), about 220 here
    assert 100 < partition.unit_count < 500


def test_partition_sampling_is_deterministic(randkit):
    a = randkit.sample_uniform_partition(300, RngStream(seed=16))
    b = randkit.sample_uniform_partition(300, RngStream(seed=16))
    assert a == b


@pytest.mark.parametrize("total", [0, -3, 10_001])
def test_partition_total_bounds(randkit, total):
    with pytest.raises(ParameterException):
        randkit.sample_uniform_partition(total, RngStream(seed=1))


def test_small_partition_distribution_of_part_counts(randkit):
    partitions = randkit.sample_uniform_partitions(4, 5000, RngStream(seed=17))
    counts = Counter(p.unit_count for p in partitions)
    # partitions of 4 by number of parts: 1, 2, 1, 1 (out of 5)
    assert counts[2] / 5000 == pytest.approx(0.4, abs=0.03)
