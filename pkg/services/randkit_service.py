"""
Random-variate service for the growth models.

Every sampler is a pure function of (parameters, n, RngStream): the stream is
turned into a fresh generator on each call, so equal arguments give equal
sequences.

Stable variates use the continuous S1 parameterization, the default of
``scipy.stats.levy_stable``. For alpha != 1 the characteristic function is
exp(-|scale*t|^alpha * (1 - i*beta*sign(t)*tan(pi*alpha/2)) + i*location*t).
alpha = 2 is the Gaussian with variance 2*scale^2 whatever beta is, and
alpha = 1 with beta = 0 is the Cauchy law with the given scale. The oracle
uses the same convention.
"""

import math
import threading
from functools import lru_cache
from typing import List

import numpy as np
from scipy import special

from core.exceptions import ParameterException
from models.randkit_model import ParetoParams, Partition, RngStream, StableParams
from services.base import BaseService

# Largest integer a discrete power-law tail draw is clipped to before the int64 cast.
_TAIL_CAP = float(2 ** 62)


# ── Generator-level samplers (shared with the simulation blocks) ──────────

def pareto_from_uniform(u: np.ndarray, params: ParetoParams) -> np.ndarray:
    """Inverse CCDF of the Pareto law for uniform deviates in (0, 1]."""
    return params.xmin * np.power(u, -1.0 / params.mu)


def pareto_variates(gen: np.random.Generator, params: ParetoParams, n: int) -> np.ndarray:
    u = 1.0 - gen.random(n)
    return pareto_from_uniform(u, params)


def lognormal_variates(gen: np.random.Generator, log_mean: float, log_sd: float, n: int) -> np.ndarray:
    return np.exp(gen.normal(log_mean, log_sd, n))


def stable_variates(gen: np.random.Generator, params: StableParams, n: int) -> np.ndarray:
    """Chambers-Mallows-Stuck construction in the S1 parameterization."""
    alpha, beta, scale, location = params.alpha, params.beta, params.scale, params.location

    if alpha == 2.0:
        return location + scale * math.sqrt(2.0) * gen.standard_normal(n)

    v = gen.uniform(-math.pi / 2, math.pi / 2, n)
    w = gen.standard_exponential(n)

    if alpha == 1.0:
        if beta == 0.0:
            return location + scale * np.tan(v)
        half_pi_bv = math.pi / 2 + beta * v
        x = (2 / math.pi) * (
            half_pi_bv * np.tan(v)
            - beta * np.log((math.pi / 2) * w * np.cos(v) / half_pi_bv)
        )
        return location + scale * x + (2 / math.pi) * beta * scale * math.log(scale)

    t = beta * math.tan(math.pi * alpha / 2)
    b = math.atan(t) / alpha
    s = (1 + t * t) ** (1 / (2 * alpha))
    x = (
        s
        * np.sin(alpha * (v + b))
        / np.power(np.cos(v), 1 / alpha)
        * np.power(np.cos(v - alpha * (v + b)) / w, (1 - alpha) / alpha)
    )
    return location + scale * x


@lru_cache(maxsize=8)
def power_law_cdf(alpha: float, kmin: int, kmax: int) -> np.ndarray:
    """
    CDF of P(K = k) = k^(-1-alpha) / zeta(1+alpha, kmin) on kmin..kmax.

    The last entry is below 1; the remainder is the mass beyond kmax.
    """
    table = np.arange(kmin, kmax + 1, dtype=np.float64)
    np.power(table, -(1.0 + alpha), out=table)
    np.cumsum(table, out=table)
    table /= special.zeta(1.0 + alpha, kmin)
    table.setflags(write=False)
    return table


def power_law_variates(gen: np.random.Generator, alpha: float, kmin: int, n: int, kmax: int) -> np.ndarray:
    """Exact inverse CDF up to kmax, continuous tail continuation beyond it."""
    cdf = power_law_cdf(float(alpha), int(kmin), int(kmax))
    u = gen.random(n)
    idx = np.searchsorted(cdf, u, side="right")
    draws = (kmin + idx).astype(np.int64)

    tail = idx >= cdf.size
    if tail.any():
        head_mass = float(cdf[-1])
        v = np.clip((1.0 - u[tail]) / (1.0 - head_mass), np.finfo(float).tiny, 1.0)
        k = np.floor((kmax + 0.5) * np.power(v, -1.0 / alpha) + 0.5)
        draws[tail] = np.clip(k, kmax + 1, _TAIL_CAP).astype(np.int64)
    return draws


def geometric_variates(gen: np.random.Generator, mean: float, n: int) -> np.ndarray:
    """Bose-Einstein occupancy: P(k) = (1 - q) q^k with q = mean / (1 + mean)."""
    p = 1.0 / (1.0 + mean)
    return gen.geometric(p, n).astype(np.int64) - 1


def uniform_below(gen: np.random.Generator, bound: int) -> int:
    """Exact uniform integer in [0, bound) for arbitrarily large ``bound``."""
    if bound < 2 ** 63:
        return int(gen.integers(bound))
    nbits = bound.bit_length()
    nbytes = (nbits + 7) // 8
    shift = 8 * nbytes - nbits
    while True:
        r = int.from_bytes(gen.bytes(nbytes), "little") >> shift
        if r < bound:
            return r


# ── Partition counts ───────────────────────────────────────────────────────

class PartitionCounts:
    """
    Exact partition counts, grown on demand and shared between threads.

    ``count(n, k)`` is p(n, k), the number of partitions of n with largest part
    at most k, kept as a triangular table of Python integers. ``total(n)`` is
    p(n) from Euler's pentagonal recurrence, which needs only one row and
    serves totals beyond the triangular table.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._rows: List[List[int]] = [[1]]
        self._totals: List[int] = [1]

    def ensure_table(self, n: int) -> None:
        if n < len(self._rows):
            return
        with self._lock:
            rows = self._rows
            for m in range(len(rows), n + 1):
                row = [0] * (m + 1)
                for k in range(1, m + 1):
                    rest = m - k
                    row[k] = row[k - 1] + rows[rest][min(k, rest)]
                rows.append(row)

    def ensure_totals(self, n: int) -> None:
        if n < len(self._totals):
            return
        with self._lock:
            totals = self._totals
            for m in range(len(totals), n + 1):
                acc = 0
                j = 1
                while True:
                    first = j * (3 * j - 1) // 2
                    if first > m:
                        break
                    sign = 1 if j % 2 else -1
                    acc += sign * totals[m - first]
                    second = j * (3 * j + 1) // 2
                    if second <= m:
                        acc += sign * totals[m - second]
                    j += 1
                totals.append(acc)

    def count(self, n: int, k: int) -> int:
        """p(n, k) from the triangular table (built up to n if needed)."""
        self.ensure_table(n)
        return self._rows[n][min(k, n)]

    def total(self, n: int) -> int:
        """p(n) from the pentagonal recurrence."""
        self.ensure_totals(n)
        return self._totals[n]


partition_counts = PartitionCounts()


@lru_cache(maxsize=4)
def divisor_sums(limit: int) -> np.ndarray:
    """sigma(s) = sum of the divisors of s, for s = 0..limit."""
    sigma = np.zeros(limit + 1, dtype=np.int64)
    for d in range(1, limit + 1):
        sigma[d::d] += d
    sigma.setflags(write=False)
    return sigma


def table_partition(gen: np.random.Generator, total: int, counts: PartitionCounts) -> List[int]:
    """
    Uniform partition by descending through the p(n, k) table.

    One uniform rank r < p(total) is drawn; at state (n, k) the partitions
    with largest part exactly k number p(n - k, k) and are taken first.
    """
    counts.ensure_table(total)
    r = uniform_below(gen, counts.count(total, total))
    parts: List[int] = []
    n = k = total
    while n > 0:
        k = min(k, n)
        rest = n - k
        c = counts.count(rest, k)
        if r < c:
            parts.append(k)
            n = rest
        else:
            r -= c
            k -= 1
    return parts


def multiplicity_partition(
    gen: np.random.Generator, total: int, counts: PartitionCounts, sigma: np.ndarray
) -> List[int]:
    """
    Uniform partition from the p(m) row alone.

    At remaining mass m, a block of j copies of part d is split off with
    probability d * p(m - j*d) / (m * p(m)); grouping by s = j*d gives
    weight sigma(s) * p(m - s), after which d | s is picked with
    probability d / sigma(s).
    """
    counts.ensure_totals(total)
    parts: List[int] = []
    m = total
    while m > 0:
        r = uniform_below(gen, m * counts.total(m))
        s = 0
        while True:
            s += 1
            weight = int(sigma[s]) * counts.total(m - s)
            if r < weight:
                break
            r -= weight

        t = int(gen.integers(int(sigma[s])))
        part = s
        for d in range(1, s + 1):
            if s % d:
                continue
            if t < d:
                part = d
                break
            t -= d
        parts.extend([part] * (s // part))
        m -= s
    parts.sort(reverse=True)
    return parts


# ── Service ───────────────────────────────────────────────────────────────

class RandkitService(BaseService):
    """Seedable samplers for every distribution the models draw from."""

    def __init__(self):
        super().__init__()

    @staticmethod
    def _check_count(n: int) -> None:
        if int(n) != n or n < 1:
            raise ParameterException(f"sample count must be a positive integer, got {n}", parameter="n")

    def sample_pareto(self, params: ParetoParams, n: int, rng: RngStream) -> np.ndarray:
        """Draws with CCDF (xmin/x)^mu for x >= xmin."""
        self._check_count(n)
        return pareto_variates(rng.generator(), params, int(n))

    def sample_lognormal(self, log_mean: float, log_sd: float, n: int, rng: RngStream) -> np.ndarray:
        self._check_count(n)
        if not log_sd > 0:
            raise ParameterException(f"log_sd must be > 0, got {log_sd}", parameter="log_sd")
        return lognormal_variates(rng.generator(), log_mean, log_sd, int(n))

    def sample_stable(self, params: StableParams, n: int, rng: RngStream) -> np.ndarray:
        self._check_count(n)
        return stable_variates(rng.generator(), params, int(n))

    def sample_discrete_power_law(self, alpha: float, kmin: int, n: int, rng: RngStream) -> np.ndarray:
        """Integers k >= kmin with P(K = k) proportional to k^(-1-alpha)."""
        self._check_count(n)
        if not alpha > 0:
            raise ParameterException(f"alpha must be > 0, got {alpha}", parameter="alpha")
        if int(kmin) != kmin or kmin < 1:
            raise ParameterException(f"kmin must be a positive integer, got {kmin}", parameter="kmin")
        kmax = self.settings.power_law_table_max
        if kmin > kmax:
            raise ParameterException(
                f"kmin={kmin} exceeds the power-law table cutoff {kmax}", parameter="kmin"
            )
        return power_law_variates(rng.generator(), alpha, int(kmin), int(n), kmax)

    def sample_geometric(self, mean: float, n: int, rng: RngStream) -> np.ndarray:
        self._check_count(n)
        if not mean > 0:
            raise ParameterException(f"mean must be > 0, got {mean}", parameter="mean")
        return geometric_variates(rng.generator(), mean, int(n))

    def check_partition_total(self, total: int) -> None:
        ceiling = self.settings.partition_ceiling
        if int(total) != total or total < 1:
            raise ParameterException(f"total must be a positive integer, got {total}", parameter="total")
        if total > ceiling:
            raise ParameterException(
                f"total={total} exceeds the partition sampler ceiling {ceiling}", parameter="total"
            )

    def partition_sampler(self, total: int):
        """Sampler ``gen -> parts`` for one total; picks the table or the multiplicity method."""
        self.check_partition_total(total)
        total = int(total)
        if total <= self.settings.partition_table_limit:
            partition_counts.ensure_table(total)
            return lambda gen: table_partition(gen, total, partition_counts)
        sigma = divisor_sums(self.settings.partition_ceiling)
        partition_counts.ensure_totals(total)
        return lambda gen: multiplicity_partition(gen, total, partition_counts, sigma)

    def sample_uniform_partition(self, total: int, rng: RngStream) -> Partition:
        """A partition of ``total`` drawn uniformly over all its partitions."""
        sampler = self.partition_sampler(total)
        return Partition(parts=tuple(sampler(rng.generator())), total=int(total))

    def sample_uniform_partitions(self, total: int, n: int, rng: RngStream) -> List[Partition]:
        """``n`` independent uniform partitions from one stream."""
        self._check_count(n)
        sampler = self.partition_sampler(total)
        gen = rng.generator()
        return [Partition(parts=tuple(sampler(gen)), total=int(total)) for _ in range(int(n))]

    def partition_count(self, total: int) -> int:
        """p(total), from the triangular table when it covers ``total``."""
        self.check_partition_total(total)
        if total <= self.settings.partition_table_limit:
            return partition_counts.count(int(total), int(total))
        return partition_counts.total(int(total))
