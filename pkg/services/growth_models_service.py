"""
Generative engines for the compositional growth models.

Firms are simulated in fixed-size blocks. Block ``i`` of a run draws from the
substream ``RngStream(seed).derive(tag, i)``, so a panel depends on the
configuration, its seed and the block size, never on the number of workers.
Blocks are concatenated in block order.

Firm growth aggregates unit growth by size shares,
r_i = sum_j x_ij r_ij / S_i (the weighted average; the printed form with a
trailing -1 gives -1 for a firm whose units do not grow). The firm volatility
with equal unit volatilities is sigma_unit * sqrt(H_i); the text also writes
sigma * H_i and sqrt(H_i), neither of which follows from the unit-level
variance.
"""

import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special

from core.exceptions import DomainException, ParameterException, ShapeException
from models.growth_model import (
    PANEL_COLUMNS,
    FasConfig,
    FirmComposition,
    GpgConfig,
    GrowthPanel,
    GrowthRecord,
    OpportunitiesConfig,
    PsiMixtureConfig,
    SimonConfig,
    SuttonConfig,
    WyartBouchaudConfig,
)
from models.randkit_model import ParetoParams, RngStream
from services.base import BaseService
from services.randkit_service import (
    RandkitService,
    geometric_variates,
    lognormal_variates,
    pareto_variates,
    power_law_variates,
)

# Substream tags, one per random stage of a run.
_STREAM_FIRMS = 0
_STREAM_ARRIVALS = 1
_STREAM_UNITS = 2
_STREAM_GRID = 3

# Upper bound on units held by one block when unit counts are large.
_UNITS_PER_BLOCK_FACTOR = 256

# Arrival decisions are drawn in chunks of this many steps.
_ARRIVAL_CHUNK = 1 << 16


# ── Composition operations ────────────────────────────────────────────────

def herfindahl(c: FirmComposition) -> float:
    """Sum of squared size shares, in [1/K, 1]."""
    k = c.unit_count
    if k == 1:
        return 1.0
    size = c.size
    h = math.fsum((x / size) ** 2 for x in c.units)
    return min(1.0, max(1.0 / k, h))


def firm_volatility(c: FirmComposition, sigma_unit: float) -> float:
    """Firm growth volatility for independent units of equal volatility."""
    if not sigma_unit > 0:
        raise ParameterException(f"sigma_unit must be > 0, got {sigma_unit}", parameter="sigma_unit")
    return sigma_unit * math.sqrt(herfindahl(c))


def aggregate_growth(before: FirmComposition, unit_pct_growth: Sequence[float]) -> GrowthRecord:
    """Firm growth as the share-weighted average of unit growth rates."""
    rates = [float(r) for r in unit_pct_growth]
    if len(rates) != before.unit_count:
        raise ShapeException(
            f"expected {before.unit_count} unit growth rates, got {len(rates)}",
            expected=before.unit_count,
            actual=len(rates),
        )
    if any(not r > -1 for r in rates):
        raise DomainException("unit growth rates must be > -1", details={"min_rate": min(rates)})

    size = before.size
    pct = math.fsum(x * r for x, r in zip(before.units, rates)) / size
    log_growth = math.log1p(pct)
    return GrowthRecord(
        size_before=size,
        size_after=size * math.exp(log_growth),
        log_growth=log_growth,
        pct_growth=pct,
        unit_count=before.unit_count,
        herfindahl=herfindahl(before),
    )


def merge_compositions(a: FirmComposition, b: FirmComposition) -> FirmComposition:
    """The super-firm holding the units of both firms."""
    return FirmComposition(units=a.units + b.units)


def replication_law(mu: float) -> Tuple[float, float]:
    """
    (P(0), zeta(1+mu)) for the FAS replication law.

    P(n) = n^(-1-mu) / zeta(mu) for n >= 1 and P(0) = 1 - zeta(1+mu)/zeta(mu),
    which makes the mean number of replacements exactly 1.
    """
    z_tail = float(special.zeta(1.0 + mu))
    z_mean = float(special.zeta(mu))
    return 1.0 - z_tail / z_mean, z_tail


# ── Block helpers ─────────────────────────────────────────────────────────

def _blocks(n: int, block_size: int) -> List[Tuple[int, int, int]]:
    return [(i, start, min(start + block_size, n)) for i, start in enumerate(range(0, n, block_size))]


def _shares_stats(owner: np.ndarray, units: np.ndarray, n_firms: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-firm size and Herfindahl from a flat unit array and its owner index."""
    size = np.bincount(owner, weights=units, minlength=n_firms)
    sumsq = np.bincount(owner, weights=units * units, minlength=n_firms)
    counts = np.bincount(owner, minlength=n_firms)
    h = sumsq / (size * size)
    h = np.clip(h, 1.0 / np.maximum(counts, 1), 1.0)
    return size, h


def _frame(
    firm_id: np.ndarray,
    period: np.ndarray,
    size_before: np.ndarray,
    log_growth: np.ndarray,
    unit_count: np.ndarray,
    herfindahl_values: np.ndarray,
    pct_growth: Optional[np.ndarray] = None,
    size_after: Optional[np.ndarray] = None,
) -> pd.DataFrame:
    if pct_growth is None or size_after is None:
        # r and size_after are absent where exp(g) leaves the float range
        with np.errstate(over="ignore"):
            pct = np.expm1(log_growth)
            after = size_before * np.exp(log_growth)
        unrepresentable = ~np.isfinite(pct) | (pct <= -1.0) | ~np.isfinite(after)
        if pct_growth is None:
            pct_growth = np.where(unrepresentable, np.nan, pct)
        if size_after is None:
            size_after = np.where(unrepresentable, np.nan, after)
    return pd.DataFrame({
        "firm_id": np.asarray(firm_id, dtype=np.int64),
        "period": np.asarray(period, dtype=np.int64),
        "size_before": np.asarray(size_before, dtype=np.float64),
        "size_after": np.asarray(size_after, dtype=np.float64),
        "log_growth": np.asarray(log_growth, dtype=np.float64),
        "pct_growth": np.asarray(pct_growth, dtype=np.float64),
        "unit_count": np.asarray(unit_count, dtype=np.int64),
        "herfindahl": np.asarray(herfindahl_values, dtype=np.float64),
    })[PANEL_COLUMNS]


def _panel(frames: List[pd.DataFrame], digest: str) -> GrowthPanel:
    records = pd.concat(frames, ignore_index=True) if len(frames) > 1 else frames[0].reset_index(drop=True)
    return GrowthPanel(records=records, config_digest=digest)


class GrowthModelsService(BaseService):
    """Simulations for every model family."""

    def __init__(self, randkit: Optional[RandkitService] = None):
        super().__init__()
        self.randkit = randkit or RandkitService()

    def _run_blocks(self, fn: Callable, jobs: List) -> List:
        return self.pool.map_ordered(fn, jobs)

    def _firms_per_block(self, units_per_firm: int) -> int:
        budget = self.settings.block_size * _UNITS_PER_BLOCK_FACTOR
        return max(1, min(self.settings.block_size, budget // max(1, units_per_firm)))

    # ── Wyart-Bouchaud ────────────────────────────────────────────────────

    def simulate_wyart_bouchaud(self, cfg: WyartBouchaudConfig) -> GrowthPanel:
        """
        Power-law unit counts with Pareto unit sizes.

        Growth is Gaussian(0, sigma_unit^2 H) per firm, or with
        ``unit_shocks`` the share-weighted sum of per-unit Gaussian shocks,
        which has the same law. With ``k_grid`` every firm of grid entry K
        has exactly K units (n_firms firms per entry).
        """
        self.logger.info(
            f"WB simulation: alpha={cfg.alpha}, mu={cfg.mu}, firms={cfg.n_firms}, "
            f"k_grid={cfg.k_grid}, seed={cfg.seed}"
        )
        root = RngStream(seed=cfg.seed)
        pareto = ParetoParams(xmin=cfg.xmin, mu=cfg.mu)
        kmax = self.settings.power_law_table_max

        def growth(gen: np.random.Generator, owner: np.ndarray, units: np.ndarray, n: int, h: np.ndarray, size: np.ndarray):
            if cfg.unit_shocks:
                shocks = gen.normal(0.0, cfg.sigma_unit, units.size)
                return np.bincount(owner, weights=units * shocks, minlength=n) / size
            return cfg.sigma_unit * np.sqrt(h) * gen.standard_normal(n)

        if cfg.k_grid is None:
            def run_block(block: Tuple[int, int, int]) -> pd.DataFrame:
                index, start, stop = block
                gen = root.derive(_STREAM_FIRMS, index).generator()
                n = stop - start
                k = power_law_variates(gen, cfg.alpha, 1, n, kmax)
                owner = np.repeat(np.arange(n), k)
                units = pareto_variates(gen, pareto, owner.size)
                size, h = _shares_stats(owner, units, n)
                g = growth(gen, owner, units, n, h, size)
                self.logger.debug(f"WB block {index}: {n} firms, {owner.size} units")
                return _frame(np.arange(start, stop), np.zeros(n), size, g, k, h)

            frames = self._run_blocks(run_block, _blocks(cfg.n_firms, self.settings.block_size))
        else:
            jobs = []
            for grid_index, k_fixed in enumerate(cfg.k_grid):
                per_block = self._firms_per_block(k_fixed)
                for index, start, stop in _blocks(cfg.n_firms, per_block):
                    jobs.append((grid_index, k_fixed, index, start, stop))

            def run_grid_block(job: Tuple[int, int, int, int, int]) -> pd.DataFrame:
                grid_index, k_fixed, index, start, stop = job
                gen = root.derive(_STREAM_GRID, grid_index, index).generator()
                n = stop - start
                units = pareto_variates(gen, pareto, n * k_fixed)
                owner = np.repeat(np.arange(n), k_fixed)
                size, h = _shares_stats(owner, units, n)
                g = growth(gen, owner, units, n, h, size)
                firm_id = grid_index * cfg.n_firms + np.arange(start, stop)
                return _frame(firm_id, np.zeros(n), size, g, np.full(n, k_fixed), h)

            frames = self._run_blocks(run_grid_block, jobs)

        panel = _panel(frames, cfg.digest())
        self.logger.info(f"WB simulation finished: {len(panel)} records")
        return panel

    # ── Simon / GPG ───────────────────────────────────────────────────────

    def simulate_simon(self, cfg: SimonConfig) -> np.ndarray:
        """
        Sequential unit arrivals; returns the final unit count of every firm.

        An arrival founds a new firm with probability b, otherwise it joins an
        existing firm with probability proportional to that firm's unit count
        (the owner of a uniformly chosen existing unit). The first arrival into
        an empty economy always founds a firm.
        """
        seed_firms = cfg.seed_firms
        if cfg.b == 0 and seed_firms < 1:
            raise ParameterException(
                "b = 0 needs n_seed_firms >= 1: no firm can ever be founded", parameter="n_seed_firms"
            )
        self.logger.info(
            f"Simon process: b={cfg.b}, steps={cfg.n_steps}, seed_firms={seed_firms}, seed={cfg.seed}"
        )

        gen = RngStream(seed=cfg.seed).derive(_STREAM_ARRIVALS).generator()
        counts: List[int] = [1] * seed_firms
        owners: List[int] = list(range(seed_firms))
        b = cfg.b

        remaining = cfg.n_steps
        while remaining > 0:
            chunk = min(remaining, _ARRIVAL_CHUNK)
            entry = gen.random(chunk)
            pick = gen.random(chunk)
            for u, v in zip(entry.tolist(), pick.tolist()):
                if not owners or u < b:
                    owners.append(len(counts))
                    counts.append(1)
                else:
                    firm = owners[int(v * len(owners))]
                    counts[firm] += 1
                    owners.append(firm)
            remaining -= chunk

        result = np.asarray(counts, dtype=np.int64)
        self.logger.info(f"Simon process finished: {result.size} firms, {int(result.sum())} units")
        return result

    def simulate_gpg(self, cfg: GpgConfig) -> GrowthPanel:
        """
        Simon firms with log-normal units, each hit by a Gibrat shock.

        K is held fixed over the measurement window; the shocks of the window
        combine into one log-normal factor with log-sd gibrat_log_sd * sqrt(window).
        """
        k = self.simulate_simon(cfg.simon())
        root = RngStream(seed=cfg.seed)
        shock_sd = cfg.gibrat_log_sd * math.sqrt(cfg.measure_window)
        self.logger.info(
            f"GPG measurement: firms={k.size}, unit_log_sd={cfg.unit_log_sd}, shock_sd={shock_sd:.4g}"
        )

        def run_block(block: Tuple[int, int, int]) -> pd.DataFrame:
            index, start, stop = block
            gen = root.derive(_STREAM_UNITS, index).generator()
            n = stop - start
            k_block = k[start:stop]
            owner = np.repeat(np.arange(n), k_block)
            if cfg.unit_log_sd > 0:
                units = lognormal_variates(gen, 0.0, cfg.unit_log_sd, owner.size)
            else:
                units = np.ones(owner.size)
            size, h = _shares_stats(owner, units, n)
            if shock_sd > 0:
                after = units * np.exp(gen.normal(0.0, shock_sd, owner.size))
                size_after = np.bincount(owner, weights=after, minlength=n)
                g = np.log(size_after / size)
            else:
                g = np.zeros(n)
            return _frame(np.arange(start, stop), np.zeros(n), size, g, k_block, h)

        frames = self._run_blocks(run_block, _blocks(k.size, self._firms_per_block(int(k.mean()))))
        return _panel(frames, cfg.digest())

    # ── psi mixtures and growth opportunities ─────────────────────────────

    def simulate_psi_mixture(self, cfg: PsiMixtureConfig) -> GrowthPanel:
        """
        K ~ exponential(lambda) as a continuous variate, g ~ Gaussian(0, sigma^2 K^psi).

        Each conditional law is a normalized Gaussian. Records carry size 1,
        unit_count = rounded K and the degenerate Herfindahl 1.
        """
        self.logger.info(
            f"psi mixture: psi={cfg.psi}, lambda={cfg.lam}, sigma={cfg.sigma}, firms={cfg.n_firms}, seed={cfg.seed}"
        )
        root = RngStream(seed=cfg.seed)

        def run_block(block: Tuple[int, int, int]) -> pd.DataFrame:
            index, start, stop = block
            gen = root.derive(_STREAM_FIRMS, index).generator()
            n = stop - start
            k = gen.exponential(1.0 / cfg.lam, n)
            z = gen.standard_normal(n)
            if cfg.psi == 0:
                g = cfg.sigma * z
            else:
                g = cfg.sigma * np.power(k, cfg.psi / 2.0) * z
            return _frame(np.arange(start, stop), np.zeros(n), np.ones(n), g, np.rint(k), np.ones(n))

        frames = self._run_blocks(run_block, _blocks(cfg.n_firms, self.settings.block_size))
        return _panel(frames, cfg.digest())

    def simulate_opportunities(self, cfg: OpportunitiesConfig) -> GrowthPanel:
        """
        Single-unit firms receiving N ~ Bose-Einstein(mean) growth opportunities,
        each an independent Gaussian(0, sigma^2) shock; g ~ Gaussian(0, sigma^2 N).
        """
        self.logger.info(
            f"Growth opportunities: mean={cfg.mean_opportunities}, sigma={cfg.sigma}, firms={cfg.n_firms}"
        )
        root = RngStream(seed=cfg.seed)

        def run_block(block: Tuple[int, int, int]) -> pd.DataFrame:
            index, start, stop = block
            gen = root.derive(_STREAM_FIRMS, index).generator()
            n = stop - start
            opportunities = geometric_variates(gen, cfg.mean_opportunities, n)
            g = cfg.sigma * np.sqrt(opportunities) * gen.standard_normal(n)
            return _frame(np.arange(start, stop), np.zeros(n), np.ones(n), g, np.ones(n), np.ones(n))

        frames = self._run_blocks(run_block, _blocks(cfg.n_firms, self.settings.block_size))
        return _panel(frames, cfg.digest())

    # ── Sutton ────────────────────────────────────────────────────────────

    def simulate_sutton(self, cfg: SuttonConfig) -> GrowthPanel:
        """
        Firms of integer size S split over a uniformly drawn partition of S.

        Unit shocks have mean 0 and sd unit_shock_sd; the Laplace option uses
        scale sd/sqrt(2). Records hold percent growth from the share-weighted
        aggregate and the Herfindahl of the partition.
        """
        samplers = {size: self.randkit.partition_sampler(size) for size in cfg.size_grid}
        self.logger.info(
            f"Sutton simulation: sizes={cfg.size_grid}, samples={cfg.samples_per_size}, "
            f"shocks={cfg.unit_shock_kind}({cfg.unit_shock_sd}), seed={cfg.seed}"
        )
        root = RngStream(seed=cfg.seed)

        jobs = []
        for grid_index, size in enumerate(cfg.size_grid):
            for index, start, stop in _blocks(cfg.samples_per_size, self.settings.block_size):
                jobs.append((grid_index, size, index, start, stop))

        def run_block(job: Tuple[int, int, int, int, int]) -> pd.DataFrame:
            grid_index, size, index, start, stop = job
            gen = root.derive(_STREAM_GRID, grid_index, index).generator()
            n = stop - start
            sampler = samplers[size]
            partitions = [sampler(gen) for _ in range(n)]
            k = np.fromiter((len(p) for p in partitions), dtype=np.int64, count=n)
            units = np.fromiter((x for p in partitions for x in p), dtype=np.float64, count=int(k.sum()))
            owner = np.repeat(np.arange(n), k)

            if cfg.unit_shock_sd == 0:
                shocks = np.zeros(units.size)
            elif cfg.unit_shock_kind == "laplace":
                shocks = gen.laplace(0.0, cfg.unit_shock_sd / math.sqrt(2.0), units.size)
            else:
                shocks = gen.normal(0.0, cfg.unit_shock_sd, units.size)
            if units.size and shocks.min() <= -1:
                raise DomainException(
                    "a unit shock reached -100%; lower unit_shock_sd",
                    details={"size": size, "min_shock": float(shocks.min())},
                )

            totals = np.full(n, float(size))
            pct = np.bincount(owner, weights=units * shocks, minlength=n) / totals
            _, h = _shares_stats(owner, units, n)
            g = np.log1p(pct)
            firm_id = grid_index * cfg.samples_per_size + np.arange(start, stop)
            self.logger.debug(f"Sutton S={size} block {index}: mean K={k.mean():.2f}")
            return _frame(firm_id, np.zeros(n), totals, g, k, h, pct_growth=pct, size_after=totals * (1 + pct))

        frames = self._run_blocks(run_block, jobs)
        return _panel(frames, cfg.digest())

    def part_size_profile(self, total: int, samples: int, rng: RngStream) -> pd.DataFrame:
        """
        Mean multiplicity of each part size over uniform partitions of ``total``,
        next to the Bose-Einstein occupancy 1/(exp(c x / sqrt(S)) - 1), c = pi/sqrt(6).
        """
        partitions = self.randkit.sample_uniform_partitions(total, samples, rng)
        multiplicity = np.zeros(total + 1)
        for partition in partitions:
            np.add.at(multiplicity, np.asarray(partition.parts), 1.0)
        sizes = np.arange(1, total + 1)
        c = math.pi / math.sqrt(6.0)
        return pd.DataFrame({
            "part_size": sizes,
            "mean_multiplicity": multiplicity[1:] / samples,
            "bose_einstein": 1.0 / np.expm1(c * sizes / math.sqrt(total)),
        })

    # ── Farmer-Axtell-Schwarzkopf ─────────────────────────────────────────

    def simulate_fas(self, cfg: FasConfig) -> GrowthPanel:
        """
        Each unit is replaced every period by n new units, P(n) ~ n^(-1-mu)
        with mean exactly 1. Unit sizes are 1, so S = K. A firm whose units
        all disappear gets one record with r = -1 and no log growth, then stops.
        """
        p_zero, _ = replication_law(cfg.mu)
        kmax = self.settings.power_law_table_max
        self.logger.info(
            f"FAS simulation: mu={cfg.mu}, P(0)={p_zero:.4f}, K0={cfg.k0_grid}, "
            f"periods={cfg.n_periods}, samples={cfg.samples}, seed={cfg.seed}"
        )
        root = RngStream(seed=cfg.seed)

        jobs = []
        for grid_index, k0 in enumerate(cfg.k0_grid):
            for index, start, stop in _blocks(cfg.samples, self._firms_per_block(k0)):
                jobs.append((grid_index, k0, index, start, stop))

        def replicate(gen: np.random.Generator, k: np.ndarray) -> np.ndarray:
            if cfg.point_mass:
                return k.copy()
            units = int(k.sum())
            offspring = power_law_variates(gen, cfg.mu, 1, units, kmax)
            offspring[gen.random(units) < p_zero] = 0
            owner = np.repeat(np.arange(k.size), k)
            return np.bincount(owner, weights=offspring, minlength=k.size).astype(np.int64)

        def run_block(job: Tuple[int, int, int, int, int]) -> pd.DataFrame:
            grid_index, k0, index, start, stop = job
            gen = root.derive(_STREAM_GRID, grid_index, index).generator()
            firm_id = grid_index * cfg.samples + np.arange(start, stop)
            k = np.full(stop - start, k0, dtype=np.int64)
            frames = []
            for period in range(cfg.n_periods):
                if k.size == 0:
                    break
                k_next = replicate(gen, k)
                pct = (k_next - k) / k
                with np.errstate(divide="ignore"):
                    g = np.where(k_next > 0, np.log1p(pct), np.nan)
                frames.append(_frame(
                    firm_id, np.full(k.size, period), k.astype(np.float64), g, k, 1.0 / k,
                    pct_growth=pct, size_after=k_next.astype(np.float64),
                ))
                alive = k_next > 0
                firm_id, k = firm_id[alive], k_next[alive]
            return pd.concat(frames, ignore_index=True)

        frames = self._run_blocks(run_block, jobs)
        panel = _panel(frames, cfg.digest())
        extinct = int(panel.records["log_growth"].isna().sum())
        self.logger.info(f"FAS simulation finished: {len(panel)} records, {extinct} extinctions")
        return panel

    # ── Dispatch ──────────────────────────────────────────────────────────

    def simulate(self, cfg) -> GrowthPanel:
        """Run the simulation matching ``cfg.kind``."""
        handlers: Dict[str, Callable] = {
            "wb": self.simulate_wyart_bouchaud,
            "gpg": self.simulate_gpg,
            "psi": self.simulate_psi_mixture,
            "sutton": self.simulate_sutton,
            "fas": self.simulate_fas,
            "opportunities": self.simulate_opportunities,
        }
        if cfg.kind == "simon":
            return self.simon_panel(cfg)
        return handlers[cfg.kind](cfg)

    def simon_panel(self, cfg: SimonConfig) -> GrowthPanel:
        """Simon unit counts as a panel of static single-period records (g = 0, size = K)."""
        k = self.simulate_simon(cfg)
        n = k.size
        h = 1.0 / k
        return _panel(
            [_frame(np.arange(n), np.zeros(n), k.astype(np.float64), np.zeros(n), k, h)], cfg.digest()
        )
