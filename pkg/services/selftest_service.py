"""
Quick invariant suite behind the ``selftest`` command.

Every check runs on a fixed seed at small scale, so a clean build passes in
a few seconds.
"""

import math
from typing import Callable, List, Optional

import numpy as np
from scipy import stats

from core.exceptions import GrowthToolkitException
from models.experiment_model import SelftestCheck
from models.growth_model import FirmComposition, WyartBouchaudConfig
from models.oracle_model import MixtureSpec
from models.randkit_model import ParetoParams, RngStream, StableParams
from services.base import BaseService
from services.growth_models_service import GrowthModelsService, aggregate_growth, herfindahl, merge_compositions
from services.oracle_service import OracleService, iter_partitions
from services.randkit_service import RandkitService, divisor_sums, multiplicity_partition, partition_counts
from services.stats_service import StatsService

SELFTEST_SEED = 20240229

# Probability floor for the chi-square uniformity checks.
_UNIFORMITY_P_VALUE = 1e-6


class SelftestService(BaseService):
    """Runs the invariant checks and reports each outcome."""

    def __init__(
        self,
        randkit: Optional[RandkitService] = None,
        models: Optional[GrowthModelsService] = None,
        stats_service: Optional[StatsService] = None,
        oracle: Optional[OracleService] = None,
    ):
        super().__init__()
        self.randkit = randkit or RandkitService()
        self.models = models or GrowthModelsService(self.randkit)
        self.stats = stats_service or StatsService()
        self.oracle = oracle or OracleService(self.stats)
        self.root = RngStream(seed=SELFTEST_SEED)

    def checks(self) -> List[Callable[[], str]]:
        return [
            self.check_partition_counts,
            self.check_table_partition_uniform,
            self.check_multiplicity_partition_uniform,
            self.check_herfindahl_bounds,
            self.check_uniform_unit_growth,
            self.check_merge,
            self.check_closed_forms,
            self.check_pareto_tail,
            self.check_gaussian_stable,
            self.check_simulation_determinism,
            self.check_exponent_table,
        ]

    def run(self) -> List[SelftestCheck]:
        results = []
        for check in self.checks():
            name = check.__name__.removeprefix("check_")
            try:
                detail = check()
                results.append(SelftestCheck(name=name, passed=True, detail=detail))
            except AssertionError as e:
                results.append(SelftestCheck(name=name, passed=False, detail=str(e)))
            except GrowthToolkitException as e:
                results.append(SelftestCheck(name=name, passed=False, detail=f"{e.error_code}: {e.message}"))
            level = "info" if results[-1].passed else "error"
            getattr(self.logger, level)(f"selftest {name}: {'ok' if results[-1].passed else 'FAILED'} {results[-1].detail}")
        return results

    # ── Partitions ────────────────────────────────────────────────────────

    def check_partition_counts(self) -> str:
        for n in (1, 5, 10, 20, 30):
            enumerated = self.oracle.count_partitions(n)
            assert enumerated == self.randkit.partition_count(n), f"p({n}) table/enumeration mismatch"
        assert self.randkit.partition_count(100) == 190_569_292, "p(100) != 190569292"
        partition_counts.ensure_totals(200)
        partition_counts.ensure_table(200)
        for n in range(1, 201):
            assert partition_counts.total(n) == partition_counts.count(n, n), f"p({n}) recurrences disagree"
        return "p(n) agrees across enumeration, table and pentagonal recurrence"

    def _uniformity(self, draw: Callable[[], tuple], total: int, per_cell: int) -> str:
        index = {parts: i for i, parts in enumerate(iter_partitions(total))}
        observed = np.zeros(len(index), dtype=np.int64)
        for _ in range(per_cell * len(index)):
            observed[index[tuple(draw())]] += 1
        p_value = float(stats.chisquare(observed).pvalue)
        assert p_value > _UNIFORMITY_P_VALUE, f"chi-square p={p_value:.3g} over {len(index)} partitions"
        return f"chi-square p={p_value:.3g} over {len(index)} partitions of {total}"

    def check_table_partition_uniform(self) -> str:
        sampler = self.randkit.partition_sampler(8)
        gen = self.root.derive(1).generator()
        return self._uniformity(lambda: sampler(gen), 8, 500)

    def check_multiplicity_partition_uniform(self) -> str:
        sigma = divisor_sums(16)
        gen = self.root.derive(2).generator()
        return self._uniformity(lambda: multiplicity_partition(gen, 8, partition_counts, sigma), 8, 500)

    # ── Compositions ──────────────────────────────────────────────────────

    def check_herfindahl_bounds(self) -> str:
        gen = self.root.derive(3).generator()
        for k in (1, 2, 7, 50, 1000):
            units = tuple(float(x) for x in gen.pareto(0.8, k) + 1.0)
            h = herfindahl(FirmComposition(units=units))
            assert 1.0 / k - 1e-15 <= h <= 1.0, f"H={h} outside [1/{k}, 1]"
        h_equal = herfindahl(FirmComposition(units=(2.0,) * 10))
        assert math.isclose(h_equal, 0.1, rel_tol=1e-12), f"equal units give H={h_equal}"
        return "1/K <= H <= 1, equal units give 1/K"

    def check_uniform_unit_growth(self) -> str:
        c = FirmComposition(units=(1.0, 3.0, 12.5, 0.25))
        for r in (-0.5, 0.0, 0.07, 2.0):
            record = aggregate_growth(c, [r] * c.unit_count)
            assert math.isclose(record.pct_growth, r, rel_tol=1e-12, abs_tol=1e-15), f"r={r} gave {record.pct_growth}"
        return "equal unit rates give the firm rate"

    def check_merge(self) -> str:
        a = FirmComposition(units=(1.0, 2.0))
        b = FirmComposition(units=(3.0,))
        merged = merge_compositions(a, b)
        assert merged.unit_count == 3 and merged.size == 6.0
        assert math.isclose(herfindahl(merged), 14.0 / 36.0, rel_tol=1e-12)
        return "merged firm recomputes S, K and H"

    # ── References ────────────────────────────────────────────────────────

    def check_closed_forms(self) -> str:
        worst = 0.0
        for psi in (1.0, -1.0):
            spec = MixtureSpec(lam=0.7, psi=psi, sigma=1.3)
            for g in (0.05, 0.4, 1.5, 4.0):
                numeric = self.oracle.mixture_density_at(spec, g)
                closed = float(self.oracle.closed_form_density(spec, [g])[0])
                worst = max(worst, abs(numeric - closed) / closed)
        assert worst < 1e-6, f"closed form and quadrature differ by {worst:.3g}"
        return f"max relative difference {worst:.2g}"

    def check_pareto_tail(self) -> str:
        x = self.randkit.sample_pareto(ParetoParams(mu=1.5), 100_000, self.root.derive(4))
        fit = self.stats.hill_estimator(x, 1000)
        assert abs(fit.exponent - 1.5) < 0.15, f"Hill exponent {fit.exponent:.3f} for mu=1.5"
        return f"Hill exponent {fit.exponent:.3f} for mu=1.5"

    def check_gaussian_stable(self) -> str:
        x = self.randkit.sample_stable(StableParams(alpha=2.0, beta=0.0, scale=1.0), 100_000, self.root.derive(5))
        sd = float(np.std(x))
        assert abs(sd - math.sqrt(2.0)) < 0.02, f"alpha=2 sd {sd:.4f}, expected sqrt(2)"
        return f"alpha=2 stable sd {sd:.4f}"

    # ── Simulation ────────────────────────────────────────────────────────

    def check_simulation_determinism(self) -> str:
        cfg = WyartBouchaudConfig(n_firms=3000, seed=SELFTEST_SEED)
        first = self.models.simulate(cfg).records
        second = self.models.simulate(cfg).records
        assert first.equals(second), "same seed produced different panels"
        other = self.models.simulate(cfg.model_copy(update={"seed": SELFTEST_SEED + 1})).records
        assert not first.equals(other), "different seeds produced identical panels"
        return f"{len(first)} records reproduced exactly"

    def check_exponent_table(self) -> str:
        rows = {r.name: r.value for r in self.oracle.scaling_exponent_table(mu=1.4, alpha=1.2, b=0.1)}
        assert math.isclose(rows["wb_rms_volatility"], -0.1, abs_tol=1e-12)
        assert math.isclose(rows["simon_phi"], 2.0 + 0.1 / 0.9, rel_tol=1e-12)
        return f"{len(rows)} rows"
