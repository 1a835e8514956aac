"""
Analytic and brute-force references for the samplers and simulations.

Mixture densities follow P(g) = int dK w(K) Normal(g; 0, sigma^2 K^psi) with
the Gaussian normalization included in the integrand. For the exponential
law w(K) = lambda exp(-lambda K) the distribution function uses the
substitution K = -log(u)/lambda, which maps the integral onto u in (0, 1)
with w(K) dK = du; densities are integrated over log K.
"""

import math
import warnings
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize, special, stats

from core.exceptions import (
    InsufficientDataException,
    NumericException,
    ParameterException,
    RegimeException,
)
from models.oracle_model import ExponentPrediction, MixtureSpec
from models.randkit_model import Partition
from models.stats_model import DensityCurve
from services.base import BaseService
from services.stats_service import StatsService

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
QUAD_LIMIT = 500
QUAD_MAX_ERROR = 1e-10
CDF_MAX_ERROR = 1e-8

ENUMERATION_LIMIT = 60

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _gaussian_pdf(g: float, var: float) -> float:
    if var <= 0.0 or not math.isfinite(var):
        return 0.0
    return math.exp(-g * g / (2.0 * var)) / (_SQRT_2PI * math.sqrt(var))


def _concave_mode(slope: Callable[[float], float], start: float) -> float:
    """Root of the decreasing function ``slope``, bracketed outward from ``start``."""
    lo, hi, step = start - 1.0, start + 1.0, 1.0
    while slope(lo) <= 0.0:
        step *= 2.0
        lo -= step
    step = 1.0
    while slope(hi) >= 0.0:
        step *= 2.0
        hi += step
    return optimize.brentq(slope, lo, hi, xtol=1e-12)


def iter_partitions(total: int, largest: Optional[int] = None) -> Iterator[Tuple[int, ...]]:
    """All partitions of ``total`` with parts <= ``largest``, largest first part first."""
    if largest is None:
        largest = total
    if total == 0:
        yield ()
        return
    for first in range(min(total, largest), 0, -1):
        for rest in iter_partitions(total - first, first):
            yield (first,) + rest


class OracleService(BaseService):
    """Reference densities, exhaustive enumerations and predicted exponents."""

    def __init__(self, stats_service: Optional[StatsService] = None):
        super().__init__()
        self.stats = stats_service or StatsService()

    # ── Mixture densities ─────────────────────────────────────────────────

    def _quad(
        self, fn: Callable[[float], float], lower: float, upper: float, point: float,
        max_error: float = QUAD_MAX_ERROR,
    ) -> float:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", integrate.IntegrationWarning)
            value, abserr = integrate.quad(
                fn, lower, upper, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT
            )
        if not math.isfinite(value) or abserr > max_error:
            raise NumericException(
                f"quadrature did not converge at g={point}",
                diagnostics={
                    "g": point,
                    "value": value,
                    "abserr": abserr,
                    "warnings": [str(w.message) for w in caught],
                },
            )
        return value

    def mixture_density_at(self, spec: MixtureSpec, g: float) -> float:
        """
        P(g) by adaptive quadrature (exact Gaussian for a point-mass K law).

        With K = exp(s) the log of the integrand, h(s), is strictly concave.
        The integral is taken in units of the curvature width around the mode
        of h, so the mass is found however far g sits in the tail.
        """
        if spec.k_law == "point_mass":
            return _gaussian_pdf(g, spec.sigma ** 2 * spec.k0 ** spec.psi)

        lam, psi, sigma2 = spec.lam, spec.psi, spec.sigma ** 2
        a = 1.0 - psi / 2.0
        c = g * g / (2.0 * sigma2)

        def slope(s: float) -> float:
            with np.errstate(over="ignore"):
                value = a - lam * np.exp(s)
                if c > 0.0:
                    value += psi * c * np.exp(-psi * s)
            return float(value)

        def log_integrand(s: float) -> float:
            with np.errstate(over="ignore"):
                value = a * s - lam * np.exp(s)
                if c > 0.0:
                    value -= c * np.exp(-psi * s)
            return float(value)

        if c == 0.0 and a <= 0.0:
            return math.inf

        mode = _concave_mode(slope, math.log(1.0 / lam))
        width = 1.0 / math.sqrt(lam * math.exp(mode) + psi * psi * c * math.exp(-psi * mode))
        peak = log_integrand(mode)

        def scaled(x: float) -> float:
            s = mode + width * x
            if not math.isfinite(s):
                return 0.0
            return math.exp(log_integrand(s) - peak)

        mass = self._quad(scaled, -np.inf, 0.0, g) + self._quad(scaled, 0.0, np.inf, g)
        log_scale = peak + math.log(width) + math.log(lam) - 0.5 * math.log(2.0 * math.pi * sigma2)
        return mass * math.exp(log_scale)

    def mixture_density_numeric(self, spec: MixtureSpec, g_grid: Sequence[float]) -> DensityCurve:
        """Mixture density on a strictly increasing grid."""
        grid = np.asarray(g_grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ParameterException("g_grid must be strictly increasing with at least two points", parameter="g_grid")
        values = np.array([self.mixture_density_at(spec, float(g)) for g in grid])
        self.logger.debug(f"mixture density on {grid.size} points: {spec}")
        return DensityCurve.from_arrays(grid, values)

    def mixture_normalization(self, spec: MixtureSpec) -> float:
        """
        Integral of the quadrature density over the real line.

        The half line is split at the typical scale c = sigma * E[K]^(psi/2);
        beyond c the substitution g = tan(theta) maps the power-law tail onto
        a bounded interval.
        """
        k_typical = spec.k0 if spec.k_law == "point_mass" else 1.0 / spec.lam
        c = spec.sigma * k_typical ** (spec.psi / 2.0)

        def density(g: float) -> float:
            return self.mixture_density_at(spec, g)

        def tail(theta: float) -> float:
            return density(math.tan(theta)) / math.cos(theta) ** 2

        options = dict(epsabs=1e-13, epsrel=1e-11, limit=QUAD_LIMIT)
        core = integrate.quad(density, 0.0, c, **options)[0]
        rest = integrate.quad(tail, math.atan(c), math.pi / 2.0, **options)[0]
        return 2.0 * (core + rest)

    def mixture_cdf_at(self, spec: MixtureSpec, g: float) -> float:
        """P(G <= g) = int du Phi(g / (sigma K(u)^(psi/2)))."""
        if spec.k_law == "point_mass":
            return float(stats.norm.cdf(g, scale=spec.sigma * spec.k0 ** (spec.psi / 2.0)))
        lam, psi, sigma = spec.lam, spec.psi, spec.sigma

        def integrand(u: float) -> float:
            k = -math.log(u) / lam
            if k <= 0.0:
                k = np.finfo(float).tiny
            scale = sigma * k ** (psi / 2.0)
            if scale == 0.0:
                return 0.5 if g == 0 else float(g > 0)
            if not math.isfinite(scale):
                return 0.5
            return float(special.ndtr(g / scale))

        return self._quad(integrand, 0.0, 1.0, g, max_error=CDF_MAX_ERROR)

    # ── Closed forms ──────────────────────────────────────────────────────

    @staticmethod
    def has_closed_form(spec: MixtureSpec) -> bool:
        return spec.k_law == "point_mass" or spec.psi in (-1.0, 0.0, 1.0)

    def closed_form_density(self, spec: MixtureSpec, g: Iterable[float]) -> np.ndarray:
        """
        Closed-form mixture densities.

        psi = 1:  (sqrt(lambda/2)/sigma) exp(-sqrt(2 lambda)|g|/sigma), a Laplace
                  law with scale sigma/sqrt(2 lambda)
        psi = -1: (lambda/(2 sqrt(2) sigma)) (lambda + g^2/(2 sigma^2))^(-3/2)
        psi = 0 and point masses: Gaussian
        """
        x = np.asarray(g, dtype=np.float64)
        sigma, psi = spec.sigma, spec.psi
        if spec.k_law == "point_mass":
            return stats.norm.pdf(x, scale=sigma * spec.k0 ** (psi / 2.0))
        lam = spec.lam
        if psi == 0.0:
            return stats.norm.pdf(x, scale=sigma)
        if psi == 1.0:
            return math.sqrt(lam / 2.0) / sigma * np.exp(-math.sqrt(2.0 * lam) * np.abs(x) / sigma)
        if psi == -1.0:
            return lam / (2.0 * math.sqrt(2.0) * sigma) * np.power(lam + x * x / (2.0 * sigma ** 2), -1.5)
        raise ParameterException(f"no closed form for psi={psi}", parameter="psi")

    def mixture_cdf(self, spec: MixtureSpec, grid: Optional[Sequence[float]] = None) -> Callable[[np.ndarray], np.ndarray]:
        """
        Distribution function of the mixture.

        Closed forms are used where they exist (psi = -1 integrates to
        (1 + g / sqrt(a^2 + g^2)) / 2 with a^2 = 2 sigma^2 lambda). Otherwise
        the quadrature CDF is tabulated on ``grid`` and interpolated linearly.
        """
        sigma, psi = spec.sigma, spec.psi
        if spec.k_law == "point_mass":
            return stats.norm(scale=sigma * spec.k0 ** (psi / 2.0)).cdf
        lam = spec.lam
        if psi == 0.0:
            return stats.norm(scale=sigma).cdf
        if psi == 1.0:
            return stats.laplace(scale=sigma / math.sqrt(2.0 * lam)).cdf
        if psi == -1.0:
            a2 = 2.0 * sigma ** 2 * lam

            def cdf(x):
                x = np.asarray(x, dtype=np.float64)
                return 0.5 * (1.0 + x / np.sqrt(a2 + x * x))

            return cdf
        if grid is None:
            raise ParameterException(f"psi={psi} has no closed-form CDF; supply a grid", parameter="grid")
        return self.tabulated_cdf(spec, grid)

    def tabulated_cdf(self, spec: MixtureSpec, grid: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
        """Quadrature CDF on ``grid``, interpolated linearly and clamped to [0, 1] outside it."""
        points = np.asarray(grid, dtype=np.float64)
        values = np.array([self.mixture_cdf_at(spec, float(g)) for g in points])
        values = np.maximum.accumulate(np.clip(values, 0.0, 1.0))

        def cdf(x):
            return np.interp(np.asarray(x, dtype=np.float64), points, values, left=0.0, right=1.0)

        return cdf

    def laplace_scale_mixture_check(self, samples: Iterable[float], lam: float, sigma: float) -> float:
        """KS distance between samples and the Laplace law with scale sigma/sqrt(2 lambda)."""
        x = np.asarray(samples, dtype=np.float64).ravel()
        if not lam > 0:
            raise ParameterException(f"lambda must be > 0, got {lam}", parameter="lambda")
        if not sigma > 0:
            raise ParameterException(f"sigma must be > 0, got {sigma}", parameter="sigma")
        if x.size < 10_000:
            raise InsufficientDataException(
                f"Laplace check needs at least 10000 samples, got {x.size}", required=10_000, available=x.size
            )
        return self.stats.ks_distance(x, stats.laplace(scale=sigma / math.sqrt(2.0 * lam)).cdf)

    # ── Partitions ────────────────────────────────────────────────────────

    @staticmethod
    def _check_enumeration_total(total: int) -> None:
        if int(total) != total or not 1 <= total <= ENUMERATION_LIMIT:
            raise ParameterException(
                f"total must be an integer in [1, {ENUMERATION_LIMIT}], got {total}", parameter="total"
            )

    def enumerate_partitions(self, total: int) -> List[Partition]:
        """Every partition of ``total`` once, in decreasing lexicographic order."""
        self._check_enumeration_total(total)
        return [Partition(parts=parts, total=total) for parts in iter_partitions(int(total))]

    def count_partitions(self, total: int) -> int:
        """Number of partitions by exhaustive enumeration."""
        self._check_enumeration_total(total)
        return sum(1 for _ in iter_partitions(int(total)))

    # ── Predicted exponents ───────────────────────────────────────────────

    def scaling_exponent_table(
        self,
        mu: Optional[float] = None,
        alpha: Optional[float] = None,
        b: Optional[float] = None,
        families: Optional[Sequence[str]] = None,
    ) -> List[ExponentPrediction]:
        """
        Predicted exponents as formula evaluations.

        Families: ``wb`` needs mu in (1, 2] (alpha optional, in (1, mu)),
        ``fas`` needs mu in (0, 2], ``gpg`` needs b in [0, 1), ``sutton``
        needs nothing. By default every family whose parameters are supplied
        is evaluated; a parameter outside a requested family's regime raises
        RegimeException. Values at mu = 2 are flagged as regime boundaries.
        """
        if families is None:
            families = []
            if mu is not None:
                families += ["wb", "fas"]
            if b is not None:
                families.append("gpg")
            families.append("sutton")
        rows: List[ExponentPrediction] = []

        for family in families:
            if family == "wb":
                rows += self._wb_rows(mu, alpha)
            elif family == "fas":
                rows += self._fas_rows(mu)
            elif family == "gpg":
                rows += self._gpg_rows(b)
            elif family == "sutton":
                rows += [
                    ExponentPrediction(name="sutton_variance", formula="-1/2", value=-0.5,
                                       note="Var(r|S) ~ S^(-1/2)"),
                    ExponentPrediction(name="sutton_volatility", formula="-1/4", value=-0.25,
                                       note="sd(r|S) ~ S^(-1/4)"),
                ]
            else:
                raise ParameterException(f"unknown model family '{family}'", parameter="families")
        return rows

    @staticmethod
    def _wb_rows(mu: Optional[float], alpha: Optional[float]) -> List[ExponentPrediction]:
        if mu is None:
            raise RegimeException("wb", "mu is required")
        if not 1 < mu <= 2:
            raise RegimeException("wb", f"mu must lie in (1, 2], got {mu}", details={"mu": mu})
        boundary = mu == 2
        rows = [
            ExponentPrediction(name="typical_herfindahl", formula="2(1-mu)/mu", value=2 * (1 - mu) / mu,
                               boundary=boundary, note="median H given K ~ K^x"),
            ExponentPrediction(name="mean_herfindahl", formula="1-mu", value=1 - mu,
                               boundary=boundary, note="mean H given K ~ K^x"),
            ExponentPrediction(name="herfindahl_tail", formula="mu/2", value=mu / 2,
                               boundary=boundary, note="P(H|K) ~ H^(-1-x) for H_typ << H << 1"),
            ExponentPrediction(name="wb_growth_tail", formula="mu", value=mu,
                               boundary=boundary, note="P(|g| > x) tail index; density exponent 1+mu"),
            ExponentPrediction(name="wb_mean_volatility", formula="(mu-1)/mu", value=(mu - 1) / mu,
                               boundary=boundary, note="E[sigma|S] exponent as printed; magnitude only"),
        ]
        if alpha is not None:
            if not 1 < alpha < mu:
                raise RegimeException(
                    "wb", f"need 1 < alpha < mu, got alpha={alpha}, mu={mu}", details={"alpha": alpha, "mu": mu}
                )
            rows += [
                ExponentPrediction(name="wb_rms_volatility", formula="(alpha-mu)/2", value=(alpha - mu) / 2,
                                   boundary=boundary, note="sqrt(E[sigma^2|S]) exponent; magnitude only"),
                ExponentPrediction(name="firm_size_tail", formula="alpha", value=alpha,
                                   note="P(S > x) tail index; density exponent 1+alpha"),
            ]
        return rows

    @staticmethod
    def _fas_rows(mu: Optional[float]) -> List[ExponentPrediction]:
        if mu is None:
            raise RegimeException("fas", "mu is required")
        if not 0 < mu <= 2:
            raise RegimeException("fas", f"mu must lie in (0, 2], got {mu}", details={"mu": mu})
        return [
            ExponentPrediction(name="fas_volatility", formula="(1-mu)/mu", value=(1 - mu) / mu,
                               boundary=mu == 2, note="sqrt(E[sigma^2|S]) ~ S^x"),
            ExponentPrediction(name="fas_stable_index", formula="mu", value=mu,
                               boundary=mu == 2, note="index of the stable limit of K^((mu-1)/mu) r"),
        ]

    @staticmethod
    def _gpg_rows(b: Optional[float]) -> List[ExponentPrediction]:
        if b is None:
            raise RegimeException("gpg", "b is required")
        if not 0 <= b < 1:
            raise RegimeException("gpg", f"b must lie in [0, 1), got {b}", details={"b": b})
        return [
            ExponentPrediction(name="simon_phi", formula="2+b/(1-b)", value=2 + b / (1 - b),
                               note="P(K) ~ K^(-x) before the cut-off; exponential when b = 0"),
            ExponentPrediction(name="gpg_growth_density_tail", formula="3", value=3.0,
                               note="P(g) ~ g^(-3) for large g (b = 0)"),
            ExponentPrediction(name="gpg_small_firm_variance", formula="0", value=0.0,
                               note="variance ~ S^x for small firms"),
            ExponentPrediction(name="gpg_large_firm_variance", formula="-1/2", value=-0.5,
                               note="variance ~ S^x for large firms (crossover)"),
        ]
