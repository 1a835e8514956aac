"""
Estimators and diagnostics that turn growth panels into measured exponents.

Tail exponents from ``hill_estimator`` are CCDF indices: P(X > x) ~ x^-kappa.
A density tail P(x) ~ x^(-1-kappa) therefore has density exponent
1 + kappa, which ``density_tail_exponent`` reports.
"""

import math
from typing import Callable, Iterable, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import signal, stats

from core.exceptions import (
    DegenerateDataException,
    DomainException,
    InsufficientDataException,
    ParameterException,
)
from models.growth_model import FirmComposition, FitResult, GrowthPanel
from models.stats_model import BinnedCurve, DensityCurve, ExponentialFit, QQComparison
from services.base import BaseService
from services.growth_models_service import herfindahl


def _as_array(samples: Iterable[float]) -> np.ndarray:
    return np.asarray(samples, dtype=np.float64).ravel()


def default_hill_k(n: int) -> int:
    """n^(2/3) clamped to [10, n/10]."""
    return int(min(max(10, round(n ** (2.0 / 3.0))), max(10, n // 10)))


def silverman_bandwidth(x: np.ndarray) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5); falls back to sd when the IQR is zero."""
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** (-0.2)


class StatsService(BaseService):
    """Pure estimators over samples, compositions and panels."""

    def __init__(self):
        super().__init__()

    # ── Tails ─────────────────────────────────────────────────────────────

    def hill_estimator(self, samples: Iterable[float], k: Optional[int] = None) -> FitResult:
        """
        Hill estimate of the CCDF tail index from the top-k order statistics.

        Non-positive and non-finite samples are ignored.
        """
        x = _as_array(samples)
        x = np.sort(x[np.isfinite(x) & (x > 0)])
        n = x.size
        if k is None:
            k = default_hill_k(n)
        k = int(k)
        if k < 10:
            raise ParameterException(f"k must be >= 10, got {k}", parameter="k")
        if n < k + 1:
            raise InsufficientDataException(
                f"Hill estimator with k={k} needs {k + 1} positive samples, got {n}",
                required=k + 1,
                available=n,
            )

        threshold = x[n - k - 1]
        top = x[n - k:]
        mean_log = float(np.mean(np.log(top / threshold)))
        if mean_log == 0.0:
            raise DegenerateDataException(
                "top order statistics are all equal; no tail variation",
                details={"k": k, "threshold": float(threshold)},
            )
        exponent = 1.0 / mean_log
        return FitResult(
            exponent=exponent,
            stderr=exponent / math.sqrt(k),
            n_points=k,
            range=(float(threshold), float(top[-1])),
            method="hill",
        )

    def hill_sweep(self, samples: Iterable[float], ks: Optional[Sequence[int]] = None, points: int = 12) -> pd.DataFrame:
        """Hill estimates over several k (log-spaced from 10 to n/10 by default)."""
        x = _as_array(samples)
        x = x[np.isfinite(x) & (x > 0)]
        if ks is None:
            upper = max(11, x.size // 10)
            ks = np.unique(np.geomspace(10, upper, points).astype(int))
        rows = []
        for k in ks:
            fit = self.hill_estimator(x, int(k))
            rows.append({
                "k": int(k),
                "exponent": fit.exponent,
                "stderr": fit.stderr,
                "threshold": fit.range[0],
            })
        return pd.DataFrame(rows, columns=["k", "exponent", "stderr", "threshold"])

    def density_tail_exponent(self, samples: Iterable[float], k: Optional[int] = None) -> FitResult:
        """Density exponent 1 + kappa of a tail whose Hill index is kappa."""
        fit = self.hill_estimator(samples, k)
        return fit.model_copy(update={"exponent": 1.0 + fit.exponent, "method": "hill_density"})

    # ── Slopes and binned curves ──────────────────────────────────────────

    def fit_loglog_slope(self, curve: BinnedCurve) -> FitResult:
        """Least-squares slope of log(value) on log(bin_center)."""
        if len(curve) < 3:
            raise InsufficientDataException(
                f"slope fit needs at least 3 bins, got {len(curve)}", required=3, available=len(curve)
            )
        centers, values = curve.centers, curve.values
        if np.any(values <= 0) or np.any(centers <= 0):
            raise DomainException(
                "log-log fit needs positive bin centers and values",
                details={"min_value": float(values.min()), "min_center": float(centers.min())},
            )
        fit = stats.linregress(np.log(centers), np.log(values))
        stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
        return FitResult(
            exponent=float(fit.slope),
            stderr=stderr,
            n_points=len(curve),
            range=(float(centers[0]), float(centers[-1])),
            intercept=float(fit.intercept),
            method="ols_loglog",
        )

    def fit_central_slope(self, curve: BinnedCurve, fraction: float = 0.8) -> FitResult:
        """Slope over the bins inside the central ``fraction`` of the log-abscissa range."""
        log_c = np.log(curve.centers)
        lo, hi = log_c.min(), log_c.max()
        margin = (1.0 - fraction) / 2.0 * (hi - lo)
        keep = (log_c >= lo + margin - 1e-12) & (log_c <= hi - margin + 1e-12)
        return self.fit_loglog_slope(BinnedCurve(
            points=tuple(p for p, flag in zip(curve.points, keep) if flag), statistic=curve.statistic
        ))

    @staticmethod
    def _dispersion(values: np.ndarray, statistic: str) -> float:
        if statistic == "mean_abs":
            return float(np.mean(np.abs(values)))
        if statistic == "rms":
            return float(np.sqrt(np.mean(values * values)))
        return float(np.std(values, ddof=1)) if values.size > 1 else 0.0

    def size_volatility_curve(
        self,
        panel: GrowthPanel,
        n_bins: int = 20,
        statistic: Literal["mean_abs", "rms", "sd"] = "rms",
        size_column: str = "size_before",
        min_count: Optional[int] = None,
    ) -> BinnedCurve:
        """
        Dispersion of g per logarithmic size bin.

        Records without a log growth (extinctions) are skipped. When the panel
        holds at most ``n_bins`` distinct sizes, each size is its own bin.
        """
        if statistic not in ("mean_abs", "rms", "sd"):
            raise ParameterException(f"unknown statistic '{statistic}'", parameter="statistic")
        if n_bins < 3:
            raise ParameterException(f"n_bins must be >= 3, got {n_bins}", parameter="n_bins")
        min_count = self.settings.min_bin_count if min_count is None else min_count

        frame = panel.records[[size_column, "log_growth"]].dropna()
        frame = frame[frame[size_column] > 0]
        if frame.empty:
            raise InsufficientDataException("panel has no records with a log growth", required=1, available=0)

        sizes = frame[size_column].to_numpy(dtype=np.float64)
        g = frame["log_growth"].to_numpy(dtype=np.float64)

        distinct = np.unique(sizes)
        if distinct.size <= n_bins:
            labels = np.searchsorted(distinct, sizes)
            centers = distinct
        else:
            edges = np.geomspace(distinct[0], distinct[-1], n_bins + 1)
            labels = np.clip(np.searchsorted(edges, sizes, side="right") - 1, 0, n_bins - 1)
            centers = np.sqrt(edges[:-1] * edges[1:])

        points_c, points_v, points_n = [], [], []
        order = np.argsort(labels, kind="stable")
        labels_sorted = labels[order]
        bounds = np.searchsorted(labels_sorted, np.arange(centers.size + 1))
        for b in range(centers.size):
            members = g[order[bounds[b]:bounds[b + 1]]]
            if members.size < min_count or members.size == 0:
                continue
            points_c.append(centers[b])
            points_v.append(self._dispersion(members, statistic))
            points_n.append(members.size)

        self.logger.debug(f"size-volatility curve ({statistic}): {len(points_c)} of {centers.size} bins kept")
        return BinnedCurve.from_arrays(np.array(points_c), np.array(points_v), np.array(points_n), statistic)

    def conditional_curve(
        self,
        x: Iterable[float],
        y: Iterable[float],
        statistic: Literal["mean", "median"] = "median",
        min_count: Optional[int] = None,
    ) -> BinnedCurve:
        """Statistic of y grouped by the exact values of x (e.g. H given K)."""
        min_count = self.settings.min_bin_count if min_count is None else min_count
        frame = pd.DataFrame({"x": _as_array(x), "y": _as_array(y)})
        grouped = frame.groupby("x", sort=True)["y"].agg([statistic, "count"])
        grouped = grouped[grouped["count"] >= min_count]
        return BinnedCurve.from_arrays(
            grouped.index.to_numpy(dtype=np.float64),
            grouped[statistic].to_numpy(dtype=np.float64),
            grouped["count"].to_numpy(),
            statistic,
        )

    def log_binned_density(
        self,
        samples: Iterable[float],
        bins_per_decade: int = 10,
        discrete: bool = False,
        min_count: Optional[int] = None,
    ) -> BinnedCurve:
        """
        Density estimate on logarithmic bins, count / (n * width).

        With ``discrete`` the bin edges are integers and a bin's width is the
        number of integers it covers.
        """
        min_count = self.settings.min_bin_count if min_count is None else min_count
        x = _as_array(samples)
        x = x[np.isfinite(x) & (x > 0)]
        if x.size == 0:
            raise InsufficientDataException("no positive samples to bin", required=1, available=0)
        lo, hi = float(x.min()), float(x.max())
        decades = max(math.log10(hi / lo), 1.0 / bins_per_decade)
        n_edges = int(math.ceil(decades * bins_per_decade)) + 1

        if discrete:
            edges = np.unique(np.floor(np.geomspace(lo, hi + 1, n_edges)))
            if edges[-1] <= hi:
                edges = np.append(edges, hi + 1)
            widths = np.diff(edges)
            centers = np.sqrt(edges[:-1] * (edges[1:] - 1))
        else:
            edges = np.geomspace(lo, hi, n_edges)
            edges[-1] = np.nextafter(hi, np.inf)
            widths = np.diff(edges)
            centers = np.sqrt(edges[:-1] * edges[1:])

        counts, _ = np.histogram(x, bins=edges)
        density = counts / (x.size * widths)
        keep = counts >= max(min_count, 1)
        return BinnedCurve.from_arrays(centers[keep], density[keep], counts[keep], "density")

    def power_law_density_exponent(
        self, samples: Iterable[float], lower: float, discrete: bool = True, bins_per_decade: int = 10
    ) -> FitResult:
        """Density exponent phi from the log-binned density slope over centers >= ``lower``."""
        curve = self.log_binned_density(samples, bins_per_decade=bins_per_decade, discrete=discrete)
        points = tuple(p for p in curve.points if p.center >= lower)
        fit = self.fit_loglog_slope(BinnedCurve(points=points, statistic="density"))
        return fit.model_copy(update={"exponent": -fit.exponent, "method": "log_binned_density"})

    # ── Densities and distances ───────────────────────────────────────────

    def kde_density(
        self, samples: Iterable[float], bandwidth: Optional[float] = None, grid_size: int = 512
    ) -> DensityCurve:
        """
        Gaussian KDE by convolving binned relative frequencies with a
        sampled Gaussian kernel. The grid is ``grid_size`` evenly spaced
        points from min to max, each the center of its bin; the curve is
        renormalized to unit trapezoid integral.
        """
        x = _as_array(samples)
        if x.size < 100:
            raise InsufficientDataException(
                f"KDE needs at least 100 samples, got {x.size}", required=100, available=x.size
            )
        if not np.all(np.isfinite(x)):
            raise DomainException("KDE input contains NaN or infinite values")
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            raise DegenerateDataException("all samples are equal; no spread to estimate a density from")
        if grid_size < 16:
            raise ParameterException(f"grid_size must be >= 16, got {grid_size}", parameter="grid_size")

        bw = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
        if not bw > 0:
            raise ParameterException(f"bandwidth must be > 0, got {bw}", parameter="bandwidth")

        grid = np.linspace(lo, hi, grid_size)
        dx = grid[1] - grid[0]
        edges = np.append(grid - dx / 2, hi + dx / 2)
        counts, _ = np.histogram(x, bins=edges)
        freq = counts / (dx * x.size)

        bw_bins = bw / dx
        half = int(math.ceil(4.0 * bw_bins))
        kernel = signal.windows.gaussian(2 * half + 1, bw_bins)
        kernel /= kernel.sum()
        pdf = signal.convolve(freq, kernel, mode="same", method="auto")
        pdf = np.clip(pdf, 0.0, None)

        curve = DensityCurve.from_arrays(grid, pdf)
        total = curve.integral()
        if total > 0:
            curve = DensityCurve.from_arrays(grid, pdf / total)
        self.logger.debug(f"KDE: n={x.size}, bandwidth={bw:.4g}, grid={grid_size}")
        return curve

    def ks_distance(self, samples: Iterable[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
        """sup |empirical CDF - cdf|."""
        x = _as_array(samples)
        if np.any(np.isnan(x)):
            raise DomainException("KS input contains NaN values")
        if x.size < 10:
            raise InsufficientDataException(
                f"KS distance needs at least 10 samples, got {x.size}", required=10, available=x.size
            )
        return float(stats.kstest(x, cdf).statistic)

    def exponential_fit(self, samples: Iterable[float], discrete: bool = False) -> ExponentialFit:
        """
        Exponential law fitted by its mean, with the KS distance of the fit.

        With ``discrete`` the samples are integers on 1, 2, ... and the fitted
        law is the discretized exponential P(K > k) = exp(-rate k), whose mean
        1 / (1 - exp(-rate)) matches the sample mean. Both CDFs are then step
        functions on the integers and the distance is taken over that support.
        """
        x = _as_array(samples)
        if x.size < 10:
            raise InsufficientDataException("exponential fit needs at least 10 samples", required=10, available=x.size)
        if np.any(np.isnan(x)):
            raise DomainException("exponential fit input contains NaN values")
        mean = float(x.mean())

        if not discrete:
            if not mean > 0:
                raise DegenerateDataException("exponential fit needs a positive mean")
            ks = self.ks_distance(x, stats.expon(scale=mean).cdf)
            return ExponentialFit(rate=1.0 / mean, ks=ks, n_samples=int(x.size))

        if np.any(x < 1) or np.any(x != np.floor(x)):
            raise DomainException("discrete exponential fit needs integer samples >= 1")
        if not mean > 1:
            raise DegenerateDataException("all samples equal 1; no spread to fit a rate to")
        rate = -math.log1p(-1.0 / mean)
        support = np.arange(1, int(x.max()) + 1, dtype=np.float64)
        empirical = np.searchsorted(np.sort(x), support, side="right") / x.size
        fitted = -np.expm1(-rate * support)
        ks = float(np.max(np.abs(empirical - fitted)))
        return ExponentialFit(rate=rate, ks=ks, n_samples=int(x.size), discrete=True)

    def excess_kurtosis(self, samples: Iterable[float]) -> float:
        """Bias-corrected sample excess kurtosis."""
        x = _as_array(samples)
        if x.size < 4:
            raise InsufficientDataException("kurtosis needs at least 4 samples", required=4, available=x.size)
        if np.ptp(x) == 0:
            raise DegenerateDataException("zero variance; kurtosis undefined")
        return float(stats.kurtosis(x, fisher=True, bias=False))

    def qq_compare(
        self,
        samples: Iterable[float],
        reference: Iterable[float],
        n_levels: int = 99,
        central_mass: float = 0.98,
    ) -> QQComparison:
        """
        Quantiles of ``samples`` against ``reference`` on evenly spaced levels
        covering the central mass. Each error is |q - q_ref| divided by
        max(|q_ref|, IQR_ref), so quantiles near zero are compared on the
        scale of the reference spread.
        """
        x, ref = _as_array(samples), _as_array(reference)
        x, ref = x[np.isfinite(x)], ref[np.isfinite(ref)]
        if x.size < 10 or ref.size < 10:
            raise InsufficientDataException("Q-Q comparison needs at least 10 samples on each side", required=10)
        tail = (1.0 - central_mass) / 2.0
        levels = np.linspace(tail, 1.0 - tail, n_levels)
        q = np.quantile(x, levels)
        q_ref = np.quantile(ref, levels)
        iqr_ref = float(np.subtract(*np.quantile(ref, [0.75, 0.25])))
        scale = np.maximum(np.abs(q_ref), iqr_ref)
        if np.any(scale <= 0):
            raise DegenerateDataException("reference sample has no spread")
        error = float(np.max(np.abs(q - q_ref) / scale))
        return QQComparison(
            levels=levels.tolist(), empirical=q.tolist(), reference=q_ref.tolist(), max_relative_error=error
        )

    # ── Compositions ──────────────────────────────────────────────────────

    def effective_units(self, c: FirmComposition) -> float:
        """1/H, the effective number of independent units."""
        return 1.0 / herfindahl(c)
