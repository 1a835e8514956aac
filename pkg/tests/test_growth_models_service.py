import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import special, stats

from core.config import get_settings
from core.exceptions import DomainException, ParameterException, ShapeException
from models.growth_model import (
    FasConfig,
    FirmComposition,
    GpgConfig,
    GrowthRecord,
    OpportunitiesConfig,
    PsiMixtureConfig,
    SimonConfig,
    SuttonConfig,
    WyartBouchaudConfig,
)
from models.oracle_model import MixtureSpec
from models.randkit_model import RngStream
from services.base import build_model
from services.growth_models_service import (
    GrowthModelsService,
    aggregate_growth,
    firm_volatility,
    herfindahl,
    merge_compositions,
    replication_law,
)


# ── Compositions ──────────────────────────────────────────────────────────

def test_herfindahl_single_unit_is_one():
    assert herfindahl(FirmComposition(units=(3.5,))) == 1.0


def test_herfindahl_equal_units():
    assert herfindahl(FirmComposition(units=(2.0,) * 8)) == pytest.approx(1 / 8, rel=1e-12)


def test_herfindahl_dominant_unit_approaches_one():
    h = herfindahl(FirmComposition(units=(1e9, 1.0, 1.0)))
    assert 1.0 / 3 <= h <= 1.0
    assert h > 0.999


def test_composition_rejects_empty_and_non_positive():
    with pytest.raises(ValidationError):
        FirmComposition(units=())
    with pytest.raises(ValidationError):
        FirmComposition(units=(1.0, 0.0))


def test_firm_volatility_is_sigma_sqrt_h():
    c = FirmComposition(units=(1.0, 1.0, 2.0))
    assert firm_volatility(c, 0.2) == pytest.approx(0.2 * math.sqrt(6.0 / 16.0))
    with pytest.raises(ParameterException):
        firm_volatility(c, 0.0)


def test_aggregate_growth_is_share_weighted():
    c = FirmComposition(units=(1.0, 3.0))
    record = aggregate_growth(c, [0.1, -0.1])
    assert record.pct_growth == pytest.approx(0.25 * 0.1 - 0.75 * 0.1)
    assert record.log_growth == pytest.approx(math.log1p(-0.05))
    assert record.size_after == pytest.approx(4.0 * 0.95)
    assert record.unit_count == 2
    assert record.herfindahl == pytest.approx(10.0 / 16.0)


def test_aggregate_growth_uniform_rate():
    c = FirmComposition(units=(0.5, 7.0, 2.25))
    assert aggregate_growth(c, [0.3] * 3).pct_growth == pytest.approx(0.3, rel=1e-12)


def test_aggregate_growth_shape_mismatch():
    with pytest.raises(ShapeException) as exc:
        aggregate_growth(FirmComposition(units=(1.0, 2.0)), [0.1])
    assert exc.value.details == {"expected": 2, "actual": 1}


def test_aggregate_growth_rejects_total_loss():
    with pytest.raises(DomainException):
        aggregate_growth(FirmComposition(units=(1.0, 2.0)), [0.1, -1.0])


def test_growth_record_consistency():
    with pytest.raises(ValidationError):
        GrowthRecord(size_before=1.0, size_after=1.1, log_growth=0.1, pct_growth=0.1, unit_count=1, herfindahl=1.0)
    extinct = GrowthRecord(size_before=3.0, size_after=0.0, log_growth=None, pct_growth=-1.0, unit_count=3,
                           herfindahl=1 / 3)
    assert extinct.log_growth is None


def test_merge_recomputes_aggregates():
    a = FirmComposition(units=(1.0, 1.0))
    b = FirmComposition(units=(2.0,))
    merged = merge_compositions(a, b)
    assert merged.size == 4.0
    assert merged.unit_count == 3
    assert herfindahl(merged) == pytest.approx(6.0 / 16.0)


def test_replication_law_is_normalized():
    for mu in (1.2, 1.5, 1.9):
        p_zero, z_tail = replication_law(mu)
        assert 0 < p_zero < 1
        # P(n) = n^(-1-mu) / zeta(mu) for n >= 1 sums to zeta(1+mu) / zeta(mu)
        assert p_zero + z_tail / special.zeta(mu) == pytest.approx(1.0, rel=1e-12)


# ── Wyart-Bouchaud ────────────────────────────────────────────────────────

def test_wb_panel_shape_and_invariants(models):
    panel = models.simulate_wyart_bouchaud(WyartBouchaudConfig(n_firms=5000, seed=1))
    records = panel.records
    assert len(panel) == 5000
    assert records["firm_id"].is_unique
    assert (records["unit_count"] >= 1).all()
    assert (records["herfindahl"] >= 1.0 / records["unit_count"] - 1e-12).all()
    assert (records["herfindahl"] <= 1.0).all()
    assert (records["size_before"] >= records["unit_count"]).all()
    np.testing.assert_allclose(records["pct_growth"], np.expm1(records["log_growth"]), rtol=1e-12)


def test_wb_is_deterministic_and_seed_sensitive(models):
    cfg = WyartBouchaudConfig(n_firms=3000, seed=11)
    a = models.simulate(cfg).records
    b = models.simulate(cfg).records
    c = models.simulate(cfg.model_copy(update={"seed": 12})).records
    assert a.equals(b)
    assert not a.equals(c)


def test_wb_independent_of_worker_count(settings_env, randkit):
    cfg = WyartBouchaudConfig(n_firms=3000, seed=5)
    settings_env(GRANULAR_GROWTH_THREADS=1, GRANULAR_GROWTH_BLOCK_SIZE=256)
    single = GrowthModelsService(randkit).simulate(cfg).records
    settings_env(GRANULAR_GROWTH_THREADS=4, GRANULAR_GROWTH_BLOCK_SIZE=256)
    pooled = GrowthModelsService(randkit).simulate(cfg).records
    assert single.equals(pooled)


def test_wb_growth_variance_is_sigma_squared_h(models):
    cfg = WyartBouchaudConfig(n_firms=20_000, sigma_unit=0.3, seed=2)
    records = models.simulate(cfg).records
    z = records["log_growth"] / (0.3 * np.sqrt(records["herfindahl"]))
    assert np.std(z) == pytest.approx(1.0, abs=0.03)


def test_wb_unit_shocks_match_conditional_gaussian(models):
    cfg = WyartBouchaudConfig(n_firms=20_000, sigma_unit=0.3, unit_shocks=True, seed=3)
    records = models.simulate(cfg).records
    z = records["log_growth"] / (0.3 * np.sqrt(records["herfindahl"]))
    assert np.std(z) == pytest.approx(1.0, abs=0.03)


def test_wb_fixed_unit_counts(models):
    cfg = WyartBouchaudConfig(mu=1.4, n_firms=200, k_grid=[5, 50, 500], seed=4)
    records = models.simulate(cfg).records
    assert len(records) == 600
    assert sorted(records["unit_count"].unique()) == [5, 50, 500]
    assert (records.groupby("unit_count").size() == 200).all()


@pytest.mark.slow
def test_wb_single_unit_firms_have_gaussian_growth(models, stats_service):
    cfg = WyartBouchaudConfig(mu=1.4, sigma_unit=0.25, n_firms=200_000, k_grid=[1], seed=17)
    records = models.simulate(cfg).records
    assert (records["herfindahl"] == 1.0).all()
    g = records["log_growth"].to_numpy()
    assert stats_service.ks_distance(g, stats.norm(scale=0.25).cdf) < 0.005


def test_wb_regime_is_validated():
    with pytest.raises(ValidationError):
        WyartBouchaudConfig(alpha=1.5, mu=1.4)
    with pytest.raises(ParameterException):
        build_model(WyartBouchaudConfig, alpha=1.2, mu=2.5)
    # fixed-K runs do not use alpha
    assert WyartBouchaudConfig(alpha=3.0, mu=1.4, k_grid=[10]).k_grid == [10]


# ── Simon / GPG ───────────────────────────────────────────────────────────

def test_simon_conserves_units(models):
    k = models.simulate_simon(SimonConfig(b=0.1, n_steps=20_000, seed=1))
    assert k.sum() == 20_000
    assert (k >= 1).all()
    assert abs(k.size - 2000) < 200


def test_simon_with_seed_firms(models):
    k = models.simulate_simon(SimonConfig(b=0.0, n_steps=5_000, n_seed_firms=100, seed=2))
    assert k.size == 100
    assert k.sum() == 5_100


def test_simon_b_zero_needs_seed_firms(models):
    with pytest.raises(ParameterException):
        models.simulate_simon(SimonConfig(b=0.0, n_steps=10, n_seed_firms=0))


def test_simon_default_seed_firms():
    assert SimonConfig(b=0.0).seed_firms == 10_000
    assert SimonConfig(b=0.2).seed_firms == 0


def test_simon_panel_is_static(models):
    panel = models.simulate(SimonConfig(b=0.2, n_steps=5_000, seed=3))
    assert (panel.records["log_growth"] == 0).all()
    assert (panel.records["size_before"] == panel.records["unit_count"]).all()


def test_gpg_panel(models):
    cfg = GpgConfig(b=0.0, n_steps=20_000, n_seed_firms=2_000, seed=4)
    records = models.simulate(cfg).records
    assert len(records) == 2_000
    assert records["unit_count"].sum() == 22_000
    assert np.isfinite(records["log_growth"]).all()
    assert (records["herfindahl"] <= 1).all()


def test_gpg_equal_units_have_h_one_over_k(models):
    cfg = GpgConfig(b=0.0, n_steps=5_000, n_seed_firms=500, unit_log_sd=0.0, seed=5)
    records = models.simulate(cfg).records
    np.testing.assert_allclose(records["herfindahl"], 1.0 / records["unit_count"], rtol=1e-12)


def test_gpg_window_scales_shock_variance(models):
    base = dict(b=0.0, n_steps=10_000, n_seed_firms=10_000, unit_log_sd=0.0, seed=6)
    one = models.simulate(GpgConfig(**base)).records["log_growth"]
    four = models.simulate(GpgConfig(measure_window=4, **base)).records["log_growth"]
    assert np.std(four) / np.std(one) == pytest.approx(2.0, rel=0.1)


# ── psi mixtures and opportunities ────────────────────────────────────────

def test_psi_one_is_laplace(models, oracle):
    panel = models.simulate(PsiMixtureConfig(psi=1.0, lam=2.0, sigma=0.5, n_firms=40_000, seed=7))
    assert oracle.laplace_scale_mixture_check(panel.column("log_growth"), lam=2.0, sigma=0.5) < 0.015


def test_psi_records_are_single_unit_placeholders(models):
    records = models.simulate(PsiMixtureConfig(psi=-1.0, n_firms=1000, seed=8)).records
    assert (records["size_before"] == 1).all()
    assert (records["herfindahl"] == 1).all()


@pytest.mark.filterwarnings("error::RuntimeWarning")
def test_psi_negative_leaves_unrepresentable_growth_absent(models):
    records = models.simulate(PsiMixtureConfig(psi=-2.0, lam=1.0, sigma=1.0, n_firms=200_000, seed=22)).records
    assert records["log_growth"].notna().all()
    absent = records["pct_growth"].isna()
    assert absent.any()
    assert records["size_after"].isna().equals(absent)
    kept = records[~absent]
    assert np.isfinite(kept[["pct_growth", "size_after"]].to_numpy()).all()
    assert (kept["pct_growth"] > -1).all()
    np.testing.assert_allclose(kept["pct_growth"], np.expm1(kept["log_growth"]), rtol=1e-12)
    g = records.loc[absent, "log_growth"]
    assert ((g > 700) | (g < -30)).all()


def test_panel_rejects_infinite_growth(make_panel):
    with np.errstate(over="ignore"):
        with pytest.raises(ValidationError):
            make_panel([1.0, 1.0], [0.1, 800.0])


def test_psi_lambda_alias():
    assert PsiMixtureConfig(**{"lambda": 3.0}).lam == 3.0
    with pytest.raises(ValidationError):
        PsiMixtureConfig(**{"lambda": 0.0})


def test_opportunities_variance(models):
    cfg = OpportunitiesConfig(mean_opportunities=20.0, sigma=0.05, n_firms=40_000, seed=9)
    g = models.simulate(cfg).column("log_growth")
    assert np.var(g) == pytest.approx(0.05 ** 2 * 20.0, rel=0.08)


# ── Sutton ────────────────────────────────────────────────────────────────

def test_sutton_records(models):
    cfg = SuttonConfig(size_grid=[50, 120], samples_per_size=300, seed=10)
    records = models.simulate(cfg).records
    assert len(records) == 600
    assert set(records["size_before"]) == {50.0, 120.0}
    assert (records["herfindahl"] >= 1.0 / records["unit_count"] - 1e-12).all()
    mean_k = records.groupby("size_before")["unit_count"].mean()
    assert mean_k[120.0] > mean_k[50.0]


def test_sutton_without_shocks_has_zero_growth(models):
    records = models.simulate(SuttonConfig(size_grid=[30], samples_per_size=50, unit_shock_sd=0.0)).records
    assert (records["pct_growth"] == 0).all()


def test_sutton_laplace_shocks(models):
    cfg = SuttonConfig(size_grid=[200], samples_per_size=500, unit_shock_kind="laplace", unit_shock_sd=0.05, seed=11)
    records = models.simulate(cfg).records
    assert np.isfinite(records["log_growth"]).all()


def test_sutton_total_loss_is_a_domain_error(models):
    with pytest.raises(DomainException):
        models.simulate(SuttonConfig(size_grid=[100], samples_per_size=200, unit_shock_sd=0.5, seed=12))


def test_part_size_profile_tracks_bose_einstein(models):
    profile = models.part_size_profile(200, 200, RngStream(seed=13))
    assert list(profile.columns) == ["part_size", "mean_multiplicity", "bose_einstein"]
    assert len(profile) == 200
    ones = profile.iloc[0]
    assert 0.5 < ones["mean_multiplicity"] / ones["bose_einstein"] < 2.0
    assert (profile["part_size"] * profile["mean_multiplicity"]).sum() == pytest.approx(200.0)


# ── FAS ───────────────────────────────────────────────────────────────────

def test_fas_point_mass_has_no_growth(models):
    records = models.simulate(FasConfig(k0_grid=[20, 40], samples=50, point_mass=True, seed=14)).records
    assert len(records) == 100
    assert (records["pct_growth"] == 0).all()
    np.testing.assert_allclose(records["herfindahl"], 1.0 / records["unit_count"])


def test_fas_extinctions(models):
    mu = 1.5
    p_zero, _ = replication_law(mu)
    records = models.simulate(FasConfig(mu=mu, k0_grid=[1], samples=4000, n_periods=3, seed=15)).records
    first = records[records["period"] == 0]
    extinct = first["log_growth"].isna()
    assert extinct.mean() == pytest.approx(p_zero, abs=0.03)
    assert (first.loc[extinct, "pct_growth"] == -1).all()
    assert (first.loc[extinct, "size_after"] == 0).all()
    survivors = set(first.loc[~extinct, "firm_id"])
    assert set(records.loc[records["period"] == 1, "firm_id"]) == survivors


def test_fas_mean_growth_is_near_zero(models):
    records = models.simulate(FasConfig(mu=1.8, k0_grid=[1000], samples=500, seed=16)).records
    assert abs(records["pct_growth"].median()) < 0.05


def test_fas_regime_is_validated():
    with pytest.raises(ValidationError):
        FasConfig(mu=2.0)


def test_blocks_respect_unit_budget(settings_env, models):
    settings_env(GRANULAR_GROWTH_BLOCK_SIZE=16)
    assert models._firms_per_block(10_000) == 1
    assert models._firms_per_block(1) == 16
    assert get_settings().block_size == 16


def test_gpg_growth_is_leptokurtic(models, stats_service):
    cfg = GpgConfig(b=0.0, n_steps=100_000, n_seed_firms=10_000, seed=17)
    g = models.simulate(cfg).column("log_growth")
    assert stats_service.excess_kurtosis(g) > 0.5


# ── Acceptance scale ──────────────────────────────────────────────────────

@pytest.mark.slow
@pytest.mark.parametrize("psi", [0.0, 1.0, -1.0])
def test_psi_mixture_matches_its_distribution_function(models, oracle, stats_service, psi):
    cfg = PsiMixtureConfig(psi=psi, lam=0.5, sigma=1.0, n_firms=1_000_000, seed=18)
    g = models.simulate(cfg).column("log_growth")
    cdf = oracle.mixture_cdf(MixtureSpec(lam=0.5, psi=psi, sigma=1.0))
    assert stats_service.ks_distance(g, cdf) < 0.005


@pytest.mark.slow
def test_sutton_volatility_scaling(models, stats_service):
    panel = models.simulate(SuttonConfig(seed=19))
    curve = stats_service.size_volatility_curve(panel, statistic="sd")
    assert len(curve) == 8
    assert stats_service.fit_loglog_slope(curve).exponent == pytest.approx(-0.25, abs=0.04)


@pytest.mark.slow
def test_sutton_laplace_kurtosis_decays_slowly(models, stats_service):
    cfg = SuttonConfig(
        size_grid=[100, 5000], samples_per_size=20_000, unit_shock_kind="laplace", unit_shock_sd=0.05, seed=20,
    )
    records = models.simulate(cfg).records
    by_size = {
        size: stats_service.excess_kurtosis(group["log_growth"])
        for size, group in records.groupby("size_before")
    }
    assert by_size[5000.0] < by_size[100.0]
    assert by_size[5000.0] > 0.05


@pytest.mark.slow
def test_fas_volatility_scaling(models, stats_service):
    mu = 1.5
    records = models.simulate(FasConfig(mu=mu, k0_grid=[300, 1000, 3000, 10_000], samples=4000, seed=21)).records
    curve = stats_service.conditional_curve(records["unit_count"], records["pct_growth"].abs(), statistic="median")
    assert len(curve) == 4
    assert stats_service.fit_loglog_slope(curve).exponent == pytest.approx((1 - mu) / mu, abs=0.05)
