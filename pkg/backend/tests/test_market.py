import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import DomainError, InputDataError
from market import (
    GBMParams, PricePanel, build_beta_panel, correlation_matrix, estimate_gbm, load_prices, log_returns,
    mean_off_diagonal, simulate_gbm, synth_panel, write_prices,
)
from rmt import MPParams, mp_ks_distance
from speclin import eigh
from utils import make_rng


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_load_sample_panel(sample_panel_path):
    panel = load_prices(sample_panel_path)
    assert panel.n_assets == 20
    assert panel.n_days == 250
    assert panel.tickers[0] == "AAPL"
    assert panel.dates[0] == "2019-01-02"
    assert np.all(panel.prices > 0)


def test_assets_with_gaps_are_dropped(tmp_path):
    rows = ["date,AAA,BBB,CCC"]
    for k in range(10):
        ccc = "" if k == 4 else f"{30 + k}"
        rows.append(f"2020-01-{k + 1:02d},{10 + k},{20 + 0.5 * k},{ccc}")
    panel = load_prices(write_csv(tmp_path / "gaps.csv", "\n".join(rows) + "\n"))
    assert panel.tickers == ["AAA", "BBB"]
    assert panel.n_days == 10


def test_partial_coverage_drops_dates_instead(tmp_path):
    rows = ["date,AAA,BBB"]
    for k in range(10):
        bbb = "" if k == 4 else f"{20 + k}"
        rows.append(f"2020-01-{k + 1:02d},{10 + k},{bbb}")
    panel = load_prices(write_csv(tmp_path / "gaps.csv", "\n".join(rows) + "\n"), min_coverage=0.8)
    assert panel.tickers == ["AAA", "BBB"]
    assert panel.n_days == 9
    assert "2020-01-05" not in panel.dates


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(InputDataError):
        load_prices(str(tmp_path / "missing.csv"))
    with pytest.raises(InputDataError, match="no data rows"):
        load_prices(write_csv(tmp_path / "header.csv", "date,AAA,BBB\n"))
    with pytest.raises(InputDataError, match="no data rows"):
        load_prices(write_csv(tmp_path / "empty.csv", ""))


def test_bad_first_column(tmp_path):
    text = "day,AAA,BBB\n" + "".join(f"2020-01-{k + 1:02d},1,2\n" for k in range(10))
    with pytest.raises(InputDataError):
        load_prices(write_csv(tmp_path / "bad.csv", text))


def test_write_and_load_round_trip(tmp_path):
    panel = synth_panel("independent", 4, 30, seed=1)
    path = str(tmp_path / "panel.csv")
    write_prices(panel, path, {"seed": 1, "kind": "independent"})
    with open(path, encoding="utf-8") as f:
        assert f.readline().startswith("# kind: independent")
    loaded = load_prices(path)
    assert loaded.tickers == panel.tickers
    assert loaded.dates == panel.dates
    assert_allclose(loaded.prices, panel.prices, rtol=1e-9)


def test_correlation_matrix_properties(sample_panel_path):
    corr = correlation_matrix(log_returns(load_prices(sample_panel_path))).entries
    assert np.array_equal(np.diag(corr), np.ones(20))
    assert np.array_equal(corr, corr.T)
    assert np.all(np.abs(corr) <= 1.0)


def test_zero_variance_asset_is_named():
    prices = np.vstack([np.linspace(10, 20, 12), np.full(12, 5.0)])
    panel = PricePanel(tickers=["AAA", "FLAT"], dates=[f"2020-01-{k + 1:02d}" for k in range(12)], prices=prices)
    with pytest.raises(DomainError) as info:
        correlation_matrix(log_returns(panel))
    assert info.value.details["ticker"] == "FLAT"


def test_simulate_gbm_without_noise_is_deterministic_growth():
    params = GBMParams(mu=0.01, sigma=0.2, s0=50.0)
    path = simulate_gbm(params, 5, np.zeros(4))
    assert_allclose(path, 50.0 * np.exp((0.01 - 0.02) * np.arange(5)))


def test_estimate_gbm_recovers_volatility():
    params = GBMParams(mu=0.0005, sigma=0.02, s0=100.0)
    path = simulate_gbm(params, 2000, make_rng(5).standard_normal(1999))
    est = estimate_gbm(path)
    assert est.sigma == pytest.approx(0.02, rel=0.1)
    assert est.s0 == 100.0


def test_beta_zero_returns_the_real_panel(sample_panel_path):
    real = load_prices(sample_panel_path)
    assert np.array_equal(build_beta_panel(real, 0.0, seed=1).prices, real.prices)


def test_beta_panel_is_seeded(sample_panel_path):
    real = load_prices(sample_panel_path)
    a = build_beta_panel(real, 0.5, seed=9).prices
    b = build_beta_panel(real, 0.5, seed=9).prices
    assert np.array_equal(a, b)
    with pytest.raises(DomainError):
        build_beta_panel(real, 1.5, seed=9)


def test_beta_minus_one_is_fully_correlated(sample_panel_path):
    real = load_prices(sample_panel_path)
    corr = correlation_matrix(log_returns(build_beta_panel(real, -1.0, seed=2)))
    assert mean_off_diagonal(corr) > 0.9


def test_beta_plus_one_recovers_mp():
    real = synth_panel("shared", 100, 400, seed=4)
    mixed = build_beta_panel(real, 1.0, seed=8)
    eigenvalues = eigh(correlation_matrix(log_returns(mixed))).eigenvalues
    params = MPParams(sigma2=float(np.mean(eigenvalues)), q=100 / 399)
    assert mp_ks_distance(eigenvalues, params) < 0.1


def test_synthetic_panel_kinds():
    shared = correlation_matrix(log_returns(synth_panel("shared", 6, 100, seed=3)))
    assert mean_off_diagonal(shared) == pytest.approx(1.0, abs=1e-9)

    block = correlation_matrix(log_returns(synth_panel("block", 10, 500, seed=3, block_rho=0.6))).entries
    within = block[:5, :5][~np.eye(5, dtype=bool)].mean()
    across = block[:5, 5:].mean()
    assert 0.45 < within < 0.75
    assert abs(across) < 0.15

    with pytest.raises(DomainError):
        synth_panel("lognormal", 6, 100, seed=3)
