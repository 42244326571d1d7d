import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from errors import DegenerateFitError, DomainError
from rmt import (
    BulkSpectrum, KineticSpectrum, MPParams, bulk_spectrum, cdf_objective, default_outlier_count,
    detect_bulk_cutoff, fit_mp, fit_rescaled_mp, lambda_map, mp_cdf, mp_density, mp_edges,
    mp_params_from_ratio, mp_quantiles,
)


@pytest.mark.parametrize("sigma2,q", [(1.0, 0.25), (2.0, 0.5), (0.5, 1.0)])
def test_mp_cdf_matches_integrated_density(sigma2, q):
    params = MPParams(sigma2=sigma2, q=q)
    lo, hi = mp_edges(params)
    x = lo + 0.37 * (hi - lo)
    expected, _ = integrate.quad(lambda v: mp_density(v, params), lo, x, limit=200)
    assert mp_cdf(x, params) == pytest.approx(expected, rel=1e-6)
    assert mp_cdf(lo, params) == pytest.approx(0.0, abs=1e-12)
    assert mp_cdf(hi, params) == pytest.approx(1.0, abs=1e-12)


def test_mp_cdf_is_monotone():
    params = MPParams(sigma2=1.0, q=0.3)
    lo, hi = mp_edges(params)
    values = mp_cdf(np.linspace(lo - 0.1, hi + 0.1, 500), params)
    assert np.all(np.diff(values) >= -1e-12)


def test_mp_edges():
    assert mp_edges(MPParams(sigma2=2.0, q=0.25)) == pytest.approx((0.5, 4.5))


def test_q_conventions():
    assert mp_params_from_ratio(0.25).q == pytest.approx(0.25)
    assert mp_params_from_ratio(4.0, convention="observations_over_variables").q == pytest.approx(0.25)
    with pytest.raises(DomainError):
        mp_params_from_ratio(0.25, convention="rows")


def test_quantiles_sit_at_mid_probabilities(mp_params):
    x = mp_quantiles(200, mp_params)
    assert np.all(np.diff(x) <= 0)
    assert_allclose(mp_cdf(x[::-1], mp_params), (np.arange(200) + 0.5) / 200, atol=1e-8)


def test_fit_mp_recovers_parameters():
    truth = MPParams(sigma2=2.0, q=0.3)
    fit = fit_mp(mp_quantiles(500, truth))
    assert fit.sigma2 == pytest.approx(2.0, rel=0.02)
    assert fit.q == pytest.approx(0.3, rel=0.02)
    assert cdf_objective(mp_quantiles(500, truth), fit) < 1e-2


def test_fit_mp_is_scale_equivariant():
    x = mp_quantiles(300, MPParams(sigma2=1.0, q=0.4))
    base, scaled = fit_mp(x), fit_mp(3.0 * x)
    assert scaled.sigma2 == pytest.approx(3.0 * base.sigma2, rel=1e-6)
    assert scaled.q == pytest.approx(base.q, rel=1e-6)


def test_fit_mp_with_fixed_q_uses_the_mean():
    fit = fit_mp([1.0, 2.0, 3.0], q_fixed=0.1)
    assert fit.sigma2 == pytest.approx(2.0)
    assert fit.q == 0.1


def test_fit_mp_input_checks():
    with pytest.raises(DomainError):
        fit_mp(np.linspace(1, 2, 10))
    with pytest.raises(DegenerateFitError):
        fit_mp(np.ones(64))


def test_rescaled_fit_conserves_trace():
    bulk = mp_quantiles(200, MPParams(sigma2=1.0, q=0.25))
    x = np.concatenate([[40.0, 12.0], bulk])
    fit = fit_rescaled_mp(x, 2)
    assert fit.sigma2 == pytest.approx((x.sum() - 52.0) / 200)
    assert fit.q == pytest.approx(0.25, rel=0.05)
    with pytest.raises(DomainError):
        fit_rescaled_mp(x, 150)


def test_default_outlier_count():
    params = MPParams(sigma2=1.0, q=0.25)
    x = np.concatenate([[40.0, 12.0], mp_quantiles(100, params)])
    assert default_outlier_count(x, params) == 2


def test_cutoff_finds_leading_spikes():
    x = np.concatenate([[50.0, 40.0, 30.0], np.linspace(2.0, 0.5, 50)])
    result = detect_bulk_cutoff(x)
    assert result.cutoff_index == 3
    assert not result.no_gap_structure


def test_cutoff_without_spikes_is_zero():
    result = detect_bulk_cutoff(np.linspace(2.0, 0.5, 40))
    assert result.cutoff_index == 0
    assert not result.no_gap_structure


def test_unreadable_gaps_differ_from_a_pure_bulk():
    # the only large gap follows a close pair, so no leading spike run exists
    x = np.concatenate([[10.0, 9.95], np.linspace(3.0, 2.5, 30)])
    result = detect_bulk_cutoff(x)
    assert result.cutoff_index == 0
    assert result.no_gap_structure


def test_cutoff_input_checks():
    with pytest.raises(DomainError):
        detect_bulk_cutoff(np.linspace(0.5, 2.0, 40))
    with pytest.raises(DomainError):
        detect_bulk_cutoff(np.linspace(2.0, 0.5, 5))


def test_lambda_map_values_and_order():
    bulk = BulkSpectrum(bulk_eigenvalues=np.array([2.0, 1.5, 1.0]), x_plus=2.0, x_minus=0.5, cutoff_index=0)
    spectrum = lambda_map(bulk)
    expected = np.sort(1.0 / (np.array([2.0, 1.5, 1.0]) - 0.5) - 1.0 / 1.5)
    assert_allclose(spectrum.lambdas, expected)
    assert spectrum.lambdas[0] == 0.0
    assert spectrum.has_edge_mode
    assert_allclose(spectrum.weights, np.full(3, 1.0 / 3))


def test_lambda_map_names_the_bad_index():
    bulk = BulkSpectrum(bulk_eigenvalues=np.array([2.0, 1.0, 0.5]), x_plus=2.0, x_minus=0.6, cutoff_index=0)
    with pytest.raises(DomainError) as info:
        lambda_map(bulk)
    assert info.value.details["index"] == 2


def test_bulk_spectrum_lower_edge_rules():
    x = np.array([10.0, 2.0, 1.5, 1.2, 1.0])
    with_params = bulk_spectrum(x, 1, MPParams(sigma2=1.0, q=0.25))
    assert with_params.x_minus == pytest.approx(0.25)
    assert with_params.x_plus == 2.0
    fallback = bulk_spectrum(x, 1)
    assert fallback.x_minus == pytest.approx(1.0 - 0.2)
    with pytest.raises(DomainError):
        bulk_spectrum(x, 4)


def test_kinetic_spectrum_validation():
    with pytest.raises(DomainError):
        KineticSpectrum(np.array([1.0, 0.5]))
    with pytest.raises(DomainError):
        KineticSpectrum(np.array([-0.1, 0.5]))
