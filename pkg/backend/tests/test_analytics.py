import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special
from scipy.integrate import trapezoid

from analytics import (
    SpectralDensity, a_closed, convolve_hg, critical_temperature, critical_temperature_details, edge_epsilon,
    fit_tail, g_bar, h_bar, h_bar_discrete, h_bar_mp, h_of_t, h_series, log_slope, numerical_laplace,
    predicted_K, predicted_correlation, solve_g_volterra, solve_volterra, tail_exponent, uniform_grid,
)
from errors import DomainError, StepSizeError, SuperCriticalError
from rmt import BulkSpectrum, MPParams, lambda_map, mp_edges, mp_quantiles
from series import ObservableSeries


@pytest.mark.parametrize("p", [0.1, 1.0, 10.0])
@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_closed_form_laplace_transform(p, sigma):
    rho = SpectralDensity.mp_closed(sigma)
    assert numerical_laplace(rho, p) == pytest.approx(h_bar_mp(p, sigma), rel=1e-4)


def test_discrete_laplace_transform():
    rho = SpectralDensity.discrete([0.5, 1.0, 2.0])
    expected = np.mean(1.0 / (1.0 + 2.0 * np.array([0.5, 1.0, 2.0])))
    assert numerical_laplace(rho, 1.0) == pytest.approx(expected, rel=1e-8)
    assert h_bar(1.0, rho) == pytest.approx(expected, rel=1e-12)


def test_closed_form_h_is_undefined_at_zero():
    with pytest.raises(DomainError):
        h_of_t(SpectralDensity.mp_closed(1.0), 0.0)
    assert h_of_t(SpectralDensity.discrete([0.0, 1.0]), 0.0) == pytest.approx(1.0)


def test_closed_form_h_tail_is_three_halves():
    fit = fit_tail(h_series(SpectralDensity.mp_closed(1.0), uniform_grid(2000.0, 1.0)[1:]))
    assert fit.exponent == pytest.approx(-1.5, abs=0.01)
    assert fit.r2 > 0.999


def test_critical_temperature_closed_form(rng):
    for a0, sigma in zip(rng.uniform(0.1, 10.0, 10), rng.uniform(0.1, 5.0, 10)):
        assert critical_temperature(a0, SpectralDensity.mp_closed(sigma)) == pytest.approx(a0 * sigma, rel=1e-12)


def test_critical_temperature_excludes_edge_modes():
    rho = SpectralDensity.discrete([0.0, 0.5, 1.0], edge_width=2.0)
    assert edge_epsilon(rho) == pytest.approx(1.0 / 6.0)
    t_c, hb0, excluded = critical_temperature_details(2.0, rho)
    assert hb0 == pytest.approx((1.0 + 0.5) / 3.0)
    assert t_c == pytest.approx(2.0)
    assert excluded == 1
    t_c, hb0, excluded = critical_temperature_details(2.0, rho, epsilon=0.75)
    assert excluded == 2
    assert t_c == pytest.approx(6.0)
    with pytest.raises(DomainError):
        critical_temperature(2.0, SpectralDensity.discrete([0.0]))


def test_h_bar_discrete_divergence():
    value, excluded = h_bar_discrete(0.0, SpectralDensity.discrete([0.0, 1.0]))
    assert math.isinf(value)
    assert excluded == 0


def test_g_bar_positivity_bound():
    rho = SpectralDensity.mp_closed(1.0)
    assert g_bar(0.0, 2.0, 1.0, rho) == pytest.approx(0.5 / (2.0 - 1.0))
    with pytest.raises(SuperCriticalError):
        g_bar(0.0, 2.0, 2.5, rho)


def test_volterra_at_zero_temperature_is_h_over_a0(mp_density_discrete):
    times = uniform_grid(5.0, 0.05)
    sol = solve_volterra(2.0, 0.0, mp_density_discrete, times)
    assert_allclose(sol.G.values, sol.H.values / 2.0, rtol=1e-12)
    assert sol.G.values[0] == pytest.approx(0.5)


def test_volterra_single_rate_decay():
    # H = exp(-2t), so G = exp(-(2 - 2T/a0) t) / a0
    times = uniform_grid(10.0, 0.01)
    g = solve_g_volterra(2.0, 1.0, SpectralDensity.discrete([1.0]), times)
    assert_allclose(g.values, 0.5 * np.exp(-times), rtol=1e-3)


def test_volterra_single_rate_growth():
    times = uniform_grid(10.0, 0.01)
    g = solve_g_volterra(1.0, 1.0, SpectralDensity.discrete([0.25]), times)
    assert_allclose(g.values, np.exp(1.5 * times), rtol=1e-3)
    assert log_slope(g) == pytest.approx(1.5, rel=1e-3)


def test_volterra_matches_laplace_solution():
    rho = SpectralDensity.discrete(np.linspace(0.05, 2.0, 40))
    a0 = 1.0
    temperature = 0.5 * critical_temperature(a0, rho)
    times = uniform_grid(40.0, 0.005)
    g = solve_g_volterra(a0, temperature, rho, times)
    transform = trapezoid(np.exp(-times) * g.values, times)
    assert transform == pytest.approx(g_bar(1.0, a0, temperature, rho), rel=1e-3)


def test_volterra_singular_step():
    with pytest.raises(StepSizeError):
        solve_volterra(1.0, 100.0, SpectralDensity.discrete([0.1, 0.2]), uniform_grid(1.0, 0.1))


def test_volterra_grid_checks():
    rho = SpectralDensity.discrete([0.5])
    with pytest.raises(DomainError):
        solve_volterra(1.0, 0.1, rho, np.array([0.1, 0.2, 0.3]))
    with pytest.raises(DomainError):
        solve_volterra(1.0, 0.1, rho, np.array([0.0, 0.1, 0.3]))
    with pytest.raises(DomainError):
        solve_volterra(1.0, 0.1, SpectralDensity.mp_closed(1.0), uniform_grid(1.0, 0.1))


def test_a_closed_recovers_a0(mp_density_discrete):
    a0 = 2.0
    temperature = 0.5 * critical_temperature(a0, mp_density_discrete)
    sol = solve_volterra(a0, temperature, mp_density_discrete, uniform_grid(20.0, 0.05))
    recon = a_closed(sol.G, sol.H, sol.F, temperature)
    assert_allclose(recon.values, a0, rtol=1e-9)


def test_convolution_reproduces_solver_f(mp_density_discrete):
    a0 = 2.0
    sol = solve_volterra(a0, 0.3, mp_density_discrete, uniform_grid(10.0, 0.05))
    assert_allclose(convolve_hg(mp_density_discrete, sol.G).values, sol.F.values, rtol=1e-12, atol=1e-15)


def test_a_closed_rejects_nonpositive_g():
    t = uniform_grid(1.0, 0.5)
    g = ObservableSeries(t, np.array([1.0, 0.0, 1.0]), 0, "G")
    h = ObservableSeries(t, np.ones(3), 0, "H")
    f = ObservableSeries(t, np.ones(3), 0, "F")
    with pytest.raises(DomainError):
        a_closed(g, h, f, 0.1)


def test_quenched_k_is_the_mode_average():
    rho = SpectralDensity.discrete([0.0, 0.3, 1.1])
    t = uniform_grid(5.0, 0.1)
    g = ObservableSeries(t, 1.0 + t, 0, "G")
    per_mode = np.mean([predicted_correlation(rho, g, mu, c=1.5).values for mu in range(3)], axis=0)
    assert_allclose(predicted_K(rho, g, c=1.5).values, per_mode, rtol=1e-12)
    with pytest.raises(DomainError):
        predicted_correlation(rho, g, 3)


def test_power_law_tail_fit():
    t = uniform_grid(100.0, 0.1)
    values = np.ones_like(t)
    values[1:] = t[1:] ** -1.5
    series = ObservableSeries(t, values, 0, "G")
    fit = fit_tail(series)
    assert fit.exponent == pytest.approx(-1.5, abs=1e-10)
    assert fit.curvature == pytest.approx(0.0, abs=1e-8)
    assert fit.n_points == 250
    exponent, stderr = tail_exponent(series)
    assert exponent == pytest.approx(-1.5, abs=1e-10)
    assert stderr < 1e-8


def test_tail_fit_input_checks():
    t = uniform_grid(2.0, 0.1)
    with pytest.raises(DomainError):
        fit_tail(ObservableSeries(t, np.ones_like(t), 0, "G"))
    t = uniform_grid(100.0, 0.1)
    values = np.ones_like(t)
    values[-5] = -1.0
    with pytest.raises(DomainError):
        fit_tail(ObservableSeries(t, values, 0, "G"))


def test_product_weights_are_exact_for_linear_g():
    rates = np.array([1e-5, 0.3, 1.0, 40.0])
    rho = SpectralDensity.discrete(rates)
    t = uniform_grid(5.0, 0.1)
    k = 2.0 * rates[:, None]
    ones = convolve_hg(rho, ObservableSeries(t, np.ones_like(t), 0, "G"))
    assert_allclose(ones.values, np.mean(-np.expm1(-k * t) / k, axis=0), rtol=1e-10, atol=1e-14)
    ramp = convolve_hg(rho, ObservableSeries(t, t.copy(), 0, "G"))
    assert_allclose(ramp.values, np.mean((k * t + np.expm1(-k * t)) / k ** 2, axis=0), rtol=1e-10, atol=1e-14)


def test_solver_drops_edge_modes_but_keeps_their_weight():
    rho = SpectralDensity.discrete([0.0, 0.5, 1.0], edge_width=2.0)
    sol = solve_volterra(2.0, 0.1, rho, uniform_grid(2.0, 0.1))
    assert sol.G.meta["excluded_modes"] == 1
    assert sol.H.values[0] == pytest.approx(2.0 / 3.0)
    assert sol.G.values[0] == pytest.approx((2.0 / 3.0) / 2.0)
    assert_allclose(convolve_hg(rho, sol.G).values, sol.F.values, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("p", [0.5, 1.0, 4.0])
def test_mapped_mp_laplace_transform(p, mp_density_discrete):
    # sigma^2 = 1, q = 1/4 mapped with the theoretical edges
    s = math.sqrt(p)
    assert h_bar(p, mp_density_discrete) == pytest.approx((s + 5.0) / ((s + 3.0) * (s + 1.0) ** 2), rel=1e-3)


def _mapped_mp_g(a0, temperature, t):
    """Continuum G(t) for the sigma^2 = 1, q = 1/4 mapped density, where a0 G_bar = (s + 5) / Q(s), s = sqrt(p)."""
    kappa = 2.0 * temperature / a0
    coeffs = [1.0, 5.0, 7.0 - kappa, 3.0 - 5.0 * kappa]
    roots = np.roots(coeffs)
    assert np.allclose(roots.imag, 0.0) and np.all(roots.real < 0)
    roots = roots.real
    dq = np.polyval(np.polyder(coeffs), roots)
    total = np.zeros_like(t)
    for r, d in zip(roots, dq):
        b = -r
        total += (r + 5.0) / d * (1.0 / np.sqrt(np.pi * t) - b * special.erfcx(b * np.sqrt(t)))
    return total / a0


def test_volterra_matches_continuum_solution(mp_density_discrete):
    a0 = 2.0
    sol = solve_volterra(a0, 0.3, mp_density_discrete, uniform_grid(30.0, 0.05))
    late = sol.G.times >= 1.0
    expected = _mapped_mp_g(a0, 0.3, sol.G.times[late])
    assert_allclose(sol.G.values[late], expected, rtol=0.02)


@pytest.mark.slow
def test_volterra_regime_split():
    params = MPParams(sigma2=1.0, q=0.25)
    x_minus, x_plus = mp_edges(params)
    bulk = BulkSpectrum(bulk_eigenvalues=mp_quantiles(20000, params), x_plus=x_plus, x_minus=x_minus,
                        cutoff_index=0)
    rho = SpectralDensity.from_spectrum(lambda_map(bulk), bulk)
    a0 = 2.0
    t_c = critical_temperature(a0, rho)
    below = solve_g_volterra(a0, 0.5 * t_c, rho, uniform_grid(300.0, 0.1))
    assert fit_tail(below).exponent == pytest.approx(-1.5, abs=0.2)
    above = solve_g_volterra(a0, 1.5 * t_c, rho, uniform_grid(60.0, 0.1))
    assert log_slope(above) > 0
