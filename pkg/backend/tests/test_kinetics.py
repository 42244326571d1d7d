import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import kinetics
from analytics import SpectralDensity, critical_temperature, fit_tail
from detect import prepare_beta
from errors import DivergenceError, DomainError, StepSizeError
from kinetics import (
    KineticsConfig, PotentialParams, correlation_F, correlation_K, default_dt, drift, equilibrium_a, integrate,
    observable_a, observable_ell, observable_g, potential_energy, realization_spread, resolve_grid,
)
from market import synth_panel
from rmt import KineticSpectrum

LINEAR = KineticSpectrum(np.linspace(0.0, 2.0, 200))
# square-root density of rates near zero, with the largest rate at 1
SQRT_EDGE = KineticSpectrum(((np.arange(500) + 0.5) / 500) ** (2.0 / 3.0))


def test_potential_minimum():
    pot = PotentialParams(h0=-1.0, h1=0.5)
    assert pot.a0 == pytest.approx(2.0)
    assert pot.ell(2.0) == pytest.approx(0.0)
    assert PotentialParams.from_a0(10.0, 0.5).h0 == pytest.approx(-5.0)
    with pytest.raises(DomainError):
        PotentialParams(h0=1.0, h1=0.5).a0
    with pytest.raises(DomainError):
        PotentialParams(h0=-1.0, h1=0.0).a0


def test_grid_resolution():
    pot = PotentialParams()
    dt, steps = resolve_grid(LINEAR, pot, KineticsConfig(steps=50))
    assert dt == pytest.approx(default_dt(LINEAR, pot))
    assert steps == 50
    dt, steps = resolve_grid(LINEAR, pot, KineticsConfig(dt=0.01, t_max=1.0))
    assert steps == 100
    with pytest.raises(StepSizeError):
        resolve_grid(LINEAR, pot, KineticsConfig(dt=0.2))


def test_zero_temperature_decay_is_exact_euler():
    spectrum = KineticSpectrum(np.array([0.5, 1.0, 2.0]))
    pot = PotentialParams(h0=0.0, h1=0.0)
    ens = integrate(spectrum, pot, KineticsConfig(dt=0.01, steps=100, ensemble=3))
    n = np.arange(101)
    for mu, lam in enumerate(spectrum.lambdas):
        f = correlation_F(ens, mu)
        assert_allclose(f.values, (1.0 - lam * 0.01) ** n, rtol=1e-12)
        assert_allclose(f.stderr, 0.0, atol=1e-12)
    expected_k = np.mean([(1.0 - lam * 0.01) ** n for lam in spectrum.lambdas], axis=0)
    assert_allclose(correlation_K(ens).values, expected_k, rtol=1e-12)


@pytest.mark.parametrize("dt", [0.01, 0.005])
def test_ornstein_uhlenbeck_moments(dt):
    # h1 = 0 leaves one linear mode with rate k = lambda + h0
    spectrum = KineticSpectrum(np.array([0.5]))
    pot = PotentialParams(h0=0.5, h1=0.0)
    temperature, k, t_end, r = 0.5, 1.0, 1.0, 4000
    ens = integrate(spectrum, pot, KineticsConfig(temperature=temperature, dt=dt, t_max=t_end, ensemble=r, seed=21))
    q_end = ens.q[:, 0, -1]
    mean = math.exp(-k * t_end)
    var = temperature / k * (1.0 - math.exp(-2.0 * k * t_end))
    assert abs(q_end.mean() - mean) < 3.0 * math.sqrt(var / r)
    assert abs(q_end.var(ddof=1) - var) < 3.0 * var * math.sqrt(2.0 / (r - 1))
    assert correlation_F(ens, 0).stderr[-1] == pytest.approx(math.sqrt(var / r), rel=0.05)


def test_results_do_not_depend_on_batching(monkeypatch):
    pot = PotentialParams()
    cfg = KineticsConfig(temperature=0.3, steps=80, ensemble=23, seed=4)
    serial = integrate(LINEAR, pot, cfg, modes=[0, 5], max_workers=1)
    monkeypatch.setattr(kinetics, "REALIZATION_BATCH", 7)
    pooled = integrate(LINEAR, pot, cfg, modes=[0, 5], max_workers=4)
    assert np.array_equal(serial.a_r, pooled.a_r)
    assert np.array_equal(serial.q, pooled.q)


def test_seed_changes_the_noise():
    pot = PotentialParams()
    a = integrate(LINEAR, pot, KineticsConfig(temperature=0.3, steps=20, ensemble=4, seed=1), modes=[0])
    b = integrate(LINEAR, pot, KineticsConfig(temperature=0.3, steps=20, ensemble=4, seed=2), modes=[0])
    assert not np.array_equal(a.a_r, b.a_r)


def test_divergence_is_flagged_and_truncated(caplog):
    spectrum = KineticSpectrum(np.array([0.0, 0.0]))
    pot = PotentialParams(h0=-1.0, h1=0.0)
    with caplog.at_level(logging.WARNING, logger="spectral_kinetics"):
        ens = integrate(spectrum, pot, KineticsConfig(dt=0.1, steps=200, ensemble=3))
    assert ens.diverged.all()
    step = int(ens.diverged_step[0])
    assert 0 < step < 200
    assert np.all(np.isnan(ens.a_r[:, step:]))
    assert np.all(np.isfinite(ens.a_r[:, :step]))
    assert len(ens.divergence_log()) == 3
    assert "diverged" in caplog.text
    with pytest.raises(DivergenceError):
        observable_a(ens)


def test_mode_selection_errors(monkeypatch):
    pot = PotentialParams()
    ens = integrate(LINEAR, pot, KineticsConfig(steps=10, ensemble=2), modes=[0, 3])
    with pytest.raises(DomainError):
        correlation_F(ens, 4)
    with pytest.raises(DomainError):
        correlation_F(ens, 500)
    with pytest.raises(DomainError):
        integrate(LINEAR, pot, KineticsConfig(steps=10, ensemble=2), modes=[200])
    monkeypatch.setattr(kinetics, "MAX_TRACKED_VALUES", 100)
    with pytest.raises(DomainError):
        integrate(LINEAR, pot, KineticsConfig(steps=10, ensemble=2))


def test_ell_and_g_follow_a():
    pot = PotentialParams()
    ens = integrate(LINEAR, pot, KineticsConfig(steps=200, ensemble=2), modes=[0])
    a = observable_a(ens)
    ell = observable_ell(ens)
    g, big_g = observable_g(ens)
    assert_allclose(ell.values, pot.h0 + pot.h1 * a.values)
    assert g.values[0] == 0.0
    assert_allclose(big_g.values, np.exp(2.0 * g.values))
    assert_allclose(np.diff(g.values), 0.5 * ens.dt * (ell.values[1:] + ell.values[:-1]))


def test_drift_is_minus_energy_gradient(rng):
    spectrum = KineticSpectrum(np.array([0.0, 0.3, 1.2, 2.0]))
    pot = PotentialParams(h0=-1.0, h1=0.7)
    q = rng.normal(size=4)
    eps = 1e-6
    grad = np.array([(potential_energy(q + eps * e, spectrum, pot) - potential_energy(q - eps * e, spectrum, pot))
                     / (2 * eps) for e in np.eye(4)])
    assert_allclose(drift(q, spectrum, pot), -grad, rtol=1e-6, atol=1e-8)


def test_equilibrium_plateau_is_self_consistent():
    pot = PotentialParams()
    a_eq = equilibrium_a(LINEAR, pot, 2.0)
    assert a_eq == pytest.approx(np.mean(2.0 / (LINEAR.lambdas + pot.ell(a_eq))), rel=1e-9)
    with pytest.raises(DomainError):
        equilibrium_a(LINEAR, pot, 0.0)
    with pytest.raises(DomainError):
        equilibrium_a(LINEAR, PotentialParams(h0=-1.0, h1=0.0), 1.0)


@pytest.mark.slow
@pytest.mark.parametrize("a0", [2.0, 10.0])
def test_low_temperature_relaxes_to_potential_minimum(a0):
    pot = PotentialParams.from_a0(a0)
    t_c = critical_temperature(pot.a0, SpectralDensity.discrete(LINEAR.lambdas))
    ens = integrate(LINEAR, pot, KineticsConfig(temperature=0.1 * t_c, dt=0.01, t_max=60.0, ensemble=5, seed=8),
                    modes=[0])
    a = observable_a(ens)
    plateau = a.values[-len(a) // 10:].mean()
    assert plateau == pytest.approx(pot.a0, rel=0.05)
    assert realization_spread(ens) / pot.a0 < 0.1


@pytest.mark.slow
@pytest.mark.parametrize("a0", [2.0, 10.0])
def test_high_temperature_plateau_matches_equilibrium(a0):
    pot = PotentialParams.from_a0(a0)
    t_c = critical_temperature(pot.a0, SpectralDensity.discrete(LINEAR.lambdas))
    temperature = 10.0 * t_c
    ens = integrate(LINEAR, pot, KineticsConfig(temperature=temperature, dt=0.01, t_max=20.0, ensemble=40, seed=5),
                    modes=[0])
    a = observable_a(ens)
    plateau = a.values[a.times >= 10.0].mean()
    assert plateau > pot.a0
    assert plateau == pytest.approx(equilibrium_a(LINEAR, pot, temperature), rel=0.05)


@pytest.mark.slow
def test_uncorrelated_panel_spectrum_orders_below_critical_temperature():
    prep = prepare_beta(synth_panel("independent", 60, 250, seed=31), 1.0, seed=4)
    pot = PotentialParams()
    t_c = critical_temperature(pot.a0, prep.density)
    assert t_c > 0
    ens = integrate(prep.spectrum, pot, KineticsConfig(temperature=0.1 * t_c, t_max=40.0, ensemble=5, seed=6),
                    modes=[0])
    a = observable_a(ens)
    plateau = a.values[-len(a) // 10:].mean()
    assert plateau == pytest.approx(pot.a0, rel=0.05)
    assert realization_spread(ens) / pot.a0 < 0.1


@pytest.mark.slow
def test_mode_averaged_correlation_decays_with_three_quarter_power():
    pot = PotentialParams()
    t_c = critical_temperature(pot.a0, SpectralDensity.discrete(SQRT_EDGE.lambdas))
    ens = integrate(SQRT_EDGE, pot, KineticsConfig(temperature=0.1 * t_c, dt=0.01, t_max=20.0, ensemble=200,
                                                   seed=13), modes=[0])
    k = correlation_K(ens).window(8.0, 20.0)
    assert fit_tail(k, window=1.0).exponent == pytest.approx(-0.75, abs=0.15)
