"""
Ensemble Langevin integrator in the eigenbasis of the kinetic spectrum.

Each realization r evolves N_c mode amplitudes under

    dq_mu = -(lambda_mu + h0 + h1 a_r(t)) q_mu dt + sqrt(2 T dt) xi,

where a_r(t) = mean_mu q_mu^2 is taken from the realization's own state at
every step. Realizations are integrated in fixed batches on the worker pool;
the noise of realization r is drawn from make_rng(seed, r), so results do
not depend on the batch size or the number of workers. Ensemble means are
numpy reductions over the realization axis in realization order.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize
from scipy.integrate import cumulative_trapezoid

from background_tasks import run_ordered
from config import (
    DEFAULT_ENSEMBLE, DEFAULT_H0, DEFAULT_H1, DEFAULT_INITIAL_AMPLITUDE, DEFAULT_STEPS,
    DIVERGENCE_FACTOR, DT_SAFETY, NOISE_CHUNK_STEPS, REALIZATION_BATCH, STABILITY_LIMIT,
)
from errors import DivergenceError, DomainError, StepSizeError
from rmt import KineticSpectrum
from series import ObservableSeries
from utils import logger, make_rng

# Upper bound on R * tracked modes * (steps + 1) stored values.
MAX_TRACKED_VALUES = 50_000_000


class PotentialParams(BaseModel):
    """Quartic potential coefficients; the minimum sits at a0 = -h0/h1."""

    model_config = ConfigDict(frozen=True)

    h0: float = DEFAULT_H0
    h1: float = DEFAULT_H1

    @property
    def has_minimum(self) -> bool:
        return self.h1 > 0 and self.h0 < 0

    @property
    def a0(self) -> float:
        if self.h1 <= 0:
            raise DomainError(f"a0 = -h0/h1 needs h1 > 0, got h1={self.h1}")
        if self.h0 >= 0:
            raise DomainError(f"a0 = -h0/h1 is positive only for h0 < 0, got h0={self.h0}")
        return -self.h0 / self.h1

    def ell(self, a):
        return self.h0 + self.h1 * a

    @classmethod
    def from_a0(cls, a0: float, h1: float = DEFAULT_H1) -> "PotentialParams":
        if a0 <= 0 or h1 <= 0:
            raise DomainError(f"a0 and h1 must be positive, got a0={a0}, h1={h1}")
        return cls(h0=-a0 * h1, h1=h1)


class KineticsConfig(BaseModel):
    """
    Integration settings.

    dt=None selects the default step 0.1 / (lambda_max + |h0| + h1 max(a0, c^2)).
    When t_max is given it overrides steps with ceil(t_max / dt).
    """

    model_config = ConfigDict(frozen=True)

    temperature: float = Field(0.0, ge=0)
    dt: Optional[float] = Field(None, gt=0)
    steps: int = Field(DEFAULT_STEPS, ge=1)
    t_max: Optional[float] = Field(None, gt=0)
    ensemble: int = Field(DEFAULT_ENSEMBLE, ge=1)
    seed: int = 0
    initial_amplitude: float = Field(DEFAULT_INITIAL_AMPLITUDE, gt=0)


def _stiffness(spectrum: KineticSpectrum, pot: PotentialParams, a_ref: float) -> float:
    return float(spectrum.lambdas[-1]) + abs(pot.h0) + abs(pot.h1) * a_ref


def default_dt(spectrum: KineticSpectrum, pot: PotentialParams, c: float = DEFAULT_INITIAL_AMPLITUDE) -> float:
    a_ref = max(pot.a0 if pot.has_minimum else 0.0, c * c)
    return DT_SAFETY / _stiffness(spectrum, pot, a_ref)


def resolve_grid(spectrum: KineticSpectrum, pot: PotentialParams, cfg: KineticsConfig) -> Tuple[float, int]:
    """
    Returns (dt, steps) after applying the stability guard
    dt (lambda_max + |h0| + h1 a_cap) < 0.5 with a_cap = max(4 a0, 4 c^2).

    Raises:
        StepSizeError: the guard fails for the requested dt.
    """
    c = cfg.initial_amplitude
    dt = cfg.dt if cfg.dt is not None else default_dt(spectrum, pot, c)
    a_cap = max(4.0 * pot.a0 if pot.has_minimum else 0.0, 4.0 * c * c)
    product = dt * _stiffness(spectrum, pot, a_cap)
    if product >= STABILITY_LIMIT:
        raise StepSizeError(
            f"dt={dt:.4g} violates the stability guard ({product:.3f} >= {STABILITY_LIMIT})",
            {"dt": dt, "guard": product, "lambda_max": float(spectrum.lambdas[-1])},
        )
    steps = int(math.ceil(cfg.t_max / dt - 1e-9)) if cfg.t_max is not None else cfg.steps
    return dt, steps


def divergence_threshold(pot: PotentialParams, c: float) -> float:
    scale = max(c, math.sqrt(pot.a0)) if pot.has_minimum else c
    return DIVERGENCE_FACTOR * scale


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """
    Streamed reductions of an ensemble run.

    q holds the tracked modes only (R x M x (steps + 1)); a_r and k_r hold the
    per-realization a(t) and (1/N_c) sum_mu q_mu(t) q_mu(0). Values after a
    realization's divergence step are NaN.
    """

    spectrum: KineticSpectrum
    pot: PotentialParams
    temperature: float
    initial_amplitude: float
    dt: float
    times: np.ndarray
    modes: np.ndarray
    q: np.ndarray
    a_r: np.ndarray
    k_r: np.ndarray
    diverged: np.ndarray
    diverged_step: np.ndarray

    @property
    def ensemble(self) -> int:
        return int(self.diverged.size)

    @property
    def steps(self) -> int:
        return int(self.times.size - 1)

    @property
    def alive(self) -> np.ndarray:
        return ~self.diverged

    def mode_slot(self, mu: int) -> int:
        if not 0 <= mu < self.spectrum.n_c:
            raise DomainError(f"Mode {mu} outside 0..{self.spectrum.n_c - 1}", {"mode": mu})
        slots = np.flatnonzero(self.modes == mu)
        if slots.size == 0:
            raise DomainError(f"Mode {mu} was not tracked in this run", {"mode": mu})
        return int(slots[0])

    def divergence_log(self) -> List[Dict[str, Any]]:
        return [{"realization": int(r), "step": int(self.diverged_step[r]),
                 "time": float(self.times[self.diverged_step[r]])}
                for r in np.flatnonzero(self.diverged)]


def _tracked_modes(n_c: int, modes: Optional[Sequence[int]], ensemble: int, steps: int) -> np.ndarray:
    if modes is None:
        if ensemble * n_c * (steps + 1) > MAX_TRACKED_VALUES:
            raise DomainError(f"Tracking all {n_c} modes for R={ensemble}, steps={steps} is too large; "
                              "pass the modes to keep")
        return np.arange(n_c)
    tracked = np.asarray(list(modes), dtype=int)
    bad = tracked[(tracked < 0) | (tracked >= n_c)]
    if bad.size:
        raise DomainError(f"Mode {int(bad[0])} outside 0..{n_c - 1}", {"mode": int(bad[0])})
    return tracked


def _integrate_batch(realizations: range, lam: np.ndarray, pot: PotentialParams, cfg: KineticsConfig,
                     dt: float, steps: int, tracked: np.ndarray, threshold: float) -> Dict[str, np.ndarray]:
    b = len(realizations)
    n_c = lam.size
    c = cfg.initial_amplitude
    temperature = cfg.temperature
    rngs = [make_rng(cfg.seed, r) for r in realizations]
    noise_scale = math.sqrt(2.0 * temperature * dt)

    q = np.full((b, n_c), c, dtype=float)
    a = np.full(b, c * c)
    alive = np.ones(b, dtype=bool)
    div_step = np.full(b, -1, dtype=int)

    a_r = np.empty((b, steps + 1))
    k_r = np.empty((b, steps + 1))
    qs = np.empty((b, tracked.size, steps + 1))
    a_r[:, 0] = c * c
    k_r[:, 0] = c * c
    qs[:, :, 0] = c

    step = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while step < steps:
            chunk = min(NOISE_CHUNK_STEPS, steps - step)
            if temperature > 0:
                xi = np.stack([rng.standard_normal((chunk, n_c)) for rng in rngs], axis=1)
            for j in range(chunk):
                rate = lam[None, :] + pot.h0 + pot.h1 * a[:, None]
                q = q - rate * q * dt
                if temperature > 0:
                    q += noise_scale * xi[j]
                s = step + j + 1

                bad = alive & ~(np.all(np.isfinite(q), axis=1) & (np.max(np.abs(q), axis=1) <= threshold))
                if bad.any():
                    alive &= ~bad
                    div_step[bad] = s
                if not alive.all():
                    q[~alive] = 0.0

                a = np.mean(q * q, axis=1)
                a_r[:, s] = np.where(alive, a, np.nan)
                k_r[:, s] = np.where(alive, c * np.mean(q, axis=1), np.nan)
                qs[:, :, s] = np.where(alive[:, None], q[:, tracked], np.nan)
            step += chunk

    return {"a_r": a_r, "k_r": k_r, "q": qs, "diverged": ~alive, "diverged_step": div_step}


def integrate(spectrum: KineticSpectrum, pot: PotentialParams, cfg: KineticsConfig,
              modes: Optional[Sequence[int]] = None, max_workers: Optional[int] = None) -> TrajectoryEnsemble:
    """
    Euler-Maruyama integration of cfg.ensemble realizations from q_mu(0) = c.

    A realization whose amplitudes leave [-threshold, threshold] with
    threshold = 1e6 max(c, sqrt(a0)), or become non-finite, is flagged as
    diverged at that step and contributes no further data.

    Args:
        modes: mode indices whose full trajectories are kept; all by default.
    """
    dt, steps = resolve_grid(spectrum, pot, cfg)
    lam = np.asarray(spectrum.lambdas, dtype=float)
    tracked = _tracked_modes(spectrum.n_c, modes, cfg.ensemble, steps)
    threshold = divergence_threshold(pot, cfg.initial_amplitude)

    logger.info(f"Integrating Langevin ensemble: N_c={spectrum.n_c}, R={cfg.ensemble}, steps={steps}, "
                f"dt={dt:.4g}, T={cfg.temperature:.4g}")
    batches = [range(start, min(start + REALIZATION_BATCH, cfg.ensemble))
               for start in range(0, cfg.ensemble, REALIZATION_BATCH)]
    parts = run_ordered(
        lambda realizations: _integrate_batch(realizations, lam, pot, cfg, dt, steps, tracked, threshold),
        batches, max_workers)

    ens = TrajectoryEnsemble(
        spectrum=spectrum, pot=pot, temperature=cfg.temperature, initial_amplitude=cfg.initial_amplitude,
        dt=dt, times=dt * np.arange(steps + 1), modes=tracked,
        q=np.concatenate([p["q"] for p in parts], axis=0),
        a_r=np.concatenate([p["a_r"] for p in parts], axis=0),
        k_r=np.concatenate([p["k_r"] for p in parts], axis=0),
        diverged=np.concatenate([p["diverged"] for p in parts]),
        diverged_step=np.concatenate([p["diverged_step"] for p in parts]),
    )
    n_div = int(ens.diverged.sum())
    if n_div:
        first = int(ens.diverged_step[ens.diverged].min())
        logger.warning(f"{n_div} of {cfg.ensemble} realizations diverged (first at t={first * dt:.4g})")
    logger.info(f"Integration finished: {cfg.ensemble - n_div} realizations retained")
    return ens


def _alive_or_raise(ens: TrajectoryEnsemble, what: str) -> np.ndarray:
    alive = ens.alive
    if not alive.any():
        raise DivergenceError(f"All {ens.ensemble} realizations diverged; {what} is undefined",
                              {"realizations": ens.ensemble, "temperature": ens.temperature})
    return alive


def _meta(ens: TrajectoryEnsemble, **extra: Any) -> Dict[str, Any]:
    return {"temperature": ens.temperature, "dt": ens.dt, "n_c": ens.spectrum.n_c,
            "ensemble": ens.ensemble, **extra}


def observable_a(ens: TrajectoryEnsemble) -> ObservableSeries:
    """Ensemble mean of a_r(t) over realizations that never diverged."""
    alive = _alive_or_raise(ens, "a(t)")
    values = ens.a_r[alive].mean(axis=0)
    return ObservableSeries(ens.times, values, int(alive.sum()), "a", _meta(ens))


def correlation_F(ens: TrajectoryEnsemble, mu: int, t0: int = 0) -> ObservableSeries:
    """
    F_mu(t, t0) = <q_mu(t) q_mu(t0)>; t0 is a time index. The series carries
    the standard error of the mean across retained realizations.
    """
    slot = ens.mode_slot(mu)
    if not 0 <= t0 <= ens.steps:
        raise DomainError(f"t0 index {t0} outside 0..{ens.steps}")
    alive = _alive_or_raise(ens, f"F_{mu}")
    q = ens.q[alive, slot, :]
    products = q * q[:, t0:t0 + 1]
    values = products.mean(axis=0)
    n = products.shape[0]
    stderr = products.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(values)
    return ObservableSeries(ens.times, values, n, "F_mu",
                            _meta(ens, mode=int(mu), lam=float(ens.spectrum.lambdas[mu]), t0=float(ens.times[t0])),
                            stderr)


def correlation_K(ens: TrajectoryEnsemble) -> ObservableSeries:
    """K(t) = (1/N_c) sum_mu F_mu(t, 0)."""
    alive = _alive_or_raise(ens, "K(t)")
    values = ens.k_r[alive].mean(axis=0)
    return ObservableSeries(ens.times, values, int(alive.sum()), "K", _meta(ens))


def observable_ell(ens: TrajectoryEnsemble) -> ObservableSeries:
    """ell(t) = h0 + h1 a(t)."""
    a = observable_a(ens)
    return ObservableSeries(a.times, ens.pot.ell(a.values), a.realization_count, "ell", dict(a.meta))


def observable_g(ens: TrajectoryEnsemble) -> Tuple[ObservableSeries, ObservableSeries]:
    """
    g(t) = int_0^t ell and G_sim(t) = exp(2 g(t)).

    G_sim is the simulated counterpart of the Volterra solution G(t).
    """
    ell = observable_ell(ens)
    g = cumulative_trapezoid(ell.values, ell.times, initial=0.0)
    with np.errstate(over="raise"):
        try:
            big_g = np.exp(2.0 * g)
        except FloatingPointError:
            raise DivergenceError("exp(2 g(t)) overflows on this horizon", {"g_max": float(g.max())})
    return (ObservableSeries(ell.times, g, ell.realization_count, "g", dict(ell.meta)),
            ObservableSeries(ell.times, big_g, ell.realization_count, "G_sim", dict(ell.meta)))


def realization_spread(ens: TrajectoryEnsemble, t_index: int = -1) -> float:
    """max - min of a_r at one time index across retained realizations."""
    alive = _alive_or_raise(ens, "the realization spread")
    values = ens.a_r[alive, t_index]
    return float(values.max() - values.min())


def potential_energy(q: np.ndarray, spectrum: KineticSpectrum, pot: PotentialParams) -> np.ndarray:
    """
    U = 1/2 sum_mu lambda_mu q_mu^2 + N_c (h0 a / 2 + h1 a^2 / 4) over the last axis.

    The Langevin drift is -grad U and the stationary density is exp(-U/T).
    """
    q = np.asarray(q, dtype=float)
    a = np.mean(q * q, axis=-1)
    return 0.5 * np.sum(spectrum.lambdas * q * q, axis=-1) + spectrum.n_c * (0.5 * pot.h0 * a + 0.25 * pot.h1 * a * a)


def drift(q: np.ndarray, spectrum: KineticSpectrum, pot: PotentialParams) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    a = np.mean(q * q, axis=-1, keepdims=True)
    return -(spectrum.lambdas + pot.ell(a)) * q


def equilibrium_a(spectrum: KineticSpectrum, pot: PotentialParams, temperature: float) -> float:
    """
    Self-consistent stationary plateau: the root a of a = mean_mu T / (lambda_mu + h0 + h1 a)
    with every denominator positive.
    """
    if pot.h1 <= 0:
        raise DomainError(f"Equilibrium needs a confining potential (h1 > 0), got h1={pot.h1}")
    if temperature <= 0:
        raise DomainError(f"Equilibrium plateau needs T > 0, got {temperature}")
    lam = spectrum.lambdas

    def excess(a: float) -> float:
        return a - float(np.mean(temperature / (lam + pot.h0 + pot.h1 * a)))

    a_low = -(float(lam[0]) + pot.h0) / pot.h1
    if a_low < 0:
        lo = 0.0
    else:
        eps = 1e-9 * max(1.0, a_low)
        while excess(a_low + eps) >= 0 and eps > 1e-300:
            eps *= 1e-3
        lo = a_low + eps
    hi = max(1.0, 2.0 * lo)
    while excess(hi) <= 0:
        hi *= 2.0
    return float(optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-12))
