"""
Closed-form quenched theory: H(t), its Laplace transform, the critical
temperature, G(t) from the closed Volterra equation, the a(t) reconstruction
and tail-exponent estimation.

H(t) = int rho(lambda) exp(-2 lambda t) d lambda. For a discrete spectrum
rho has uniform weights 1/N_c. The Laplace transform of a function f is
written f_bar(p). H_bar^-1 always means the reciprocal 1/H_bar.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, special, stats

from config import MIN_TAIL_POINTS, TAIL_WINDOW
from errors import DivergenceError, DomainError, StepSizeError, SuperCriticalError
from rmt import BulkSpectrum, KineticSpectrum
from series import ObservableSeries
from utils import logger

# element budget of the (t-chunk x N_c) temporary in the discrete H sum
_H_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class SpectralDensity:
    """
    Either a discrete list of rates with uniform weights or the closed-form
    MP reference H(t) of scale sigma.

    edge_width is x_plus - x_minus of the bulk the rates were mapped from;
    it sets the edge-mode exclusion scale of critical_temperature.
    """

    kind: str
    lambdas: Optional[np.ndarray] = None
    sigma: Optional[float] = None
    edge_width: Optional[float] = None

    def __post_init__(self):
        if self.kind == "discrete":
            lam = np.asarray(self.lambdas, dtype=float)
            if lam.ndim != 1 or lam.size == 0 or not np.all(np.isfinite(lam)) or np.any(lam < 0):
                raise DomainError("Discrete density needs a non-empty list of finite nonnegative rates")
            object.__setattr__(self, "lambdas", lam)
        elif self.kind == "mp_closed":
            if self.sigma is None or not self.sigma > 0:
                raise DomainError(f"mp_closed density needs sigma > 0, got {self.sigma}")
        else:
            raise DomainError(f"Unknown density kind '{self.kind}'")

    @classmethod
    def discrete(cls, lambdas: Sequence[float], edge_width: Optional[float] = None) -> "SpectralDensity":
        return cls(kind="discrete", lambdas=np.asarray(lambdas, dtype=float), edge_width=edge_width)

    @classmethod
    def from_spectrum(cls, spectrum: KineticSpectrum, bulk: Optional[BulkSpectrum] = None) -> "SpectralDensity":
        width = bulk.x_plus - bulk.x_minus if bulk is not None else None
        return cls.discrete(spectrum.lambdas, edge_width=width)

    @classmethod
    def mp_closed(cls, sigma: float) -> "SpectralDensity":
        return cls(kind="mp_closed", sigma=float(sigma))

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    @property
    def support(self) -> str:
        if self.is_discrete:
            return f"{self.lambdas.size} rates in [{self.lambdas.min():.6g}, {self.lambdas.max():.6g}]"
        return f"closed-form MP reference, sigma={self.sigma:g}"


class LaplacePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float = Field(..., ge=0)
    value: float


class TailFit(BaseModel):
    """Log-log regression over the late-time window."""

    exponent: float
    stderr: float
    r2: float
    curvature: float
    n_points: int
    t_lo: float
    t_hi: float


@dataclass(frozen=True)
class VolterraSolution:
    G: ObservableSeries
    F: ObservableSeries
    H: ObservableSeries


def h_of_t(rho: SpectralDensity, t):
    """
    H(t) for a scalar or array of times.

    The mp_closed branch evaluates
    [sqrt(2/(pi t)) sigma - exp(t/(2 sigma^2)) erfc(sqrt(t)/(sqrt(2) sigma))] / (4 sigma^3)
    through the scaled complementary error function, so large t does not overflow.
    """
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0) or not np.all(np.isfinite(ts)):
        raise DomainError("H(t) needs finite t >= 0")

    if rho.is_discrete:
        out = np.empty_like(ts)
        chunk = max(1, _H_ELEMENTS // rho.lambdas.size)
        for start in range(0, ts.size, chunk):
            block = ts[start:start + chunk]
            out[start:start + chunk] = np.mean(np.exp(-2.0 * np.outer(block, rho.lambdas)), axis=1)
    else:
        if np.any(ts == 0):
            raise DomainError("The closed-form MP H(t) diverges at t = 0", {"t": 0.0})
        s = rho.sigma
        x = np.sqrt(ts) / (math.sqrt(2.0) * s)
        out = (np.sqrt(2.0 / (math.pi * ts)) * s - special.erfcx(x)) / (4.0 * s ** 3)
    return float(out[0]) if scalar else out


def h_series(rho: SpectralDensity, times: Sequence[float]) -> ObservableSeries:
    t = np.asarray(times, dtype=float)
    return ObservableSeries(t, h_of_t(rho, t), 0, "H", {"density": rho.support})


def h_bar_mp(p: float, sigma: float) -> float:
    """H_bar(p) = 1 / (2 sqrt(2) sqrt(p) sigma^2 + 2 sigma)."""
    if p < 0:
        raise DomainError(f"p must be nonnegative, got {p}")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return 1.0 / (2.0 * math.sqrt(2.0) * math.sqrt(p) * sigma ** 2 + 2.0 * sigma)


def h_bar_discrete(p: float, rho: SpectralDensity, epsilon: float = 0.0) -> Tuple[float, int]:
    """
    (1/N_c) sum over rates lambda >= epsilon of 1 / (p + 2 lambda), and the
    number of excluded rates. Returns inf when p = 0 meets a zero rate.
    """
    if p < 0:
        raise DomainError(f"p must be nonnegative, got {p}")
    lam = rho.lambdas
    kept = lam[lam >= epsilon] if epsilon > 0 else lam
    denom = p + 2.0 * kept
    if np.any(denom == 0):
        return math.inf, lam.size - kept.size
    return float(np.sum(1.0 / denom) / lam.size), lam.size - kept.size


def h_bar(p: float, rho: SpectralDensity) -> float:
    if rho.is_discrete:
        return h_bar_discrete(p, rho)[0]
    return h_bar_mp(p, rho.sigma)


def h_bar_points(rho: SpectralDensity, ps: Sequence[float]) -> List[LaplacePoint]:
    return [LaplacePoint(p=float(p), value=h_bar(float(p), rho)) for p in ps]


def numerical_laplace(rho: SpectralDensity, p: float) -> float:
    """
    int_0^inf exp(-p t) H(t) dt by adaptive quadrature after t = u^2, which
    removes the t^-1/2 singularity of the closed MP form.
    """
    if p <= 0:
        raise DomainError(f"Numerical transform needs p > 0, got {p}")

    def integrand(u: float) -> float:
        if u == 0.0:
            # 2u H(u^2) -> 2 sqrt(2/pi) sigma / (4 sigma^3) for the closed form, 0 for discrete
            return 0.0 if rho.is_discrete else math.sqrt(2.0 / math.pi) / (2.0 * rho.sigma ** 2)
        return 2.0 * u * math.exp(-p * u * u) * h_of_t(rho, u * u)

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=400)
    return float(value)


def edge_epsilon(rho: SpectralDensity) -> float:
    """Exclusion scale 1 / (N_c (x_plus - x_minus)); zero when the bulk width is unknown."""
    if not rho.is_discrete or not rho.edge_width:
        return 0.0
    return 1.0 / (rho.lambdas.size * rho.edge_width)


def _exclusion_epsilon(rho: SpectralDensity, epsilon: Optional[float]) -> float:
    eps = edge_epsilon(rho) if epsilon is None else epsilon
    return max(eps, np.nextafter(0.0, 1.0))


def _solver_rates(rho: SpectralDensity, epsilon: Optional[float]) -> Tuple[np.ndarray, float]:
    """Rates kept after edge exclusion and the per-rate weight 1/N_c of the full spectrum."""
    lam = rho.lambdas[rho.lambdas >= _exclusion_epsilon(rho, epsilon)]
    if lam.size == 0:
        raise DomainError("Every rate falls below the edge-exclusion scale",
                          {"epsilon": _exclusion_epsilon(rho, epsilon)})
    return lam, 1.0 / rho.lambdas.size


def critical_temperature_details(a0: float, rho: SpectralDensity,
                                 epsilon: Optional[float] = None) -> Tuple[float, float, int]:
    """
    Returns (T_c, H_bar(0), excluded mode count) with T_c = a0 / (2 H_bar(0)).

    For a discrete density, rates below epsilon (default edge_epsilon, and
    always the exact zero rate) are left out of H_bar(0).

    Raises:
        DomainError: H_bar(0) is still divergent, or a0 <= 0.
    """
    if a0 <= 0:
        raise DomainError(f"a0 must be positive, got {a0}")
    if rho.is_discrete:
        eps = _exclusion_epsilon(rho, epsilon)
        hb0, excluded = h_bar_discrete(0.0, rho, eps)
        if excluded == rho.lambdas.size or not math.isfinite(hb0) or hb0 <= 0:
            raise DomainError("H_bar(0) diverges after edge-mode exclusion", {"epsilon": eps})
        if excluded:
            logger.info(f"Excluded {excluded} edge modes below epsilon={eps:.3g} from H_bar(0)")
    else:
        hb0, excluded = h_bar_mp(0.0, rho.sigma), 0
    return a0 / (2.0 * hb0), hb0, excluded


def critical_temperature(a0: float, rho: SpectralDensity, epsilon: Optional[float] = None) -> float:
    return critical_temperature_details(a0, rho, epsilon)[0]


def g_bar(p: float, a0: float, temperature: float, rho: SpectralDensity) -> float:
    """
    G_bar(p) = (1/2) / ((1/2) a0 / H_bar(p) - T).

    Raises:
        SuperCriticalError: the denominator is not positive at this p.
    """
    if a0 <= 0 or temperature < 0:
        raise DomainError(f"Need a0 > 0 and T >= 0, got a0={a0}, T={temperature}")
    hb = h_bar(p, rho)
    denom = 0.5 * a0 / hb - temperature
    if denom <= 0:
        raise SuperCriticalError(
            f"T={temperature:.6g} is at or above the positivity bound {0.5 * a0 / hb:.6g} at p={p}",
            {"p": p, "temperature": temperature, "bound": 0.5 * a0 / hb},
        )
    return 0.5 / denom


def uniform_grid(t_max: float, dt: float) -> np.ndarray:
    if dt <= 0 or t_max <= 0:
        raise DomainError(f"Grid needs dt > 0 and t_max > 0, got dt={dt}, t_max={t_max}")
    return dt * np.arange(int(math.ceil(t_max / dt - 1e-9)) + 1)


def _grid_step(times: Sequence[float]) -> Tuple[np.ndarray, float]:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise DomainError("Time grid needs at least 2 points")
    if t[0] != 0.0:
        raise DomainError(f"Time grid must start at 0, got {t[0]}")
    step = float(t[1] - t[0])
    if step <= 0 or not np.allclose(np.diff(t), step, rtol=1e-9, atol=1e-12 * step):
        raise DomainError("Time grid must be uniform and increasing")
    return t, step


def _product_weights(lam: np.ndarray, step: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Exact weights of int_0^step exp(-k (step - u)) g(u) du for piecewise-linear
    g, k = 2 lambda: returns (decay, w_start, w_end).
    """
    k = 2.0 * lam
    x = k * step
    decay = np.exp(-x)
    small = x < 1e-3
    xs = np.where(small, 1.0, x)
    ks = np.where(small, 1.0, k)
    full = -np.expm1(-xs) / ks
    w_start = (-np.expm1(-xs) - xs * np.exp(-xs)) / (ks * ks * step)
    series_full = step * (1.0 - x / 2.0 + x ** 2 / 6.0 - x ** 3 / 24.0 + x ** 4 / 120.0)
    series_start = step * (0.5 - x / 3.0 + x ** 2 / 8.0 - x ** 3 / 30.0 + x ** 4 / 144.0)
    full = np.where(small, series_full, full)
    w_start = np.where(small, series_start, w_start)
    return decay, w_start, full - w_start


def solve_volterra(a0: float, temperature: float, rho: SpectralDensity, times: Sequence[float],
                   epsilon: Optional[float] = None) -> VolterraSolution:
    """
    Marches G(t) = H(t)/a0 + (2T/a0) F(t), F(t) = int_0^t H(t - s) G(s) ds.

    F is carried per mode, phi_mu(t) = int_0^t exp(-2 lambda_mu (t - s)) G(s) ds,
    with exact exponential weights for piecewise-linear G, so each node costs
    O(N_c). The diagonal term of the newest node is solved implicitly.

    The rates are the ones critical_temperature keeps: those below epsilon
    (default edge_epsilon, and always the zero rate) are dropped while every
    kept rate keeps its weight 1/N_c. H(0) is then the kept fraction and
    G(0) = H(0)/a0.

    Raises:
        StepSizeError: the implicit denominator 1 - (2T/a0) mean(w_end) is not positive.
        DivergenceError: G overflows on the requested horizon.
    """
    if not rho.is_discrete:
        raise DomainError("The Volterra solver needs a discrete density")
    if a0 <= 0 or temperature < 0:
        raise DomainError(f"Need a0 > 0 and T >= 0, got a0={a0}, T={temperature}")
    t, step = _grid_step(times)
    lam, weight = _solver_rates(rho, epsilon)
    if step * 2.0 * lam.max() >= 0.5:
        logger.warning(f"Grid step {step:.4g} is coarse for the fastest rate (2 lambda_max dt = "
                       f"{step * 2.0 * lam.max():.3g}); exponential weights keep the march stable")

    logger.info(f"Solving Volterra equation: N_c={rho.lambdas.size}, kept={lam.size}, nodes={t.size}, "
                f"T={temperature:.4g}, a0={a0:.4g}")
    h = h_of_t(SpectralDensity.discrete(lam), t) * (lam.size * weight)
    decay, w_start, w_end = _product_weights(lam, step)
    coupling = 2.0 * temperature / a0
    denom = 1.0 - coupling * float(np.sum(w_end)) * weight
    if denom <= 0:
        raise StepSizeError(f"Implicit Volterra step is singular (denominator {denom:.3g}); reduce dt",
                            {"dt": step, "denominator": denom})

    g = np.empty_like(t)
    f = np.zeros_like(t)
    phi = np.zeros_like(lam)
    g[0] = h[0] / a0
    with np.errstate(over="raise", invalid="raise"):
        try:
            for n in range(t.size - 1):
                partial = decay * phi + w_start * g[n]
                carried = float(np.sum(partial)) * weight
                g[n + 1] = (h[n + 1] / a0 + coupling * carried) / denom
                phi = partial + w_end * g[n + 1]
                f[n + 1] = float(np.sum(phi)) * weight
        except FloatingPointError:
            raise DivergenceError("G(t) overflowed on this horizon", {"node": n, "t": float(t[n])})

    meta = {"a0": a0, "temperature": temperature, "n_c": int(rho.lambdas.size),
            "excluded_modes": int(rho.lambdas.size - lam.size), "dt": step}
    logger.info(f"Volterra solve finished: G(t_max)={g[-1]:.4g}")
    return VolterraSolution(
        G=ObservableSeries(t, g, 0, "G", meta),
        F=ObservableSeries(t, f, 0, "F", meta),
        H=ObservableSeries(t, h, 0, "H", meta),
    )


def solve_g_volterra(a0: float, temperature: float, rho: SpectralDensity, times: Sequence[float],
                     epsilon: Optional[float] = None) -> ObservableSeries:
    return solve_volterra(a0, temperature, rho, times, epsilon).G


def convolve_hg(rho: SpectralDensity, g: ObservableSeries, epsilon: Optional[float] = None) -> ObservableSeries:
    """F(t) = int_0^t H(t - s) G(s) ds on G's grid, same rates and weights as the solver."""
    if not rho.is_discrete:
        raise DomainError("Convolution needs a discrete density")
    t, step = _grid_step(g.times)
    lam, weight = _solver_rates(rho, epsilon)
    decay, w_start, w_end = _product_weights(lam, step)
    phi = np.zeros_like(lam)
    f = np.zeros_like(t)
    for n in range(t.size - 1):
        phi = decay * phi + w_start * g.values[n] + w_end * g.values[n + 1]
        f[n + 1] = float(np.sum(phi)) * weight
    return ObservableSeries(t, f, g.realization_count, "F", dict(g.meta))


def a_closed(g: ObservableSeries, h: ObservableSeries, f: ObservableSeries, temperature: float) -> ObservableSeries:
    """a(t) = (H(t) + 2T F(t)) / G(t) on a shared grid."""
    if not (len(g) == len(h) == len(f)) or not (np.allclose(g.times, h.times) and np.allclose(g.times, f.times)):
        raise DomainError("G, H and F must share one time grid")
    if np.any(g.values <= 0):
        i = int(np.flatnonzero(g.values <= 0)[0])
        raise DomainError(f"G is not positive at t={g.times[i]:.6g}", {"t": float(g.times[i])})
    values = (h.values + 2.0 * temperature * f.values) / g.values
    return ObservableSeries(g.times, values, g.realization_count, "a_closed",
                            {**g.meta, "temperature": temperature})


def predicted_correlation(rho: SpectralDensity, g: ObservableSeries, mu: int, c: float = 1.0) -> ObservableSeries:
    """Quenched F_mu(t, 0) = c^2 exp(-lambda_mu t) / sqrt(G(t))."""
    if not rho.is_discrete:
        raise DomainError("Per-mode predictions need a discrete density")
    if not 0 <= mu < rho.lambdas.size:
        raise DomainError(f"Mode {mu} outside 0..{rho.lambdas.size - 1}", {"mode": mu})
    if np.any(g.values <= 0):
        raise DomainError("G must be positive for the quenched prediction")
    values = c * c * np.exp(-rho.lambdas[mu] * g.times) / np.sqrt(g.values)
    return ObservableSeries(g.times, values, g.realization_count, "F_pred", {**g.meta, "mode": int(mu)})


def predicted_K(rho: SpectralDensity, g: ObservableSeries, c: float = 1.0) -> ObservableSeries:
    """Quenched K(t) = c^2 H(t/2) / sqrt(G(t))."""
    if np.any(g.values <= 0):
        raise DomainError("G must be positive for the quenched prediction")
    values = c * c * h_of_t(rho, 0.5 * g.times) / np.sqrt(g.values)
    return ObservableSeries(g.times, values, g.realization_count, "K_pred", dict(g.meta))


def fit_tail(series: ObservableSeries, window: float = TAIL_WINDOW) -> TailFit:
    """
    Least-squares slope of log value against log t over the last `window`
    fraction of the samples with t > 0.

    Raises:
        DomainError: fewer than 16 points, or a nonpositive value in the window.
    """
    if not 0 < window <= 1:
        raise DomainError(f"Tail window must be a fraction in (0, 1], got {window}")
    t = series.times[series.times > 0]
    v = series.values[series.times > 0]
    count = int(math.ceil(window * t.size))
    t, v = t[t.size - count:], v[v.size - count:]
    if count < MIN_TAIL_POINTS:
        raise DomainError(f"Tail window holds {count} points, need {MIN_TAIL_POINTS}", {"points": count})
    if np.any(v <= 0):
        raise DomainError(f"Series '{series.label}' is not positive over the tail window",
                          {"t_lo": float(t[0]), "t_hi": float(t[-1])})
    log_t, log_v = np.log(t), np.log(v)
    reg = stats.linregress(log_t, log_v)
    centred = log_t - log_t.mean()
    curvature = float(np.polyfit(centred, log_v, 2)[0]) if np.ptp(log_t) > 0 else 0.0
    return TailFit(exponent=float(reg.slope), stderr=float(reg.stderr), r2=float(reg.rvalue ** 2),
                   curvature=curvature, n_points=count, t_lo=float(t[0]), t_hi=float(t[-1]))


def tail_exponent(series: ObservableSeries, window: float = TAIL_WINDOW) -> Tuple[float, float]:
    fit = fit_tail(series, window)
    return fit.exponent, fit.stderr


def log_slope(series: ObservableSeries, window: float = TAIL_WINDOW) -> float:
    """Late-time slope of log value against t (growth rate); positive for exponential growth."""
    count = max(2, int(math.ceil(window * len(series))))
    t, v = series.times[-count:], series.values[-count:]
    if np.any(v <= 0):
        raise DomainError(f"Series '{series.label}' is not positive over the late window")
    return float(np.polyfit(t, np.log(v), 1)[0])
