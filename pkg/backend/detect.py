"""
Signal detection on mode correlation functions F_mu(t, 0).

Each mode gets an exponent fit F ~ A exp(-alpha t) / t^gamma and the maximum
short-time curvature of F / F(0) in log t; a mode carries a signal when that
curvature clears the threshold by more than its Monte-Carlo noise.
beta_sweep runs the whole chain panel -> correlation spectrum -> kinetic
rates -> Langevin ensemble -> verdicts over a (beta, T/T_c) grid.
"""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy.interpolate import CubicSpline
from scipy.signal import savgol_filter

from analytics import SpectralDensity, critical_temperature_details
from background_tasks import run_ordered
from config import (
    CUTOFF_KAPPA, LOG_GRID_POINTS, MIN_FIT_POINTS, NOISE_SIGMAS, REPORT_SCHEMA_VERSION,
    SECOND_DERIVATIVE_THRESHOLD, SHORT_WINDOW_END, SMOOTH_WIDTH,
)
from errors import DomainError, SpectralKineticsError
from kinetics import KineticsConfig, PotentialParams, TrajectoryEnsemble, correlation_F, integrate
from market import PricePanel, build_beta_panel, correlation_matrix, log_returns
from rmt import (
    BulkSpectrum, CutoffResult, KineticSpectrum, MPParams, bulk_spectrum, detect_bulk_cutoff,
    lambda_map, mp_params_for_shape,
)
from series import ObservableSeries
from speclin import SpectralDecomposition, eigh
from utils import derive_seed, logger

Verdict = Literal["signal", "no_signal", "inconclusive"]


class ExponentFit(BaseModel):
    """Fit of log F on (1, -t, -log t); values are None when inconclusive."""

    status: Literal["ok", "inconclusive"] = "ok"
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    amplitude: Optional[float] = None
    r2: Optional[float] = Field(None, ge=0, le=1)
    condition_number: Optional[float] = None
    n_points: int = 0
    window: Tuple[float, float]


class ModeDetection(BaseModel):
    """second_derivative_max is the log-time curvature maximum the verdict reads."""

    mode: int
    fit: ExponentFit
    second_derivative_max: Optional[float] = None
    curvature_noise: Optional[float] = None
    curvature_margin: Optional[float] = None
    verdict: Verdict


class DetectionReport(BaseModel):
    schema_version: str = REPORT_SCHEMA_VERSION
    beta: float
    temperature_ratio: float
    temperature: Optional[float] = None
    t_c: Optional[float] = None
    threshold: float
    per_mode: List[ModeDetection]
    diagnostics: Dict[str, Any] = {}

    def verdicts(self) -> Dict[int, str]:
        return {m.mode: m.verdict for m in self.per_mode}


def fit_alpha_gamma(f: ObservableSeries, window: Tuple[float, float]) -> ExponentFit:
    """
    Linear least squares of log F against (1, -t, -log t) on the positive
    samples inside window; fewer than 16 of them gives an inconclusive fit.
    """
    t_lo, t_hi = float(window[0]), float(window[1])
    if t_lo <= 0:
        raise DomainError(f"Fit window must start after t=0, got {t_lo}")
    mask = (f.times >= t_lo) & (f.times <= t_hi) & (f.values > 0)
    n = int(mask.sum())
    if n < MIN_FIT_POINTS:
        logger.debug(f"Only {n} positive points in [{t_lo:.4g}, {t_hi:.4g}]; fit is inconclusive")
        return ExponentFit(status="inconclusive", n_points=n, window=(t_lo, t_hi))

    t = f.times[mask]
    y = np.log(f.values[mask])
    design = np.column_stack([np.ones_like(t), -t, -np.log(t)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # a flat log F leaves only roundoff in ss_tot
    flat = ss_tot <= np.finfo(float).eps * n * max(1.0, float(np.mean(y * y)))
    r2 = 1.0 if flat else 1.0 - ss_res / ss_tot
    return ExponentFit(
        alpha=float(coef[1]), gamma=float(coef[2]), amplitude=float(np.exp(coef[0])),
        r2=float(min(max(r2, 0.0), 1.0)), condition_number=float(np.linalg.cond(design)),
        n_points=n, window=(t_lo, t_hi),
    )


class Curvature(BaseModel):
    """
    Log-time curvature d^2 F / d(log t)^2 on the short window.

    value is the maximum, time where it sits, noise its standard error there,
    and margin the maximum of curvature - NOISE_SIGMAS * noise over the grid.
    """

    value: float
    time: float
    noise: float = 0.0
    margin: float


def log_time_curvature(f: ObservableSeries, short_window: Tuple[float, float] = (0.0, SHORT_WINDOW_END),
                       smooth_width: int = SMOOTH_WIDTH, points: int = LOG_GRID_POINTS,
                       noise_sigmas: float = NOISE_SIGMAS) -> Curvature:
    """
    Resamples f on `points` log-spaced times inside the window and applies a
    quadratic Savitzky-Golay second derivative of odd width >= smooth_width.
    Values between samples come from a cubic spline through the samples.
    The window start is raised to the first positive sample. f.stderr, when
    present, is carried through the same linear filter as independent noise.

    Raises:
        DomainError: window outside the grid, fewer than 5 samples in it, or
            fewer log points than the filter width.
    """
    width = max(3, smooth_width | 1)
    if points < width:
        raise DomainError(f"{points} log points cannot hold a filter of width {width}")
    t = f.times
    if np.any(np.diff(t) <= 0):
        raise DomainError("Log-time curvature needs increasing times")
    positive = t[t > 0]
    if positive.size == 0:
        raise DomainError("Log-time curvature needs samples at t > 0")
    lo, hi = max(float(short_window[0]), float(positive[0])), min(float(short_window[1]), float(t[-1]))
    if lo < t[0] or lo >= hi:
        raise DomainError(f"Short window [{short_window[0]}, {short_window[1]}] lies outside the grid "
                          f"[{t[0]:.4g}, {t[-1]:.4g}]")
    if int(np.sum((t >= lo) & (t <= hi))) < 5:
        raise DomainError(f"Fewer than 5 samples in the short window [{lo:.4g}, {hi:.4g}]")

    inside = np.flatnonzero((t >= lo) & (t <= hi))
    span = slice(max(int(inside[0]) - 1, 0), min(int(inside[-1]) + 2, t.size))
    u = np.linspace(math.log(lo), math.log(hi), points)
    step = float(u[1] - u[0])
    grid = np.clip(np.exp(u), lo, hi)
    # row k holds the filter weights of output k
    weights = savgol_filter(np.eye(points), width, 2, deriv=2, delta=step, axis=0, mode="interp")
    curvature = weights @ CubicSpline(t[span], f.values[span])(grid)
    if f.stderr is not None:
        noise = np.sqrt((weights ** 2) @ np.interp(grid, t, f.stderr) ** 2)
    else:
        noise = np.zeros(points)
    k = int(np.argmax(curvature))
    return Curvature(value=float(curvature[k]), time=float(grid[k]), noise=float(noise[k]),
                     margin=float(np.max(curvature - noise_sigmas * noise)))


def second_derivative_max(f: ObservableSeries, smooth_width: int = SMOOTH_WIDTH,
                          short_window: Tuple[float, float] = (0.0, SHORT_WINDOW_END),
                          time_scale: Literal["linear", "log"] = "linear") -> float:
    """
    Max over the short window of the smoothed second derivative of f.

    time_scale="linear" takes (f[k-1] - 2 f[k] + f[k+1]) / dt^2 after a
    centred moving average of smooth_width samples; "log" differentiates in
    log t through log_time_curvature.

    Raises:
        DomainError: non-uniform grid, window outside the grid, or fewer than
            5 samples in it.
    """
    if smooth_width < 1:
        raise DomainError(f"smooth_width must be at least 1, got {smooth_width}")
    if time_scale == "log":
        return log_time_curvature(f, short_window, smooth_width).value
    if time_scale != "linear":
        raise DomainError(f"Unknown time scale '{time_scale}'")
    t, v = f.times, f.values
    if t.size < smooth_width + 2:
        raise DomainError(f"Series of {t.size} points is too short for smoothing width {smooth_width}")
    step = f.dt
    if step <= 0 or not np.allclose(np.diff(t), step, rtol=1e-9, atol=1e-12 * step):
        raise DomainError("Second derivative needs a uniform grid")
    lo, hi = float(short_window[0]), min(float(short_window[1]), float(t[-1]))
    if lo < t[0] or lo >= hi:
        raise DomainError(f"Short window [{short_window[0]}, {short_window[1]}] lies outside the grid "
                          f"[{t[0]:.4g}, {t[-1]:.4g}]")
    if int(np.sum((t >= lo) & (t <= hi))) < 5:
        raise DomainError(f"Fewer than 5 samples in the short window [{lo:.4g}, {hi:.4g}]")

    kernel = np.full(smooth_width, 1.0 / smooth_width)
    smooth = np.convolve(v, kernel, mode="valid")
    centres = np.convolve(t, kernel, mode="valid")
    d2 = (smooth[:-2] - 2.0 * smooth[1:-1] + smooth[2:]) / (step * step)
    inside = (centres[1:-1] >= lo - 1e-12) & (centres[1:-1] <= hi + 1e-12)
    if not inside.any():
        raise DomainError(f"No smoothed samples fall in [{lo:.4g}, {hi:.4g}]")
    return float(d2[inside].max())


def fit_window(f: ObservableSeries, dt: float, ensemble: int) -> Tuple[float, float]:
    """[5 dt, first t where F drops below 3/sqrt(R) of F(0)], or the grid end."""
    lo = 5.0 * dt
    floor = 3.0 / math.sqrt(max(ensemble, 1)) * f.values[0]
    below = np.flatnonzero((f.times > lo) & (f.values < floor))
    hi = float(f.times[below[0]]) if below.size else float(f.times[-1])
    return lo, hi


def _detect_mode(mu: int, f: ObservableSeries, threshold: float, smooth_width: int,
                 short_window: Tuple[float, float], ensemble: int) -> ModeDetection:
    f0 = float(f.values[0])
    if not f0 > 0:
        window = (max(5.0 * f.dt, float(f.times[1]) if len(f) > 1 else 1.0), float(f.times[-1]))
        return ModeDetection(mode=mu, verdict="inconclusive",
                             fit=ExponentFit(status="inconclusive", window=window))
    norm = f.scaled(1.0 / f0)
    window = fit_window(norm, f.dt, ensemble)
    fit = fit_alpha_gamma(norm, window)
    try:
        curv = log_time_curvature(norm, short_window, smooth_width)
    except DomainError as e:
        logger.warning(f"Mode {mu}: curvature unavailable ({e.message})")
        return ModeDetection(mode=mu, fit=fit, verdict="inconclusive")
    if fit.status != "ok":
        verdict = "inconclusive"
    else:
        verdict = "signal" if curv.margin > threshold else "no_signal"
    return ModeDetection(mode=mu, fit=fit, second_derivative_max=curv.value, curvature_noise=curv.noise,
                         curvature_margin=curv.margin, verdict=verdict)


def detect_signal(per_mode: Mapping[int, ObservableSeries], threshold: float = SECOND_DERIVATIVE_THRESHOLD,
                  beta: float = 0.0, temperature_ratio: float = 0.0, ensemble: Optional[int] = None,
                  smooth_width: int = SMOOTH_WIDTH, short_window: Optional[Tuple[float, float]] = None,
                  temperature: Optional[float] = None, t_c: Optional[float] = None,
                  short_window_end: float = SHORT_WINDOW_END) -> DetectionReport:
    """
    Verdict per mode: signal iff the short-time log-time curvature of F/F(0)
    still exceeds threshold after subtracting NOISE_SIGMAS standard errors;
    inconclusive when the exponent fit or the curvature could not be computed.
    """
    missing = [mu for mu in (0, 1) if mu not in per_mode]
    if missing:
        logger.warning(f"Detection without edge modes {missing}; verdicts cover the requested modes only")
    results = []
    for mu, f in per_mode.items():
        r = ensemble if ensemble is not None else int(np.max(f.realization_count))
        window = short_window if short_window is not None else (5.0 * f.dt, short_window_end)
        results.append(_detect_mode(int(mu), f, threshold, smooth_width, window, r))
    return DetectionReport(beta=beta, temperature_ratio=temperature_ratio, temperature=temperature,
                           t_c=t_c, threshold=threshold, per_mode=results)


@dataclass(frozen=True)
class BetaSpectrum:
    """Spectral stages of one beta panel."""

    beta: float
    panel: PricePanel
    decomposition: SpectralDecomposition
    cutoff: CutoffResult
    params: MPParams
    bulk: BulkSpectrum
    spectrum: KineticSpectrum

    @property
    def density(self) -> SpectralDensity:
        return SpectralDensity.from_spectrum(self.spectrum, self.bulk)


@dataclass(frozen=True)
class CellRun:
    beta: float
    temperature_ratio: float
    temperature: float
    t_c: float
    excluded_modes: int
    ensemble: TrajectoryEnsemble


def prepare_beta(panel: PricePanel, beta: float, seed: int, kappa: float = CUTOFF_KAPPA,
                 cutoff_index: Optional[int] = None, eigen_method: Optional[str] = None) -> BetaSpectrum:
    """
    build_beta_panel -> correlation matrix -> eigh -> bulk cutoff -> lambda-map.

    The lower edge x_minus uses the MP law with the bulk's mean eigenvalue as
    variance (trace conservation) and q = N / (P - 1).
    """
    mixed = build_beta_panel(panel, beta, seed)
    returns = log_returns(mixed)
    dec = eigh(correlation_matrix(returns), eigen_method)
    cutoff = detect_bulk_cutoff(dec.eigenvalues, kappa)
    if cutoff_index is not None:
        cutoff = CutoffResult(int(cutoff_index), False, cutoff.threshold)
    shape = mp_params_for_shape(mixed.n_assets, returns.returns.shape[1])
    sigma2 = float(np.mean(dec.eigenvalues[cutoff.cutoff_index:]))
    params = MPParams(sigma2=sigma2, q=shape.q)
    bulk = bulk_spectrum(dec.eigenvalues, cutoff.cutoff_index, params)
    spectrum = lambda_map(bulk)
    logger.info(f"beta={beta:g}: N={mixed.n_assets}, cutoff={cutoff.cutoff_index}, N_c={spectrum.n_c}, "
                f"lambda_max={spectrum.lambdas[-1]:.4g}")
    return BetaSpectrum(beta=beta, panel=mixed, decomposition=dec, cutoff=cutoff, params=params,
                        bulk=bulk, spectrum=spectrum)


def run_cell(prep: BetaSpectrum, temperature_ratio: float, pot: PotentialParams, cfg: KineticsConfig,
             modes: Sequence[int], seed: int) -> CellRun:
    """Integrates one (beta, T/T_c) cell with T_c from the cell's own spectrum."""
    t_c, _, excluded = critical_temperature_details(pot.a0, prep.density)
    temperature = temperature_ratio * t_c
    cell_cfg = cfg.model_copy(update={"temperature": temperature, "seed": seed})
    ens = integrate(prep.spectrum, pot, cell_cfg, modes=modes, max_workers=1)
    return CellRun(beta=prep.beta, temperature_ratio=temperature_ratio, temperature=temperature,
                   t_c=t_c, excluded_modes=excluded, ensemble=ens)


def sweep_cells(betas: Sequence[float], temperatures: Sequence[float]) -> List[Tuple[int, int]]:
    if not betas or not temperatures:
        raise DomainError("Sweep grid is empty")
    for beta in betas:
        if not -1.0 <= beta <= 1.0:
            raise DomainError(f"beta must lie in [-1, 1], got {beta}", {"beta": beta})
    return [(i, j) for i in range(len(betas)) for j in range(len(temperatures))]


def prepare_betas(panel: PricePanel, betas: Sequence[float], seed: int, kappa: float = CUTOFF_KAPPA,
                  cutoff_index: Optional[int] = None, eigen_method: Optional[str] = None,
                  max_workers: Optional[int] = None) -> List[BetaSpectrum]:
    """prepare_beta for every beta with panel seed derive_seed(seed, i_beta)."""
    def prepare(i: int) -> BetaSpectrum:
        try:
            return prepare_beta(panel, betas[i], derive_seed(seed, i), kappa, cutoff_index, eigen_method)
        except SpectralKineticsError as e:
            raise e.annotate(beta=betas[i])

    return run_ordered(prepare, list(range(len(betas))), max_workers)


def beta_sweep(panel: PricePanel, betas: Sequence[float], modes: Sequence[int], temperatures: Sequence[float],
               cfg: KineticsConfig, pot: Optional[PotentialParams] = None, kappa: float = CUTOFF_KAPPA,
               cutoff_index: Optional[int] = None, threshold: float = SECOND_DERIVATIVE_THRESHOLD,
               smooth_width: int = SMOOTH_WIDTH, short_window: Optional[Tuple[float, float]] = None,
               max_workers: Optional[int] = None, eigen_method: Optional[str] = None,
               short_window_end: float = SHORT_WINDOW_END,
               cell_summary: Optional[Callable[[CellRun], Dict[str, Any]]] = None) -> List[DetectionReport]:
    """
    One DetectionReport per (beta, T/T_c) cell, ordered beta-major.

    Panel seeds are derive_seed(cfg.seed, i_beta) and ensemble seeds
    derive_seed(cfg.seed, i_beta, j_temp), so the report list depends only on
    the panel, the grid and the master seed. Stage errors are re-raised with
    the cell coordinate in their details. cell_summary, when given, runs on
    each finished cell and its result is stored in the report diagnostics.
    """
    pot = pot or PotentialParams()
    cells = sweep_cells(betas, temperatures)
    logger.info(f"Starting beta sweep: {len(betas)} betas x {len(temperatures)} temperatures, modes={list(modes)}")
    prepared = prepare_betas(panel, betas, cfg.seed, kappa, cutoff_index, eigen_method, max_workers)

    def evaluate(cell: Tuple[int, int]) -> DetectionReport:
        i, j = cell
        try:
            run = run_cell(prepared[i], temperatures[j], pot, cfg, modes, derive_seed(cfg.seed, i, j))
            series = {int(mu): correlation_F(run.ensemble, int(mu)) for mu in modes}
            report = detect_signal(series, threshold, beta=betas[i], temperature_ratio=temperatures[j],
                                   ensemble=cfg.ensemble, smooth_width=smooth_width, short_window=short_window,
                                   temperature=run.temperature, t_c=run.t_c, short_window_end=short_window_end)
            if cell_summary is not None:
                report.diagnostics = cell_summary(run)
            return report
        except SpectralKineticsError as e:
            raise e.annotate(beta=betas[i], temperature_ratio=temperatures[j])

    reports = run_ordered(evaluate, cells, max_workers)
    logger.info(f"Beta sweep finished: {len(reports)} reports")
    return reports


def report_rows(reports: Sequence[DetectionReport]) -> pd.DataFrame:
    """Flat table with one row per (beta, T/T_c, mode)."""
    rows = []
    for rep in reports:
        for m in rep.per_mode:
            rows.append({
                "beta": rep.beta, "temperature_ratio": rep.temperature_ratio, "mode": m.mode,
                "alpha": m.fit.alpha, "gamma": m.fit.gamma, "amplitude": m.fit.amplitude, "r2": m.fit.r2,
                "condition_number": m.fit.condition_number, "t_lo": m.fit.window[0], "t_hi": m.fit.window[1],
                "second_derivative_max": m.second_derivative_max, "curvature_noise": m.curvature_noise,
                "curvature_margin": m.curvature_margin, "verdict": m.verdict,
            })
    columns = ["beta", "temperature_ratio", "mode", "alpha", "gamma", "amplitude", "r2", "condition_number",
               "t_lo", "t_hi", "second_derivative_max", "curvature_noise", "curvature_margin", "verdict"]
    return pd.DataFrame(rows, columns=columns)
