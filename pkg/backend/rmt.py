"""
Marchenko-Pastur law, MP fitting, bulk-cutoff detection and the lambda-map.

The MP law is parameterised by the variance sigma2 and the aspect ratio
q = (number of variables) / (number of observations). The source material
also writes the theorem with q = observations / variables; mp_params_from_ratio
accepts either convention explicitly and always returns the internal one.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize, stats

from config import CUTOFF_KAPPA, FIT_GRID_POINTS, MIN_FIT_EIGENVALUES
from errors import DegenerateFitError, DomainError
from speclin import SpectralDecomposition
from utils import logger


class MPParams(BaseModel):
    """Variance sigma2 and aspect ratio q of the MP law."""

    model_config = ConfigDict(frozen=True)

    sigma2: float = Field(..., gt=0)
    q: float = Field(..., gt=0)


def mp_params_for_shape(n_variables: int, n_observations: int, sigma2: float = 1.0) -> MPParams:
    """MPParams for an n_variables x n_variables sample matrix built from n_observations."""
    return MPParams(sigma2=sigma2, q=n_variables / n_observations)


def mp_params_from_ratio(ratio: float, sigma2: float = 1.0,
                         convention: str = "variables_over_observations") -> MPParams:
    """
    MPParams from an aspect ratio given in either convention.

    Args:
        convention: 'variables_over_observations' (internal, q = N/P) or
            'observations_over_variables' (q = T/N as the theorem is stated);
            the latter is inverted on the way in.
    """
    if ratio <= 0:
        raise DomainError(f"Aspect ratio must be positive, got {ratio}")
    if convention == "variables_over_observations":
        return MPParams(sigma2=sigma2, q=ratio)
    if convention == "observations_over_variables":
        return MPParams(sigma2=sigma2, q=1.0 / ratio)
    raise DomainError(f"Unknown q convention '{convention}'")


def mp_edges(params: MPParams) -> Tuple[float, float]:
    """Returns (x_minus, x_plus) = sigma2 (1 -+ sqrt q)^2."""
    root = np.sqrt(params.q)
    return params.sigma2 * (1.0 - root) ** 2, params.sigma2 * (1.0 + root) ** 2


def mp_density(x, params: MPParams):
    """
    MP density sqrt((x+ - x)(x - x-)) / (2 pi sigma2 q x) on [x-, x+], 0 outside.

    For q > 1 the continuous part carries mass 1/q; the rest sits at x = 0.
    Accepts scalars or arrays.
    """
    x_minus, x_plus = mp_edges(params)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    inside = (xa > x_minus) & (xa < x_plus) & (xa > 0)
    out = np.zeros_like(xa)
    xi = xa[inside]
    out[inside] = np.sqrt((x_plus - xi) * (xi - x_minus)) / (2.0 * np.pi * params.sigma2 * params.q * xi)
    return float(out[0]) if np.ndim(x) == 0 else out


def mp_cdf(x, params: MPParams):
    """
    Closed-form MP cumulative distribution.

    Uses the substitution x = m + r cos(theta) with m = sigma2 (1 + q) and
    r = 2 sigma2 sqrt(q), which turns the density into elementary terms.
    """
    s2, q = params.sigma2, params.q
    x_minus, x_plus = mp_edges(params)
    m = s2 * (1.0 + q)
    r = 2.0 * s2 * np.sqrt(q)
    s = s2 * abs(1.0 - q)
    coef = 1.0 - (m / r) ** 2

    def antiderivative(theta):
        value = m * theta / r ** 2 - np.sin(theta) / r
        if s > 0:
            ratio = np.sqrt((m - r) / (m + r))
            value = value + coef * (2.0 / s) * np.arctan2(ratio * np.sin(theta / 2.0), np.cos(theta / 2.0))
        return value

    xa = np.asarray(x, dtype=float)
    clipped = np.clip(xa, x_minus, x_plus)
    theta = np.arccos(np.clip((clipped - m) / r, -1.0, 1.0))
    cont = r ** 2 / (2.0 * np.pi * s2 * q) * (antiderivative(np.pi) - antiderivative(theta))
    cont = np.where(xa <= x_minus, 0.0, cont)
    if q > 1.0:
        cont = cont + np.where(xa >= 0.0, 1.0 - 1.0 / q, 0.0)
    cont = np.clip(cont, 0.0, 1.0)
    return float(cont) if np.ndim(x) == 0 else cont


def mp_ks_distance(eigenvalues: Sequence[float], params: MPParams) -> float:
    """Kolmogorov-Smirnov distance between a spectrum and the MP CDF."""
    x = np.asarray(eigenvalues, dtype=float)
    return float(stats.kstest(x, lambda v: mp_cdf(v, params)).statistic)


def mp_quantiles(n: int, params: MPParams) -> np.ndarray:
    """
    Deterministic MP sample: the quantiles at (k + 1/2)/n, returned descending.
    """
    if n < 1:
        raise DomainError("Need at least one quantile")
    x_minus, x_plus = mp_edges(params)
    targets = (np.arange(n) + 0.5) / n
    lo = np.full(n, min(x_minus, 0.0) if params.q > 1 else x_minus)
    hi = np.full(n, x_plus)
    # bisection on the monotone CDF, vectorised over all targets
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = mp_cdf(mid, params) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.sort(0.5 * (lo + hi))[::-1]


def _empirical_cdf(sorted_x: np.ndarray, grid: np.ndarray) -> np.ndarray:
    return np.searchsorted(sorted_x, grid, side="right") / sorted_x.size


def _fit_grid(x: np.ndarray, points: int) -> np.ndarray:
    return np.linspace(x.min(), x.max(), points)


def cdf_objective(eigenvalues: Sequence[float], params: MPParams, points: int = FIT_GRID_POINTS) -> float:
    """Sum of squared differences between the empirical and MP CDFs on the fit grid."""
    x = np.sort(np.asarray(eigenvalues, dtype=float))
    grid = _fit_grid(x, points)
    return float(np.sum((_empirical_cdf(x, grid) - mp_cdf(grid, params)) ** 2))


def _check_fit_input(eigenvalues: Sequence[float], minimum: int = MIN_FIT_EIGENVALUES) -> np.ndarray:
    x = np.asarray(eigenvalues, dtype=float)
    if x.size < minimum:
        raise DomainError(f"MP fit needs at least {minimum} eigenvalues, got {x.size}")
    if np.ptp(x) == 0.0:
        raise DegenerateFitError("All eigenvalues are equal; MP fit is degenerate",
                                 {"value": float(x[0]), "count": int(x.size)})
    return x


def _fit_q_given_sigma2(s_unit: float, grid: np.ndarray, ecdf: np.ndarray) -> float:
    def objective(log_q: float) -> float:
        return float(np.sum((ecdf - mp_cdf(grid, MPParams(sigma2=s_unit, q=float(np.exp(log_q))))) ** 2))

    res = optimize.minimize_scalar(objective, bounds=(np.log(1e-4), np.log(1e2)), method="bounded",
                                   options={"xatol": 1e-10})
    return float(np.exp(res.x))


def fit_mp(eigenvalues: Sequence[float], q_fixed: Optional[float] = None) -> MPParams:
    """
    Fits the MP law to a spectrum.

    With q_fixed, sigma2 is the eigenvalue mean (first MP moment). Otherwise
    (sigma2, q) minimise the CDF least-squares objective on a fixed grid. The
    fit runs on the spectrum divided by its mean, so it is exactly scale
    equivariant.
    """
    x = _check_fit_input(eigenvalues, 2 if q_fixed is not None else MIN_FIT_EIGENVALUES)
    mean = float(np.mean(x))
    if q_fixed is not None:
        return MPParams(sigma2=mean, q=q_fixed)

    x_unit = np.sort(x / mean)
    grid = _fit_grid(x_unit, FIT_GRID_POINTS)
    ecdf = _empirical_cdf(x_unit, grid)

    def objective(theta: np.ndarray) -> float:
        params = MPParams(sigma2=float(np.exp(theta[0])), q=float(np.exp(theta[1])))
        return float(np.sum((ecdf - mp_cdf(grid, params)) ** 2))

    q0 = float(np.clip(np.var(x_unit), 1e-3, 10.0))
    res = optimize.minimize(objective, x0=np.array([0.0, np.log(q0)]), method="Nelder-Mead",
                            options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000})
    s_unit, q = float(np.exp(res.x[0])), float(np.exp(res.x[1]))
    logger.debug(f"MP fit: sigma2={s_unit * mean:.6g}, q={q:.6g}, objective={res.fun:.3e}")
    return MPParams(sigma2=s_unit * mean, q=q)


def fit_rescaled_mp(eigenvalues: Sequence[float], n_outliers: int,
                    q_fixed: Optional[float] = None) -> MPParams:
    """
    MP fit after removing the n_outliers largest eigenvalues.

    sigma2 is set so the total trace is conserved:
    sigma2_bulk = (sum(all) - sum(outliers)) / (N - n_outliers).
    q is refit on the bulk with sigma2 held fixed unless q_fixed is given.
    """
    x = _check_fit_input(eigenvalues, 2 if q_fixed is not None else MIN_FIT_EIGENVALUES)
    if n_outliers < 0 or n_outliers >= x.size / 2:
        raise DomainError(f"n_outliers must be in [0, N/2), got {n_outliers} for N={x.size}")
    if n_outliers == 0:
        return fit_mp(x, q_fixed)

    ordered = np.sort(x)[::-1]
    outliers, bulk = ordered[:n_outliers], ordered[n_outliers:]
    sigma2_bulk = (float(np.sum(x)) - float(np.sum(outliers))) / (x.size - n_outliers)
    if q_fixed is not None:
        return MPParams(sigma2=sigma2_bulk, q=q_fixed)
    if np.ptp(bulk) == 0.0:
        raise DegenerateFitError("Bulk eigenvalues are all equal after outlier removal")

    x_unit = np.sort(bulk / sigma2_bulk)
    grid = _fit_grid(x_unit, FIT_GRID_POINTS)
    q = _fit_q_given_sigma2(1.0, grid, _empirical_cdf(x_unit, grid))
    return MPParams(sigma2=sigma2_bulk, q=q)


def default_outlier_count(eigenvalues: Sequence[float], params: MPParams) -> int:
    """Number of eigenvalues above the MP upper edge, capped below N/2."""
    x = np.asarray(eigenvalues, dtype=float)
    _, x_plus = mp_edges(params)
    count = int(np.sum(x > x_plus))
    return min(count, (x.size - 1) // 2)


@dataclass(frozen=True)
class CutoffResult:
    cutoff_index: int
    no_gap_structure: bool
    threshold: float


def detect_bulk_cutoff(eigenvalues: Sequence[float], kappa: float = CUTOFF_KAPPA) -> CutoffResult:
    """
    Gap-based spike/bulk split of a descending spectrum.

    A gap is large when it exceeds kappa * W / N, W being the spectral width.
    The cutoff is the first index after which every gap is small; the
    eigenvalues before it are spikes. When the large gaps do not form a clean
    leading run, the result is the clean prefix and no_gap_structure is set;
    when that would leave fewer than two bulk eigenvalues, the cutoff is 0.

    A spectrum with no large gap at all returns (0, no_gap_structure=False):
    no spikes were found, which is not the same as a gap pattern that could
    not be read (no_gap_structure=True).
    """
    x = np.asarray(eigenvalues, dtype=float)
    n = x.size
    if n < 8:
        raise DomainError(f"Cutoff detection needs at least 8 eigenvalues, got {n}")
    if kappa <= 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    if np.any(np.diff(x) > 0):
        raise DomainError("Eigenvalues must be sorted in descending order")

    width = float(x[0] - x[-1])
    threshold = kappa * width / n
    gaps = x[:-1] - x[1:]
    large = gaps > threshold
    if not np.any(large):
        return CutoffResult(0, False, threshold)

    candidate = int(np.flatnonzero(large)[-1]) + 1
    if np.all(large[:candidate]) and n - candidate >= 2:
        return CutoffResult(candidate, False, threshold)

    prefix = int(np.argmin(large)) if not np.all(large) else gaps.size
    if n - prefix < 2 or prefix == 0:
        logger.warning("No spike/bulk gap structure found; treating the whole spectrum as bulk")
        return CutoffResult(0, True, threshold)
    logger.warning(f"Gap structure is not clean; using the leading run of {prefix} spikes")
    return CutoffResult(prefix, True, threshold)


@dataclass(frozen=True)
class BulkSpectrum:
    bulk_eigenvalues: np.ndarray  # descending
    x_plus: float
    x_minus: float
    cutoff_index: int

    def __post_init__(self):
        b = np.asarray(self.bulk_eigenvalues, dtype=float)
        if b.size < 2:
            raise DomainError(f"Bulk needs at least 2 eigenvalues, got {b.size}")
        if not b.max() <= self.x_plus:
            raise DomainError(f"Bulk maximum {b.max()} exceeds x_plus {self.x_plus}")
        object.__setattr__(self, "bulk_eigenvalues", b)

    @property
    def n_c(self) -> int:
        return self.bulk_eigenvalues.size


@dataclass(frozen=True)
class KineticSpectrum:
    """Ascending kinetic rates lambda_mu with uniform weights 1/N_c."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise DomainError("Kinetic spectrum must be a non-empty 1-D list")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise DomainError("Kinetic rates must be finite and nonnegative")
        if np.any(np.diff(lam) < 0):
            raise DomainError("Kinetic rates must be ascending")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def n_c(self) -> int:
        return self.lambdas.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_c, 1.0 / self.n_c)

    @property
    def has_edge_mode(self) -> bool:
        return self.lambdas[0] == 0.0


def bulk_spectrum(eigenvalues: Sequence[float], cutoff_index: int,
                  params: Optional[MPParams] = None) -> BulkSpectrum:
    """
    Builds the bulk from a descending spectrum.

    x_plus is the largest bulk eigenvalue, so that mode maps to lambda = 0.
    x_minus is the MP lower edge of params when it lies strictly below the
    smallest bulk eigenvalue, otherwise the smallest eigenvalue minus the
    smallest positive consecutive gap.
    """
    x = np.asarray(eigenvalues, dtype=float)
    bulk = x[cutoff_index:]
    if bulk.size < 2:
        raise DomainError(f"Cutoff index {cutoff_index} leaves fewer than 2 bulk eigenvalues")
    x_min = float(bulk.min())
    x_minus = None
    if params is not None:
        edge, _ = mp_edges(params)
        if edge < x_min:
            x_minus = float(edge)
    if x_minus is None:
        gaps = bulk[:-1] - bulk[1:]
        positive = gaps[gaps > 0]
        if positive.size == 0:
            raise DomainError("Bulk eigenvalues are all equal; no lower edge can be placed")
        x_minus = x_min - float(positive.min())
    return BulkSpectrum(bulk_eigenvalues=bulk, x_plus=float(bulk.max()), x_minus=x_minus,
                        cutoff_index=int(cutoff_index))


def lambda_map(bulk: BulkSpectrum) -> KineticSpectrum:
    """
    lambda_mu = (x_mu - x_minus)^-1 - (x_plus - x_minus)^-1, returned ascending.

    Raises:
        DomainError: naming the first index with x_mu <= x_minus.
    """
    x = bulk.bulk_eigenvalues
    bad = np.flatnonzero(x <= bulk.x_minus)
    if bad.size:
        i = int(bad[0])
        raise DomainError(f"Eigenvalue at bulk index {i} ({x[i]}) is not above x_minus ({bulk.x_minus})",
                          {"index": i})
    lam = 1.0 / (x - bulk.x_minus) - 1.0 / (bulk.x_plus - bulk.x_minus)
    return KineticSpectrum(lambdas=np.sort(lam))


def spectrum_from_decomposition(dec: SpectralDecomposition, kappa: float = CUTOFF_KAPPA,
                                cutoff_index: Optional[int] = None,
                                params: Optional[MPParams] = None) -> Tuple[BulkSpectrum, KineticSpectrum]:
    """Cutoff detection (or manual index) followed by the lambda-map."""
    if cutoff_index is None:
        cutoff_index = detect_bulk_cutoff(dec.eigenvalues, kappa).cutoff_index
    bulk = bulk_spectrum(dec.eigenvalues, cutoff_index, params)
    return bulk, lambda_map(bulk)
