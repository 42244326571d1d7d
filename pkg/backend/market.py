"""
Price-panel ingestion, log-returns, correlation matrices and GBM simulation.

A panel is N assets by P trading days of strictly positive closing prices.
Time in the GBM model is the integer trading-day index.
"""

import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from config import MIN_COVERAGE
from errors import DomainError, InputDataError
from speclin import SymmetricMatrix
from utils import header_lines, logger, make_rng


@dataclass(frozen=True)
class PricePanel:
    tickers: List[str]
    dates: List[str]
    prices: np.ndarray  # N x P

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.shape != (len(self.tickers), len(self.dates)):
            raise InputDataError(
                f"Price array shape {prices.shape} does not match {len(self.tickers)} tickers x {len(self.dates)} dates")
        if not np.all(prices > 0):
            raise InputDataError("All prices must be strictly positive")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise InputDataError("Dates must be strictly increasing")
        object.__setattr__(self, "prices", prices)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_days(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnPanel:
    tickers: List[str]
    dates: List[str]      # dates of the second price of each pair
    returns: np.ndarray   # N x (P - 1)


class GBMParams(BaseModel):
    """Per-day drift mu, per-day volatility sigma and initial price s0."""

    mu: float
    sigma: float = Field(..., ge=0)
    s0: float = Field(..., gt=0)


def load_prices(path: str, min_coverage: float = MIN_COVERAGE) -> PricePanel:
    """
    Reads a 'date,T1,T2,...' CSV into a PricePanel.

    Assets covering less than min_coverage of the dates with valid positive
    prices are dropped; remaining dates with any gap are then dropped, so
    the panel has no missing cells. With the default coverage of 1.0 any
    asset with a gap is dropped.

    Raises:
        InputDataError: missing or unparseable file, no data rows, fewer than
            2 assets or 8 dates after filtering.
    """
    if not os.path.exists(path):
        raise InputDataError(f"Price file not found: {path}", {"path": path})
    try:
        frame = pd.read_csv(path, comment="#")
    except pd.errors.EmptyDataError:
        raise InputDataError(f"no data rows in {path}", {"path": path})
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise InputDataError(f"Could not parse {path}: {e}", {"path": path})

    if frame.empty:
        raise InputDataError(f"no data rows in {path}", {"path": path})
    if frame.columns[0].strip().lower() != "date":
        raise InputDataError(f"First column of {path} must be 'date', got '{frame.columns[0]}'")

    frame = frame.rename(columns={frame.columns[0]: "date"})
    try:
        frame["date"] = pd.to_datetime(frame["date"], format="ISO8601")
    except (ValueError, TypeError) as e:
        raise InputDataError(f"Unparseable dates in {path}: {e}", {"path": path})
    if frame["date"].duplicated().any():
        raise InputDataError(f"Duplicate dates in {path}", {"path": path})
    frame = frame.sort_values("date").set_index("date")

    values = frame.apply(pd.to_numeric, errors="coerce")
    values = values.where(values > 0)
    coverage = values.notna().mean(axis=0)
    kept = coverage[coverage >= min_coverage - 1e-12].index
    dropped = [str(t) for t in values.columns if t not in kept]
    if dropped:
        logger.info(f"Dropping {len(dropped)} assets with gaps: {', '.join(dropped[:10])}"
                    f"{' ...' if len(dropped) > 10 else ''}")
    values = values[kept].dropna(axis=0, how="any")

    if values.shape[1] < 2:
        raise InputDataError(f"Fewer than 2 complete assets in {path}", {"path": path})
    if values.shape[0] < 8:
        raise InputDataError(f"Fewer than 8 complete dates in {path}", {"path": path})

    logger.info(f"Loaded {values.shape[1]} assets x {values.shape[0]} days from {path}")
    return PricePanel(
        tickers=[str(t) for t in values.columns],
        dates=[d.strftime("%Y-%m-%d") for d in values.index],
        prices=values.to_numpy(dtype=float).T.copy(),
    )


def write_prices(panel: PricePanel, path: str, meta: Optional[Dict[str, Any]] = None) -> None:
    """Writes a panel in the ingestion schema, preceded by optional "# key: value" lines."""
    frame = pd.DataFrame(panel.prices.T, columns=panel.tickers)
    frame.insert(0, "date", panel.dates)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header_lines(meta))
        frame.to_csv(f, index=False, float_format="%.10g", lineterminator="\n")


def log_returns(panel: PricePanel) -> ReturnPanel:
    returns = np.diff(np.log(panel.prices), axis=1)
    return ReturnPanel(tickers=list(panel.tickers), dates=list(panel.dates[1:]), returns=returns)


def correlation_matrix(rp: ReturnPanel) -> SymmetricMatrix:
    """
    Pearson correlation of log-returns with time averages over the P - 1
    observations (population convention); the diagonal is exactly 1.

    Raises:
        DomainError: an asset has zero return variance (ticker named).
    """
    r = np.asarray(rp.returns, dtype=float)
    if r.shape[1] < 2:
        raise DomainError("Correlation needs at least 2 time points")
    centered = r - r.mean(axis=1, keepdims=True)
    std = np.sqrt(np.mean(centered ** 2, axis=1))
    flat = np.flatnonzero(std == 0)
    if flat.size:
        ticker = rp.tickers[int(flat[0])]
        raise DomainError(f"Asset {ticker} has zero return variance", {"ticker": ticker})
    cov = centered @ centered.T / r.shape[1]
    corr = cov / np.outer(std, std)
    corr = np.clip(0.5 * (corr + corr.T), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return SymmetricMatrix(corr)


def mean_off_diagonal(m: SymmetricMatrix) -> float:
    a = m.entries
    n = a.shape[0]
    return float((np.sum(a) - np.trace(a)) / (n * (n - 1)))


def estimate_gbm(prices: Sequence[float]) -> GBMParams:
    """
    GBM parameters from one price series.

    sigma is the sample standard deviation of daily log-returns; mu adds the
    Ito correction sigma^2/2 to the mean log-return; s0 is the first price.
    """
    s = np.asarray(prices, dtype=float)
    if s.size < 8:
        raise DomainError(f"GBM estimation needs at least 8 prices, got {s.size}")
    r = np.diff(np.log(s))
    sigma = float(np.std(r, ddof=1))
    return GBMParams(mu=float(np.mean(r)) + 0.5 * sigma ** 2, sigma=sigma, s0=float(s[0]))


def simulate_gbm(params: GBMParams, horizon: int, noise: Sequence[float]) -> np.ndarray:
    """
    S_t = S_0 exp((mu - sigma^2/2) t + sigma sum_{s <= t} xi_s), t = 0 .. horizon - 1.

    Args:
        noise: horizon - 1 standard-normal Wiener increments.
    """
    if horizon < 1:
        raise DomainError(f"horizon must be at least 1, got {horizon}")
    xi = np.asarray(noise, dtype=float)
    if xi.size < horizon - 1:
        raise DomainError(f"Need {horizon - 1} increments, got {xi.size}")
    t = np.arange(horizon, dtype=float)
    w = np.concatenate(([0.0], np.cumsum(xi[:horizon - 1])))
    return params.s0 * np.exp((params.mu - 0.5 * params.sigma ** 2) * t + params.sigma * w)


def _shared_params(estimates: List[GBMParams]) -> List[GBMParams]:
    mu = float(np.mean([g.mu for g in estimates]))
    sigma = float(np.mean([g.sigma for g in estimates]))
    return [GBMParams(mu=mu, sigma=sigma, s0=g.s0) for g in estimates]


def build_beta_panel(real: PricePanel, beta: float, seed: int, share_params: bool = False) -> PricePanel:
    """
    Interpolates real prices with simulated GBM paths.

    beta >= 0: S_sim = beta S_gbm + (1 - beta) S with an independent Wiener
    stream per asset. beta < 0: S_sim = -beta S_gbm_corr + (1 + beta) S where
    every asset reads one shared stream. GBM parameters are estimated per
    asset; share_params replaces (mu, sigma) by their cross-sectional means.
    """
    if not -1.0 <= beta <= 1.0:
        raise DomainError(f"beta must lie in [-1, 1], got {beta}", {"beta": beta})
    if beta == 0.0:
        return PricePanel(tickers=list(real.tickers), dates=list(real.dates), prices=real.prices.copy())

    horizon = real.n_days
    estimates = [estimate_gbm(row) for row in real.prices]
    if share_params:
        estimates = _shared_params(estimates)

    if beta > 0:
        streams = [make_rng(seed, 0, i).standard_normal(horizon - 1) for i in range(real.n_assets)]
    else:
        common = make_rng(seed, 1).standard_normal(horizon - 1)
        streams = [common] * real.n_assets

    simulated = np.vstack([simulate_gbm(g, horizon, xi) for g, xi in zip(estimates, streams)])
    weight = abs(beta)
    mixed = weight * simulated + (1.0 - weight) * real.prices
    return PricePanel(tickers=list(real.tickers), dates=list(real.dates), prices=mixed)


def _business_dates(n_days: int, start: str = "2019-01-02") -> List[str]:
    return [d.strftime("%Y-%m-%d") for d in pd.bdate_range(start=start, periods=n_days)]


def synth_panel(kind: str, n_assets: int, n_days: int, seed: int, mu: float = 3e-4,
                sigma: float = 0.015, s0: float = 100.0, n_blocks: int = 2,
                block_rho: float = 0.6) -> PricePanel:
    """
    Synthetic fixture panels.

    Args:
        kind: 'independent' (independent GBM, heterogeneous volatility),
            'shared' (every asset reads one Wiener stream) or 'block'
            (n_blocks equal blocks with in-block return correlation block_rho).
    """
    if n_assets < 2 or n_days < 8:
        raise DomainError("Synthetic panel needs at least 2 assets and 8 days")
    rng = make_rng(seed, 2)
    vols = sigma * (0.5 + rng.random(n_assets))
    starts = s0 * (0.5 + rng.random(n_assets))
    steps = n_days - 1

    if kind == "independent":
        z = rng.standard_normal((n_assets, steps))
    elif kind == "shared":
        z = np.tile(rng.standard_normal(steps), (n_assets, 1))
    elif kind == "block":
        if not 0.0 <= block_rho < 1.0:
            raise DomainError(f"block_rho must lie in [0, 1), got {block_rho}")
        labels = np.arange(n_assets) * n_blocks // n_assets
        factors = rng.standard_normal((n_blocks, steps))
        idio = rng.standard_normal((n_assets, steps))
        z = np.sqrt(block_rho) * factors[labels] + np.sqrt(1.0 - block_rho) * idio
    else:
        raise DomainError(f"Unknown synthetic panel kind '{kind}'")

    increments = (mu - 0.5 * vols[:, None] ** 2) + vols[:, None] * z
    log_paths = np.concatenate([np.zeros((n_assets, 1)), np.cumsum(increments, axis=1)], axis=1)
    prices = starts[:, None] * np.exp(log_paths)
    tickers = [f"SYN{i:03d}" for i in range(n_assets)]
    return PricePanel(tickers=tickers, dates=_business_dates(n_days), prices=prices)


def panel_summary(panel: PricePanel) -> Dict[str, Any]:
    return {"n_assets": panel.n_assets, "n_days": panel.n_days,
            "first_date": panel.dates[0], "last_date": panel.dates[-1]}
