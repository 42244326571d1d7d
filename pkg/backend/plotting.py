"""SVG figures for the command-line outputs (matplotlib, Agg backend)."""

from typing import Dict, Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from rmt import MPParams, mp_density, mp_edges  # noqa: E402
from series import ObservableSeries  # noqa: E402
from utils import logger  # noqa: E402

matplotlib.rcParams.update({
    "svg.hashsalt": "spectral-kinetics",
    "svg.fonttype": "none",
    "axes.labelsize": 10,
    "font.size": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (6.0, 4.0),
})


def _save(fig, path: str, description: str = "") -> None:
    fig.tight_layout()
    metadata = {"Date": None}
    if description:
        metadata["Description"] = description
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
    logger.debug(f"Wrote {path}")


def plot_spectrum(path: str, eigenvalues: Sequence[float], fits: Dict[str, MPParams],
                  cutoff_value: Optional[float] = None, title: str = "", description: str = "") -> None:
    """Eigenvalue histogram with MP densities overlaid and the bulk cutoff marked."""
    x = np.asarray(eigenvalues, dtype=float)
    fig, ax = plt.subplots()
    ax.hist(x, bins=max(10, min(80, x.size // 4)), density=True, color="0.75", edgecolor="0.5", label="eigenvalues")
    for (name, params), style in zip(fits.items(), ("-", "--", ":")):
        lo, hi = mp_edges(params)
        grid = np.linspace(max(lo, 1e-9), hi, 400)
        ax.plot(grid, mp_density(grid, params), style, label=f"{name} (sigma2={params.sigma2:.3g}, q={params.q:.3g})")
    if cutoff_value is not None:
        ax.axvline(cutoff_value, color="C3", linewidth=1.0, label="bulk cutoff")
    ax.set_xlabel("eigenvalue")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path, description)


def plot_series(path: str, series: Sequence[ObservableSeries], labels: Optional[Sequence[str]] = None,
                log_log: bool = False, ylabel: str = "", title: str = "", description: str = "") -> None:
    """Line plot of one or more series; log_log drops t = 0 and nonpositive values."""
    fig, ax = plt.subplots()
    for k, s in enumerate(series):
        t, v = s.times, s.values
        if log_log:
            keep = (t > 0) & (v > 0)
            t, v = t[keep], v[keep]
        ax.plot(t, v, linewidth=1.0, label=labels[k] if labels else s.label)
    if log_log:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel or (series[0].label if series else ""))
    if title:
        ax.set_title(title)
    if len(series) > 1 or labels:
        ax.legend()
    _save(fig, path, description)


def plot_exponents(path: str, betas: Sequence[float], values: Dict[str, Sequence[float]], ylabel: str,
                   title: str = "", description: str = "") -> None:
    """alpha(beta) or gamma(beta) curves, one per mode label."""
    fig, ax = plt.subplots()
    for name, ys in values.items():
        ax.plot(betas, np.asarray(ys, dtype=float), marker="o", linewidth=1.0, label=name)
    ax.axvline(0.0, color="0.6", linewidth=0.5)
    ax.set_xlabel("beta")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    _save(fig, path, description)


def plot_second_derivatives(path: str, labels: Sequence[str], values: Sequence[float], threshold: float,
                            description: str = "") -> None:
    """Bar panel of the short-time second-derivative maxima against the threshold."""
    fig, ax = plt.subplots(figsize=(max(6.0, 0.35 * len(labels)), 4.0))
    ys = np.asarray(values, dtype=float)
    colors = ["C3" if y > threshold else "C0" for y in np.nan_to_num(ys, nan=-np.inf)]
    ax.bar(range(len(labels)), np.nan_to_num(ys), color=colors)
    ax.axhline(threshold, color="k", linestyle="--", linewidth=0.8, label=f"threshold {threshold:g}")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60, ha="right")
    ax.set_ylabel("max second derivative of F/F(0)")
    ax.legend()
    _save(fig, path, description)
