"""
Command line for the spectral-kinetics pipeline.

    spectral-kinetics <spectrum|simulate|analyze|synth> --config run.ini [flags]

Settings come from the built-in defaults, then the INI file, then flags.
Every output embeds the hash of the resolved settings and the master seed.
Exit status: 0 success, 1 computational failure, 2 configuration or input error.
"""

import argparse
import configparser
import json
import math
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from analytics import (
    a_closed, critical_temperature_details, fit_tail, h_bar_points, log_slope, solve_volterra, uniform_grid,
)
from background_tasks import run_ordered
from config import (
    CUTOFF_KAPPA, DEFAULT_ENSEMBLE, DEFAULT_H0, DEFAULT_H1, DEFAULT_INITIAL_AMPLITUDE, DEFAULT_STEPS,
    EIGEN_METHOD, MIN_COVERAGE, MIN_FIT_EIGENVALUES, OUTPUT_DIR, SAMPLE_PANEL_PATH,
    SECOND_DERIVATIVE_THRESHOLD, SHORT_WINDOW_END, SMOOTH_WIDTH, TAIL_WINDOW, WRITE_PLOTS,
)
from detect import BetaSpectrum, CellRun, DetectionReport, beta_sweep, prepare_betas, report_rows, run_cell, sweep_cells
from errors import ConfigurationError, DivergenceError, DomainError, InputDataError, SpectralKineticsError
from kinetics import KineticsConfig, PotentialParams, correlation_F, correlation_K, observable_a
from market import (
    correlation_matrix, load_prices, log_returns, mean_off_diagonal, panel_summary, synth_panel, write_prices,
)
from plotting import plot_exponents, plot_second_derivatives, plot_series, plot_spectrum
from rmt import MPParams, default_outlier_count, fit_mp, fit_rescaled_mp, mp_edges, mp_ks_distance
from series import ObservableSeries
from utils import config_hash, derive_seed, format_error_response, header_lines, log_exception, logger, write_json

# INI section -> {key: RunConfig field}
SECTION_KEYS: Dict[str, Dict[str, str]] = {
    "input": {"path": "input_path", "min_coverage": "min_coverage"},
    "grid": {"betas": "betas", "temperatures": "temperatures", "modes": "modes"},
    "potential": {"h0": "h0", "h1": "h1"},
    "kinetics": {"dt": "dt", "steps": "steps", "t_max": "t_max", "ensemble": "ensemble",
                 "initial_amplitude": "initial_amplitude", "seed": "seed"},
    "cutoff": {"kappa": "kappa", "index": "cutoff_index", "eigen_method": "eigen_method"},
    "detect": {"threshold": "threshold", "smooth_width": "smooth_width", "short_window_end": "short_window_end"},
    "analysis": {"tail_window": "tail_window", "volterra_dt": "volterra_dt", "volterra_t_max": "volterra_t_max"},
    "synth": {"kind": "synth_kind", "n_assets": "synth_assets", "n_days": "synth_days",
              "n_blocks": "synth_blocks", "block_rho": "synth_block_rho"},
    "output": {"dir": "output_dir", "plots": "write_plots"},
}


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [part.strip() for part in value.replace(";", ",").split(",") if part.strip()]
    return value


class RunConfig(BaseModel):
    """Resolved run settings, validated before any computation starts."""

    model_config = ConfigDict(extra="forbid")

    input_path: str = SAMPLE_PANEL_PATH
    min_coverage: float = Field(MIN_COVERAGE, gt=0, le=1)

    betas: List[float] = [0.0]
    temperatures: List[float] = [0.1]
    modes: List[int] = [0, 1, 2]

    h0: float = DEFAULT_H0
    h1: float = DEFAULT_H1

    dt: Optional[float] = Field(None, gt=0)
    steps: int = Field(DEFAULT_STEPS, ge=1)
    t_max: Optional[float] = Field(None, gt=0)
    ensemble: int = Field(DEFAULT_ENSEMBLE, ge=1)
    initial_amplitude: float = Field(DEFAULT_INITIAL_AMPLITUDE, gt=0)
    seed: int = Field(0, ge=0)

    kappa: float = Field(CUTOFF_KAPPA, gt=0)
    cutoff_index: Optional[int] = Field(None, ge=0)
    eigen_method: str = EIGEN_METHOD

    threshold: float = SECOND_DERIVATIVE_THRESHOLD
    smooth_width: int = Field(SMOOTH_WIDTH, ge=1)
    short_window_end: float = Field(SHORT_WINDOW_END, gt=0)

    tail_window: float = Field(TAIL_WINDOW, gt=0, le=1)
    volterra_dt: float = Field(0.05, gt=0)
    volterra_t_max: float = Field(100.0, gt=0)

    synth_kind: str = "independent"
    synth_assets: int = Field(20, ge=2)
    synth_days: int = Field(250, ge=8)
    synth_blocks: int = Field(2, ge=1)
    synth_block_rho: float = Field(0.6, ge=0, lt=1)

    output_dir: str = OUTPUT_DIR
    write_plots: bool = WRITE_PLOTS

    @field_validator("betas", "temperatures", "modes", mode="before")
    @classmethod
    def _parse_list(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("cutoff_index", "dt", "t_max", mode="before")
    @classmethod
    def _parse_optional(cls, value: Any) -> Any:
        if isinstance(value, str) and value.strip().lower() in ("", "auto", "none"):
            return None
        return value

    @field_validator("betas")
    @classmethod
    def _check_betas(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("beta grid is empty")
        bad = [b for b in value if not -1.0 <= b <= 1.0]
        if bad:
            raise ValueError(f"beta values must lie in [-1, 1], got {bad}")
        return value

    @field_validator("temperatures")
    @classmethod
    def _check_temperatures(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("temperature grid is empty")
        if any(r < 0 for r in value):
            raise ValueError("temperature ratios must be nonnegative")
        return value

    @field_validator("modes")
    @classmethod
    def _check_modes(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("mode list is empty")
        if any(m < 0 for m in value):
            raise ValueError("mode indices must be nonnegative")
        return value

    @field_validator("synth_kind")
    @classmethod
    def _check_kind(cls, value: str) -> str:
        if value not in ("independent", "shared", "block"):
            raise ValueError(f"unknown synthetic panel kind '{value}'")
        return value

    @model_validator(mode="after")
    def _check_potential(self) -> "RunConfig":
        if not (self.h1 > 0 and self.h0 < 0):
            raise ValueError(f"potential needs h0 < 0 < h1 for a0 = -h0/h1 > 0, got h0={self.h0}, h1={self.h1}")
        return self

    def potential(self) -> PotentialParams:
        return PotentialParams(h0=self.h0, h1=self.h1)

    def kinetics(self) -> KineticsConfig:
        return KineticsConfig(dt=self.dt, steps=self.steps, t_max=self.t_max, ensemble=self.ensemble,
                              seed=self.seed, initial_amplitude=self.initial_amplitude)

    def hash(self) -> str:
        return config_hash(self.model_dump())

    def stamp(self) -> Dict[str, Any]:
        return {"config_hash": self.hash(), "seed": self.seed}


def read_ini(path: str) -> Dict[str, Any]:
    """Flattens an INI file into RunConfig field values (still strings)."""
    if not os.path.exists(path):
        raise ConfigurationError(f"Config file not found: {path}", {"path": path})
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as e:
        raise ConfigurationError(f"Could not parse config {path}: {e}", {"path": path})
    values: Dict[str, Any] = {}
    for section in parser.sections():
        keys = SECTION_KEYS.get(section)
        if keys is None:
            raise ConfigurationError(f"Unknown config section [{section}] in {path}", {"section": section})
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigurationError(f"Unknown key '{key}' in section [{section}]", {"section": section, "key": key})
            values[keys[key]] = raw
    return values


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    mapping = {"input": "input_path", "beta": "betas", "temp_ratio": "temperatures", "modes": "modes",
               "seed": "seed", "out": "output_dir", "ensemble": "ensemble", "steps": "steps",
               "kind": "synth_kind", "assets": "synth_assets", "days": "synth_days"}
    values = {field: getattr(args, flag) for flag, field in mapping.items() if getattr(args, flag, None) is not None}
    if getattr(args, "no_plots", False):
        values["write_plots"] = False
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    values: Dict[str, Any] = read_ini(args.config) if args.config else {}
    values.update(flag_overrides(args))
    try:
        return RunConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ())) or "config"
        raise ConfigurationError(f"Invalid setting {where}: {first.get('msg')}", {"errors": len(e.errors())})


def require_input(cfg: RunConfig) -> None:
    if not os.path.exists(cfg.input_path):
        raise InputDataError(f"Price file not found: {cfg.input_path}", {"path": cfg.input_path})


def beta_dir(out: str, beta: float) -> str:
    path = os.path.join(out, f"beta_{beta:+.2f}")
    os.makedirs(path, exist_ok=True)
    return path


def cell_dir(out: str, beta: float, ratio: float) -> str:
    path = os.path.join(beta_dir(out, beta), f"T_{ratio:g}")
    os.makedirs(path, exist_ok=True)
    return path


def _description(cfg: RunConfig) -> str:
    return f"config_hash={cfg.hash()}; seed={cfg.seed}"


def _mp_summary(params: MPParams, eigenvalues: Sequence[float]) -> Dict[str, Any]:
    lo, hi = mp_edges(params)
    return {"sigma2": params.sigma2, "q": params.q, "x_minus": lo, "x_plus": hi,
            "ks_distance": mp_ks_distance(eigenvalues, params)}


def spectrum_fits(prep: BetaSpectrum) -> Dict[str, Any]:
    """Plain and rescaled MP fits; q is fixed to N/(P-1) when the spectrum is too small for a free fit."""
    eigs = prep.decomposition.eigenvalues
    q_shape = prep.params.q
    q_fixed = q_shape if eigs.size < MIN_FIT_EIGENVALUES else None
    plain = fit_mp(eigs, q_fixed)
    n_out = prep.cutoff.cutoff_index or default_outlier_count(eigs, plain)
    n_out = min(n_out, (eigs.size - 1) // 2)
    rescaled = fit_rescaled_mp(eigs, n_out, q_fixed)
    return {
        "plain": (plain, _mp_summary(plain, eigs)),
        "rescaled": (rescaled, {**_mp_summary(rescaled, eigs[n_out:]), "n_outliers": int(n_out)}),
        "q_fixed": q_fixed is not None,
    }


def cmd_spectrum(cfg: RunConfig) -> int:
    """eigenvalues.csv, mp_fit.json and spectrum.svg for every beta."""
    require_input(cfg)
    panel = load_prices(cfg.input_path, cfg.min_coverage)
    stamp = cfg.stamp()
    prepared = prepare_betas(panel, cfg.betas, cfg.seed, cfg.kappa, cfg.cutoff_index, cfg.eigen_method)
    for prep in prepared:
        out = beta_dir(cfg.output_dir, prep.beta)
        eigs = prep.decomposition.eigenvalues
        cutoff = prep.cutoff.cutoff_index
        frame = pd.DataFrame({"index": np.arange(eigs.size), "eigenvalue": eigs, "bulk": np.arange(eigs.size) >= cutoff})
        with open(os.path.join(out, "eigenvalues.csv"), "w", encoding="utf-8", newline="") as f:
            f.write(header_lines({**stamp, "beta": prep.beta, "cutoff_index": cutoff}))
            frame.to_csv(f, index=False, float_format="%.12g", lineterminator="\n")

        fits = spectrum_fits(prep)
        write_json(os.path.join(out, "mp_fit.json"), {
            **stamp, "beta": prep.beta, "panel": panel_summary(prep.panel),
            "mean_off_diagonal_correlation": mean_off_diagonal(correlation_matrix(log_returns(prep.panel))),
            "cutoff_index": cutoff, "no_gap_structure": prep.cutoff.no_gap_structure,
            "gap_threshold": prep.cutoff.threshold, "q_fixed_from_shape": fits["q_fixed"],
            "plain": fits["plain"][1], "rescaled": fits["rescaled"][1],
            "lambda_map": {"n_c": prep.spectrum.n_c, "x_plus": prep.bulk.x_plus, "x_minus": prep.bulk.x_minus,
                           "lambda_max": float(prep.spectrum.lambdas[-1])},
        })
        if cfg.write_plots:
            plot_spectrum(os.path.join(out, "spectrum.svg"), eigs,
                          {"MP": fits["plain"][0], "rescaled MP": fits["rescaled"][0]},
                          cutoff_value=float(eigs[cutoff]) if cutoff > 0 else None,
                          title=f"beta = {prep.beta:g}", description=_description(cfg))
        logger.info(f"beta={prep.beta:g}: wrote spectrum outputs to {out}")
    return 0


def _simulate_cell(prep: BetaSpectrum, ratio: float, cfg: RunConfig, seed: int) -> Dict[str, Any]:
    """Runs one cell and keeps only its series; all-diverged cells are reported, not raised."""
    try:
        run = run_cell(prep, ratio, cfg.potential(), cfg.kinetics(), cfg.modes, seed)
    except SpectralKineticsError as e:
        raise e.annotate(beta=prep.beta, temperature_ratio=ratio)
    result: Dict[str, Any] = {"beta": prep.beta, "temperature_ratio": ratio, "temperature": run.temperature,
                              "t_c": run.t_c, "excluded_modes": run.excluded_modes, "dt": run.ensemble.dt,
                              "steps": run.ensemble.steps, "divergence_log": run.ensemble.divergence_log()}
    try:
        result["a"] = observable_a(run.ensemble)
        result["K"] = correlation_K(run.ensemble)
        result["F"] = {mu: correlation_F(run.ensemble, mu) for mu in cfg.modes}
        result["status"] = "ok"
    except DivergenceError as e:
        logger.warning(f"beta={prep.beta:g}, T/T_c={ratio:g}: {e.message}")
        result["status"] = "all_diverged"
    return result


def cmd_simulate(cfg: RunConfig) -> int:
    """a_of_t.csv, F_mu_<mu>.csv, K.csv, divergence_log.json, metadata.json and plots per cell."""
    require_input(cfg)
    panel = load_prices(cfg.input_path, cfg.min_coverage)
    stamp = cfg.stamp()
    cells = sweep_cells(cfg.betas, cfg.temperatures)
    prepared = prepare_betas(panel, cfg.betas, cfg.seed, cfg.kappa, cfg.cutoff_index, cfg.eigen_method)
    results = run_ordered(
        lambda cell: _simulate_cell(prepared[cell[0]], cfg.temperatures[cell[1]], cfg,
                                    derive_seed(cfg.seed, cell[0], cell[1])),
        cells)

    failed = 0
    for res in results:
        out = cell_dir(cfg.output_dir, res["beta"], res["temperature_ratio"])
        meta = {**stamp, "beta": res["beta"], "temperature_ratio": res["temperature_ratio"],
                "temperature": res["temperature"], "t_c": res["t_c"]}
        write_json(os.path.join(out, "divergence_log.json"),
                   {**meta, "diverged": len(res["divergence_log"]), "events": res["divergence_log"]})
        write_json(os.path.join(out, "metadata.json"), {
            **meta, "config": cfg.model_dump(), "status": res["status"], "dt": res["dt"], "steps": res["steps"],
            "excluded_edge_modes": res["excluded_modes"], "a0": cfg.potential().a0,
        })
        if res["status"] != "ok":
            failed += 1
            continue
        res["a"].to_csv(os.path.join(out, "a_of_t.csv"), meta)
        res["K"].to_csv(os.path.join(out, "K.csv"), meta)
        for mu, f in res["F"].items():
            f.to_csv(os.path.join(out, f"F_mu_{mu}.csv"), meta)
        if cfg.write_plots:
            desc = _description(cfg)
            plot_series(os.path.join(out, "a_of_t.svg"), [res["a"]], ylabel="a(t)", description=desc)
            plot_series(os.path.join(out, "K.svg"), [res["K"]], log_log=True, ylabel="K(t)", description=desc)
            plot_series(os.path.join(out, "F_mu.svg"), list(res["F"].values()),
                        labels=[f"mu = {mu}" for mu in res["F"]], ylabel="F_mu(t, 0)", description=desc)
    logger.info(f"Simulation finished: {len(results) - failed} of {len(results)} cells written")
    if failed:
        logger.error(f"{failed} cells had every realization diverge")
        return 1
    return 0


def _tail_summary(series: ObservableSeries, window: float, growing: bool = False) -> Dict[str, Any]:
    if growing:
        try:
            return {"log_slope": log_slope(series, window)}
        except DomainError as e:
            return {"error": e.message}
    try:
        return fit_tail(series, window).model_dump()
    except DomainError as e:
        return {"error": e.message}


def _volterra_cell(prep: BetaSpectrum, ratio: float, cfg: RunConfig) -> Dict[str, Any]:
    a0 = cfg.potential().a0
    density = prep.density
    t_c, hb0, excluded = critical_temperature_details(a0, density)
    temperature = ratio * t_c
    result: Dict[str, Any] = {"beta": prep.beta, "temperature_ratio": ratio, "temperature": temperature,
                              "t_c": t_c, "h_bar_0": hb0, "excluded_edge_modes": excluded}
    try:
        sol = solve_volterra(a0, temperature, density, uniform_grid(cfg.volterra_t_max, cfg.volterra_dt))
    except SpectralKineticsError as e:
        result["G"] = {"error": e.message}
        return result
    recon = a_closed(sol.G, sol.H, sol.F, temperature)
    result["series"] = sol.G
    result["G"] = _tail_summary(sol.G, cfg.tail_window, growing=ratio >= 1.0)
    result["a_closed_max_rel_dev"] = float(np.max(np.abs(recon.values / a0 - 1.0)))
    result["laplace"] = [p.model_dump() for p in h_bar_points(density, [0.1, 1.0, 10.0])]
    return result


def cmd_analyze(cfg: RunConfig) -> int:
    """G_volterra.csv, tail_exponents.json, alpha_gamma.csv, detection_report.json and summary plots."""
    require_input(cfg)
    panel = load_prices(cfg.input_path, cfg.min_coverage)
    stamp = cfg.stamp()
    cells = sweep_cells(cfg.betas, cfg.temperatures)
    prepared = prepare_betas(panel, cfg.betas, cfg.seed, cfg.kappa, cfg.cutoff_index, cfg.eigen_method)

    volterra = run_ordered(lambda cell: _volterra_cell(prepared[cell[0]], cfg.temperatures[cell[1]], cfg), cells)
    for res in volterra:
        if "series" in res:
            out = cell_dir(cfg.output_dir, res["beta"], res["temperature_ratio"])
            res.pop("series").to_csv(os.path.join(out, "G_volterra.csv"),
                                     {**stamp, "beta": res["beta"], "temperature_ratio": res["temperature_ratio"]})

    def k_tail(run: CellRun) -> Dict[str, Any]:
        try:
            return {"K": _tail_summary(correlation_K(run.ensemble), cfg.tail_window)}
        except DivergenceError as e:
            return {"K": {"error": e.message}}

    reports = beta_sweep(panel, cfg.betas, cfg.modes, cfg.temperatures, cfg.kinetics(), cfg.potential(),
                         cfg.kappa, cfg.cutoff_index, cfg.threshold, cfg.smooth_width,
                         short_window_end=cfg.short_window_end, eigen_method=cfg.eigen_method,
                         cell_summary=k_tail)

    tails = [{**res, "K": rep.diagnostics.get("K")} for res, rep in zip(volterra, reports)]
    write_json(os.path.join(cfg.output_dir, "tail_exponents.json"), {**stamp, "cells": tails})
    rows = report_rows(reports)
    with open(os.path.join(cfg.output_dir, "alpha_gamma.csv"), "w", encoding="utf-8", newline="") as f:
        f.write(header_lines(stamp))
        rows.to_csv(f, index=False, float_format="%.12g", lineterminator="\n")
    write_json(os.path.join(cfg.output_dir, "detection_report.json"),
               {**stamp, "schema_version": reports[0].schema_version if reports else None,
                "reports": [r.model_dump() for r in reports]})

    if cfg.write_plots:
        write_summary_plots(cfg, reports)
    logger.info(f"Analysis finished: {len(reports)} cells")
    return 0


def _fit_value(report: DetectionReport, mu: int, name: str) -> float:
    for m in report.per_mode:
        if m.mode == mu:
            value = getattr(m.fit, name)
            return math.nan if value is None else value
    return math.nan


def write_summary_plots(cfg: RunConfig, reports: Sequence[DetectionReport]) -> None:
    desc = _description(cfg)
    for ratio in cfg.temperatures:
        subset = [r for r in reports if r.temperature_ratio == ratio]
        betas = [r.beta for r in subset]
        for name in ("alpha", "gamma"):
            curves = {f"mu = {mu}": [_fit_value(r, mu, name) for r in subset] for mu in cfg.modes}
            plot_exponents(os.path.join(cfg.output_dir, f"{name}_beta_T{ratio:g}.svg"), betas, curves, name,
                           title=f"T/T_c = {ratio:g}", description=desc)
    labels, values = [], []
    for r in reports:
        for m in r.per_mode:
            labels.append(f"b={r.beta:g} T={r.temperature_ratio:g} mu={m.mode}")
            values.append(m.second_derivative_max if m.second_derivative_max is not None else math.nan)
    plot_second_derivatives(os.path.join(cfg.output_dir, "second_derivatives.svg"), labels, values,
                            cfg.threshold, description=desc)


def cmd_synth(cfg: RunConfig) -> int:
    """Synthetic panel CSV in the ingestion schema plus a manifest of its generation parameters."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    panel = synth_panel(cfg.synth_kind, cfg.synth_assets, cfg.synth_days, cfg.seed,
                        n_blocks=cfg.synth_blocks, block_rho=cfg.synth_block_rho)
    stamp = cfg.stamp()
    name = f"panel_{cfg.synth_kind}.csv"
    write_prices(panel, os.path.join(cfg.output_dir, name), stamp)
    write_json(os.path.join(cfg.output_dir, "manifest.json"), {
        **stamp, "file": name, "kind": cfg.synth_kind, "n_assets": cfg.synth_assets, "n_days": cfg.synth_days,
        "n_blocks": cfg.synth_blocks, "block_rho": cfg.synth_block_rho, "panel": panel_summary(panel),
    })
    logger.info(f"Wrote synthetic {cfg.synth_kind} panel to {os.path.join(cfg.output_dir, name)}")
    return 0


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spectral-kinetics",
                                     description="Correlation spectra, Langevin eigen-trajectories and signal detection")
    subparsers = parser.add_subparsers(dest="command")
    for name, fn in COMMANDS.items():
        sub = subparsers.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        sub.add_argument("--config", help="INI file with [input], [grid], [potential], ... sections")
        sub.add_argument("--input", help="price panel CSV")
        sub.add_argument("--beta", type=float, nargs="+", help="beta grid")
        sub.add_argument("--temp-ratio", dest="temp_ratio", type=float, nargs="+", help="T/T_c grid")
        sub.add_argument("--modes", type=int, nargs="+", help="mode indices")
        sub.add_argument("--seed", type=int, help="master seed")
        sub.add_argument("--out", help="output directory")
        sub.add_argument("--ensemble", type=int, help="number of noise realizations")
        sub.add_argument("--steps", type=int, help="integration steps")
        sub.add_argument("--no-plots", dest="no_plots", action="store_true", help="skip SVG output")
        if name == "synth":
            sub.add_argument("--kind", choices=["independent", "shared", "block"])
            sub.add_argument("--assets", type=int)
            sub.add_argument("--days", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2
    try:
        cfg = build_config(args)
        os.makedirs(cfg.output_dir, exist_ok=True)
        logger.info(f"Running '{args.command}' (config {cfg.hash()[:12]}, seed {cfg.seed})")
        return COMMANDS[args.command](cfg)
    except SpectralKineticsError as e:
        log_exception(e, f"'{args.command}' failed")
        print(json.dumps(format_error_response(e.message, e.exit_code, e.details or None), default=str),
              file=sys.stderr)
        return e.exit_code
    except Exception as e:
        log_exception(e, f"Unexpected error in '{args.command}'")
        print(json.dumps(format_error_response(str(e), 1)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
