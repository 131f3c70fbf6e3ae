"""End-to-end pipelines producing the lineshape and coincidence figures as data.

Each ``figure_*`` function returns a result object holding the arrays and a
flat ``report`` dict; ``write`` saves CSV files (and an SVG when asked and
matplotlib is available).
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import bistability as bis
from .config import RunConfig
from .correlator import CorrelationHistogram, cross_correlate
from .peakfit import (LorentzianFit, PowerScanFit, coincidence_rate, estimate_car,
                      fit_lorentzian, power_scan_fit)
from .sfwm import predict_car
from .tagsim import simulate_stream

log = logging.getLogger(__name__)

FIGURES = ("fig1b", "fig1c", "fig2a", "fig2b", "fig2c")


@dataclass
class FigureResult:
    name: str
    tables: dict = field(default_factory=dict)  # file stem -> (header, rows)
    report: dict = field(default_factory=dict)
    plots: dict = field(default_factory=dict)  # file stem -> (x, points, lines, group)
    data: object = None

    def write(self, out_dir, svg=False):
        os.makedirs(out_dir, exist_ok=True)
        paths = []
        for stem, (header, rows) in self.tables.items():
            path = os.path.join(out_dir, f"{stem}.csv")
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                writer.writerows(rows)
            paths.append(path)
        with open(os.path.join(out_dir, f"{self.name}_report.txt"), "w") as fh:
            fh.write(format_report(self.report))
        if svg:
            paths.extend(_write_svgs(self, out_dir))
        return paths


def format_report(report):
    return "".join(f"{k}={_fmt(v)}\n" for k, v in report.items())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def derived_seed(seed, *path):
    """Independent 64-bit seed for a sub-run identified by ``path``."""
    state = np.random.SeedSequence([seed, *path]).generate_state(1, np.uint64)
    return int(state[0])


# -- thermal lineshape ---------------------------------------------------------

def _sweep_toward_shift(params):
    return "up" if params.beta_prime >= 0 else "down"


def figure_1b(cfg: RunConfig) -> FigureResult:
    params = cfg.lineshape_params()
    span = (cfg.scan_delta_min, cfg.scan_delta_max)
    res = FigureResult("fig1b")
    rows = []
    jumps = {}
    for direction in ("up", "down"):
        scan = bis.simulate_scan(params, span, cfg.scan_points, direction)
        rows.extend((repr(float(d)), repr(float(p)), b, direction)
                    for d, p, b in zip(scan.detunings, scan.p_out, scan.branch_flags))
        jumps[direction] = _largest_jump(scan)
        if direction == _sweep_toward_shift(params):
            beta = bis.extract_lineshift(scan, cfg.lineshift_threshold)
    res.tables["fig1b_scan"] = (["detuning", "p_out", "branch", "direction"], rows)
    res.plots["fig1b_scan"] = ("detuning", [], ["p_out"], "direction")
    res.report.update(
        bistable=bis.detect_bistability(params),
        max_shift_linewidths=params.max_shift,
        jump_detuning_up=jumps["up"],
        jump_detuning_down=jumps["down"],
        lineshift_linewidths=beta,
        temperature_rise_K=bis.temperature_rise(beta, cfg.quality_Q, cfg.thermo_optic_CTO,
                                                cfg.index_n),
    )
    return res


def _largest_jump(scan):
    """Detuning at the largest step in output along the sweep."""
    steps = np.abs(np.diff(scan.p_out))
    i = int(np.argmax(steps))
    return float(scan.detunings[i])


def lineshift_vs_power(cfg: RunConfig, powers=None, direction=None):
    """Extracted lineshift for each transmitted peak power."""
    powers = cfg.lineshape_powers if powers is None else powers
    span = (cfg.scan_delta_min, cfg.scan_delta_max)
    betas, scans = [], []
    for p in powers:
        params = cfg.lineshape_params(p)
        scan = bis.simulate_scan(params, span, cfg.scan_points,
                                 direction or _sweep_toward_shift(params))
        scans.append(scan)
        betas.append(bis.extract_lineshift(scan, cfg.lineshift_threshold))
    return np.asarray(powers, dtype=float), np.asarray(betas), scans


def figure_1c(cfg: RunConfig) -> FigureResult:
    powers, betas, _ = lineshift_vs_power(cfg)
    slope, intercept, r2 = bis.fit_line(powers, betas)
    res = FigureResult("fig1c")
    res.tables["fig1c_lineshift"] = (
        ["p_transmitted_W", "p_intracavity_W", "lineshift_linewidths"],
        [(repr(float(p)), repr(float(p / cfg.outcoupling_eta)), repr(float(b)))
         for p, b in zip(powers, betas)])
    res.plots["fig1c_lineshift"] = ("p_intracavity_W", ["lineshift_linewidths"], [], None)
    res.report.update(slope_per_W=slope, intercept=intercept, r_squared=r2,
                      configured_slope_per_W=cfg.beta_prime / cfg.outcoupling_eta)
    return res


# -- coincidences --------------------------------------------------------------

@dataclass
class CoincidenceRun:
    hist: CorrelationHistogram
    fit: LorentzianFit
    truth: list


def run_coincidences(cfg: RunConfig, p_cav=None, segments=1, seed_path=()):
    """Simulate ``segments`` runs of ``cfg.duration`` and add their histograms."""
    total = None
    truths = []
    for k in range(segments):
        seed = cfg.rng_seed if segments == 1 and not seed_path else derived_seed(
            cfg.rng_seed, *seed_path, k)
        plus, minus, truth = simulate_stream(cfg.sim_config(p_cav=p_cav, rng_seed=seed))
        h = cross_correlate(plus, minus, cfg.bin_width, cfg.window, duration=cfg.duration)
        truths.append(truth)
        if total is None:
            total = h
        else:
            total.counts += h.counts
            total.n_a += h.n_a
            total.n_b += h.n_b
            total.duration += h.duration
        del plus, minus
    return total, truths


def figure_2a(cfg: RunConfig) -> FigureResult:
    hist, truths = run_coincidences(cfg)
    fit = fit_lorentzian(hist, irf_sigma=cfg.irf_sigma)
    car = estimate_car(hist, fit, method=cfg.car_method)
    car_binned = estimate_car(hist, fit, method="binned")
    res = FigureResult("fig2a")
    norm = hist.normalized()
    model = fit.model(hist.bin_centers)
    res.tables["fig2a_histogram"] = (
        ["bin_center_ps", "counts", "normalized", "fit", "fit_normalized"],
        [(int(round(t * 1e12)), int(n), repr(float(v)), repr(float(m)),
          repr(float(m / hist.accidental_level)))
         for t, n, v, m in zip(hist.bin_centers, hist.counts, norm, model)])
    res.plots["fig2a_histogram"] = ("bin_center_ps", ["normalized"], ["fit_normalized"], None)
    res.report.update(
        car=car.value, car_sigma=car.sigma, car_method=car.method,
        car_binned=car_binned.value, car_binned_sigma=car_binned.sigma,
        car_predicted=predict_car(cfg.sfwm_params()),
        fwhm_ps=fit.fwhm * 1e12, fwhm_sigma_ps=fit.sigmas[2] * 1e12,
        center_ps=fit.center * 1e12, center_sigma_ps=fit.sigmas[1] * 1e12,
        reduced_chi2=fit.reduced_chi2,
        detected_pairs=truths[0].detected_pairs,
        tags_plus=hist.n_a, tags_minus=hist.n_b,
    )
    res.data = (hist, fit, car)
    return res


@dataclass
class PowerScan:
    powers: np.ndarray
    rates: np.ndarray
    rate_sigmas: np.ndarray
    cars: list
    fit: PowerScanFit
    reference_fit: LorentzianFit
    histograms: list
    truths: list


def power_scan(cfg: RunConfig, powers=None, segments=None) -> PowerScan:
    """Coincidence rate and binned CAR over a list of intracavity powers.

    Peak center and width come from the highest-power histogram; each
    power's pair rate is its containment-corrected excess within five
    widths of the center.
    """
    powers = np.asarray(cfg.scan_powers if powers is None else powers, dtype=float)
    segments = cfg.scan_segments if segments is None else segments
    hists, truths = [], []
    for i, p in enumerate(powers):
        h, t = run_coincidences(cfg, p_cav=float(p), segments=segments, seed_path=(i,))
        hists.append(h)
        truths.append(t)
        log.info("power %.3f W: %d / %d tags", p, h.n_a, h.n_b)
    ref = fit_lorentzian(hists[int(np.argmax(powers))], irf_sigma=cfg.irf_sigma)
    rates, sigmas, cars = [], [], []
    for h in hists:
        r, s = coincidence_rate(h, ref.center, ref.fwhm)
        rates.append(r)
        sigmas.append(s)
        cars.append(estimate_car(h, method="binned", center=ref.center, fwhm=ref.fwhm))
    fit = power_scan_fit(powers, rates, sigmas)
    return PowerScan(powers, np.array(rates), np.array(sigmas), cars, fit, ref, hists, truths)


def _scan_report(scan: PowerScan, cfg: RunConfig):
    return dict(curvature=scan.fit.curvature, curvature_sigma=scan.fit.curvature_sigma,
                exponent_diagnostic=scan.fit.exponent,
                exponent_sigma=scan.fit.exponent_sigma,
                configured_curvature=cfg.gamma_exp,
                car_predicted=predict_car(cfg.sfwm_params()),
                fwhm_ps=scan.reference_fit.fwhm * 1e12,
                center_ps=scan.reference_fit.center * 1e12)


def figure_2b(cfg: RunConfig, scan: PowerScan | None = None) -> FigureResult:
    scan = scan or power_scan(cfg)
    res = FigureResult("fig2b")
    res.tables["fig2b_rates"] = (
        ["p_cav_W", "pair_rate_per_s", "sigma_per_s", "quadratic_fit_per_s"],
        [(repr(float(p)), repr(float(r)), repr(float(s)), repr(float(scan.fit.curvature * p * p)))
         for p, r, s in zip(scan.powers, scan.rates, scan.rate_sigmas)])
    res.plots["fig2b_rates"] = ("p_cav_W", ["pair_rate_per_s"], ["quadratic_fit_per_s"], None)
    res.report.update(_scan_report(scan, cfg))
    res.data = scan
    return res


def figure_2c(cfg: RunConfig, scan: PowerScan | None = None) -> FigureResult:
    scan = scan or power_scan(cfg)
    predicted = predict_car(cfg.sfwm_params())
    res = FigureResult("fig2c")
    res.tables["fig2c_car"] = (
        ["p_cav_W", "car", "car_sigma", "car_predicted"],
        [(repr(float(p)), repr(float(c.value)), repr(float(c.sigma)), repr(float(predicted)))
         for p, c in zip(scan.powers, scan.cars)])
    res.plots["fig2c_car"] = ("p_cav_W", ["car"], ["car_predicted"], None)
    pulls = [(c.value - predicted) / c.sigma for c in scan.cars]
    slope, _, _ = bis.fit_line(scan.powers, [c.value for c in scan.cars])
    res.report.update(_scan_report(scan, cfg))
    res.report.update(max_abs_pull=float(np.max(np.abs(pulls))), car_slope_per_W=slope)
    res.data = scan
    return res


def reproduce(name, cfg: RunConfig) -> FigureResult:
    builders = {"fig1b": figure_1b, "fig1c": figure_1c, "fig2a": figure_2a,
                "fig2b": figure_2b, "fig2c": figure_2c}
    if name not in builders:
        raise ValueError(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    return builders[name](cfg)


# -- optional plots ----------------------------------------------------------------

def _write_svgs(res: FigureResult, out_dir):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not available; skipping SVG output")
        return []
    paths = []
    for stem, (x_col, points, lines, group) in res.plots.items():
        header, rows = res.tables[stem]
        cols = {h: np.asarray(c) for h, c in zip(header, zip(*rows))}
        groups = np.unique(cols[group]) if group else [None]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for g in groups:
            m = slice(None) if g is None else cols[group] == g
            x = cols[x_col][m].astype(float)
            suffix = "" if g is None else f" ({g})"
            for y in points:
                ax.plot(x, cols[y][m].astype(float), ".", ms=3, label=y + suffix)
            for y in lines:
                ax.plot(x, cols[y][m].astype(float), "-", label=y + suffix)
        ax.set_xlabel(x_col)
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = os.path.join(out_dir, f"{stem}.svg")
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths
