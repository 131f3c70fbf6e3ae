"""``cavitypairs`` command line.

Subcommands: ``cavity``, ``lineshape``, ``simulate``, ``correlate`` and
``reproduce``. Each reads an optional ``key = value`` config file plus
``--set key=value`` overrides and echoes the fully resolved configuration
(to ``resolved.cfg`` in the output directory, or to stderr).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

from . import bistability as bis
from . import cavity, figures
from .config import RunConfig
from .correlator import cross_correlate, cross_correlate_bruteforce
from .errors import CavityPairsError, ConfigError
from .peakfit import estimate_car, fit_lorentzian
from .tagio import read_tags, write_tags
from .tagsim import simulate_stream

log = logging.getLogger("cavitypairs")


def load_config(path=None, overrides=()):
    cfg = RunConfig.from_file(path) if path else RunConfig()
    if overrides:
        keys = []
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            keys.append(item.split("=", 1)[0].strip())
        parsed = RunConfig.from_text("\n".join(overrides), source="--set")
        cfg = cfg.replace(**{k: getattr(parsed, k) for k in keys})
        cfg.validate()
    return cfg


def _echo(cfg, out_dir=None):
    if out_dir:
        with open(os.path.join(out_dir, "resolved.cfg"), "w", encoding="utf-8") as fh:
            fh.write(cfg.dump())
    else:
        sys.stderr.write(cfg.dump())


def _emit(report, path=None):
    text = figures.format_report(report)
    sys.stdout.write(text)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}") from None


# -- subcommands -----------------------------------------------------------------

def cmd_cavity(args, cfg):
    geom, med = cfg.geometry(), cfg.medium()
    empty = cavity.derive_properties(geom, finesse=cfg.finesse_measured,
                                     convention=cfg.finesse_convention)
    filled = cavity.derive_properties(geom, med, finesse=cfg.finesse_measured,
                                      convention=cfg.finesse_convention)
    mirror_finesse = math.pi / cavity.round_trip_loss(geom, cfg.finesse_convention)
    report = {
        "fsr_empty_hz": empty.fsr_hz,
        "fsr_filled_hz": filled.fsr_hz,
        "finesse": filled.finesse,
        "finesse_from_mirrors": mirror_finesse,
        "linewidth_empty_hz": empty.linewidth_hz,
        "linewidth_hz": filled.linewidth_hz,
        "waist_m": filled.waist_w0,
        "quality_Q": filled.quality_Q,
    }
    if cfg.fsr_empty_measured and cfg.fsr_filled_measured:
        report["index_from_fsr"] = cavity.infer_index_from_fsr(cfg.fsr_empty_measured,
                                                               cfg.fsr_filled_measured)
    if cfg.finesse_measured:
        report["absorption_upper_bound_per_m"] = cavity.absorption_upper_bound(
            cfg.finesse_measured, cfg.finesse_sigma, geom, med)
    disp = cfg.dispersion()
    for k in range(cfg.mode_orders + 1):
        nu_p, nu_m = cavity.mode_frequencies(cfg.pump_frequency, filled.fsr_hz, k, disp)
        report[f"mode_{k}_plus_hz"] = nu_p
        report[f"mode_{k}_minus_hz"] = nu_m
        report[f"mode_{k}_mismatch_hz"] = cavity.energy_mismatch(k, disp)
    _emit(report, args.report)
    _echo(cfg)


def cmd_lineshape(args, cfg):
    os.makedirs(args.out, exist_ok=True)
    powers = _floats(args.powers) if args.powers else cfg.lineshape_powers
    direction = args.direction or cfg.scan_direction
    powers, betas, scans = figures.lineshift_vs_power(cfg, powers, direction)
    for i, scan in enumerate(scans):
        scan.to_csv(os.path.join(args.out, f"scan_{i:02d}.csv"))
    with open(os.path.join(args.out, "lineshift.csv"), "w", encoding="utf-8") as fh:
        fh.write("p_transmitted_W,p_intracavity_W,lineshift_linewidths\n")
        for p, b in zip(powers, betas):
            fh.write(f"{p!r},{p / cfg.outcoupling_eta!r},{float(b)!r}\n")
    report = {"direction": direction, "n_powers": len(powers)}
    if len(powers) >= 2:
        slope, intercept, r2 = bis.fit_line(powers, betas)
        report.update(slope_per_W=slope, intercept=intercept, r_squared=r2)
    _emit(report, os.path.join(args.out, "report.txt"))
    _echo(cfg, args.out)


def cmd_simulate(args, cfg):
    os.makedirs(args.out, exist_ok=True)
    plus, minus, truth = simulate_stream(cfg.sim_config())
    write_tags(plus, os.path.join(args.out, "plus.ttag"))
    write_tags(minus, os.path.join(args.out, "minus.ttag"))
    with open(os.path.join(args.out, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.csv:
        plus.to_csv(os.path.join(args.out, "plus.csv"))
        minus.to_csv(os.path.join(args.out, "minus.csv"))
    _emit({"tags_plus": truth.tags_plus, "tags_minus": truth.tags_minus,
           "detected_pairs": truth.detected_pairs})
    _echo(cfg, args.out)


def cmd_correlate(args, cfg):
    a = read_tags(args.tagfile_a)
    b = read_tags(args.tagfile_b)
    bin_width = cfg.bin_width if args.bin is None else args.bin
    window = cfg.window if args.window is None else args.window
    if args.brute_force:
        hist = cross_correlate_bruteforce(a, b, bin_width, window)
    else:
        hist = cross_correlate(a, b, bin_width, window)
    out = args.out or "histogram.csv"
    hist.to_csv(out)
    report = {"bins": hist.counts.size, "bin_width_ps": hist.bin_width_ps,
              "tags_a": hist.n_a, "tags_b": hist.n_b, "duration_s": hist.duration,
              "total_counts": int(hist.counts.sum())}
    if args.fit:
        irf = cfg.irf_sigma if args.irf_sigma is None else args.irf_sigma
        fit = fit_lorentzian(hist, irf_sigma=irf)
        car = estimate_car(hist, fit, method=cfg.car_method)
        report.update(car=car.value, car_sigma=car.sigma, car_method=car.method,
                      fwhm_ps=fit.fwhm * 1e12, center_ps=fit.center * 1e12,
                      baseline=fit.baseline, reduced_chi2=fit.reduced_chi2)
        if car.infinite:
            report["car_lower_bound"] = car.lower_bound
    _emit(report, args.report)
    _echo(cfg)


def cmd_reproduce(args, cfg):
    os.makedirs(args.out, exist_ok=True)
    res = figures.reproduce(args.figure, cfg)
    res.write(args.out, svg=args.svg)
    _emit(res.report)
    _echo(cfg, args.out)


# -- entry point -------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cavitypairs",
        description="Cavity photon-pair source: model, simulation and coincidence analysis.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_positional=True):
        if config_positional:
            p.add_argument("config", nargs="?", help="key = value config file")
        else:
            p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("cavity", help="resonator properties and mode table")
    common(p)
    p.add_argument("--report", help="also write the report here")
    p.set_defaults(func=cmd_cavity)

    p = sub.add_parser("lineshape", help="thermal lineshape scans and lineshift vs power")
    common(p)
    p.add_argument("--direction", choices=("up", "down"))
    p.add_argument("--powers", help="comma separated transmitted peak powers (W)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_lineshape)

    p = sub.add_parser("simulate", help="simulate two detector tag streams")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--csv", action="store_true", help="also export tags as CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", help="coincidence histogram of two tag files")
    p.add_argument("tagfile_a")
    p.add_argument("tagfile_b")
    common(p, config_positional=False)
    p.add_argument("--bin", type=float, help="bin width (s)")
    p.add_argument("--window", type=float, help="half width of the delay window (s)")
    p.add_argument("--fit", action="store_true", help="fit the peak and estimate CAR")
    p.add_argument("--irf-sigma", type=float,
                   help="combined detector jitter for the fit (s); 0 fits a bare Lorentzian")
    p.add_argument("--report", help="also write the report here")
    p.add_argument("--out", help="histogram CSV (default histogram.csv)")
    p.add_argument("--brute-force", action="store_true",
                   help="use the all-pairs reference correlator")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("reproduce", help="end-to-end figure pipelines")
    p.add_argument("figure", choices=figures.FIGURES)
    common(p, config_positional=False)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--svg", action="store_true", help="also plot SVGs (needs matplotlib)")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        args.func(args, cfg)
    except CavityPairsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
