"""Acceptance suite: every criterion at its stated tolerance.

Each test records its checks with ``record``; the terminal summary prints
one PASS/FAIL line per criterion. Checks that fail under the committed
settings are marked ``xfail(strict=True)`` with the tolerance unchanged.
"""

import math
import time
import tracemalloc

import numpy as np
import pytest
from conftest import record
from scipy.optimize import brentq

from cavitypairs import bistability as bis
from cavitypairs import cavity, figures
from cavitypairs.config import RunConfig
from cavitypairs.correlator import cross_correlate, cross_correlate_bruteforce
from cavitypairs.sfwm import SfwmConventions, infer_n2, predict_car, predict_pair_flux
from cavitypairs.tagio import TagStream, read_tags, write_tags
from cavitypairs.tagsim import SimConfig, simulate_stream


def check(criterion, name, ok, detail):
    assert record(criterion, name, ok, detail), f"{criterion} {name}: {detail}"


# -- 1: cavity formulas -----------------------------------------------------------

def test_c1_cavity():
    start = time.perf_counter()
    geom = cavity.CavityGeometry()
    empty = cavity.fsr_hz(geom.length_L)
    filled = cavity.fsr_hz(geom.length_L, 1.556)
    w0 = cavity.waist(geom.length_L, geom.roc_R, geom.wavelength_vac, 1.556)
    n = cavity.infer_index_from_fsr(3.901e12, 2.507e12)
    elapsed = time.perf_counter() - start
    check("C1", "fsr_empty", abs(empty / 3.901e12 - 1) <= 2e-3, f"{empty / 1e12:.4f} THz")
    check("C1", "fsr_filled", abs(filled / 2.507e12 - 1) <= 2e-3, f"{filled / 1e12:.4f} THz")
    check("C1", "waist", abs(w0 - 3.5e-6) <= 0.1e-6, f"{w0 * 1e6:.3f} um")
    check("C1", "index", abs(n - 1.556) <= 2e-3, f"{n:.5f}")
    check("C1", "runtime", elapsed < 0.1, f"{elapsed * 1e3:.2f} ms")


# -- 2: bistability ---------------------------------------------------------------

def dense_grid_roots(delta, params, n=200_001):
    """Roots of the implicit lineshape from sign changes on a dense grid."""
    b, p_in = params.shift_per_output_watt, params.p_in_peak
    f = lambda x: x * ((delta - b * x) ** 2 + 1.0) - p_in
    x = np.linspace(0.0, p_in, n)
    y = x * ((delta - b * x) ** 2 + 1.0) - p_in
    idx = np.flatnonzero(np.sign(y[:-1]) != np.sign(y[1:]))
    return [brentq(f, x[i], x[i + 1], xtol=1e-16 * p_in, rtol=1e-15) for i in idx]


def test_c2_bistability():
    start = time.perf_counter()
    cfg = RunConfig()

    linear = bis.NonlinearLineshapeParams(0.0, cfg.outcoupling_eta, cfg.p_in_peak)
    scan = bis.simulate_scan(linear, (cfg.scan_delta_min, cfg.scan_delta_max), cfg.scan_points)
    exact = cfg.p_in_peak / (scan.detunings ** 2 + 1)
    err = float(np.max(np.abs(scan.p_out - exact)) / cfg.p_in_peak)
    check("C2", "linear_lorentzian", err <= 1e-12, f"max rel err {err:.1e}")

    params = cfg.lineshape_params()
    span = (cfg.scan_delta_min, cfg.scan_delta_max)
    up = bis.simulate_scan(params, span, cfg.scan_points, "up")
    down = bis.simulate_scan(params, span, cfg.scan_points, "down")
    gap = float(np.max(np.abs(up.p_out - down.p_out[::-1])) / cfg.p_in_peak)
    check("C2", "hysteresis", bis.detect_bistability(params) and gap > 0.1,
          f"max up/down gap {gap:.2f} P_in")

    worst = 0.0
    for delta in up.detunings:
        for state in bis.steady_states(delta, params):
            worst = max(worst, abs(bis.lineshape_residual(delta, state.p_out, params)))
    mismatch = 0.0
    for delta in np.linspace(*span, 41):
        ours = [s.p_out for s in bis.steady_states(delta, params)]
        oracle = dense_grid_roots(delta, params)
        assert len(ours) == len(oracle), delta
        mismatch = max([mismatch] + [abs(a / b - 1) for a, b in zip(ours, oracle)])
    check("C2", "residual", worst <= 1e-9, f"max residual {worst:.1e}")
    check("C2", "oracle", mismatch <= 1e-9, f"max rel diff vs dense grid {mismatch:.1e}")

    res = figures.figure_1c(cfg)
    slope, r2 = res.report["slope_per_W"], res.report["r_squared"]
    configured = res.report["configured_slope_per_W"]
    check("C2", "linearity", r2 > 0.99, f"R2 {r2:.5f}")
    check("C2", "slope", abs(slope / configured - 1) <= 0.03,
          f"{slope:.4g}/W vs {configured:.4g}/W")
    elapsed = time.perf_counter() - start
    check("C2", "runtime", elapsed < 30, f"{elapsed:.1f} s")


# -- 3: temperature ---------------------------------------------------------------

def test_c3_temperature():
    dt = bis.temperature_rise(77, 2e6, 3e-4, 1.56)
    beta = bis.lineshift_for_temperature(0.2, 2e6, 3e-4, 1.56)
    check("C3", "delta_T", f"{dt:.3g}" == "0.2" and round(dt, 3) == 0.200, f"{dt:.4f} K")
    check("C3", "beta_for_0.2K", 30 <= beta <= 100, f"{beta:.1f} linewidths")


# -- 4: end-to-end correlation peak -----------------------------------------------

@pytest.fixture(scope="module")
def fig2a():
    start = time.perf_counter()
    res = figures.figure_2a(RunConfig())
    return res.report, time.perf_counter() - start


@pytest.mark.slow
def test_c4_center_car_runtime(fig2a):
    r, elapsed = fig2a
    center = r["center_ps"] / 1e3
    check("C4", "center", abs(center + 12.0) <= 0.3, f"{center:.3f} ns")
    check("C4", "car", abs(r["car"] - 3.3) <= 0.6, f"{r['car']:.3f} +- {r['car_sigma']:.3f}")
    check("C4", "runtime", elapsed < 60, f"{elapsed:.1f} s")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="seed 0 fits 1.58 ns; the tolerance is about 0.75 "
                   "of the fit's own scatter and 56 of 100 seeds pass")
def test_c4_fwhm(fig2a):
    r, _ = fig2a
    fwhm = r["fwhm_ps"] / 1e3
    check("C4", "fwhm", abs(fwhm - 1.06) <= 0.15,
          f"{fwhm:.3f} +- {r['fwhm_sigma_ps'] / 1e3:.3f} ns")


# -- 5: power scan ----------------------------------------------------------------

@pytest.fixture(scope="module")
def scan():
    # twelve 1200 s segments per power; about a minute
    cfg = RunConfig(scan_segments=12)
    return cfg, figures.power_scan(cfg)


@pytest.mark.slow
def test_c5_curvature(scan):
    cfg, s = scan
    fit = s.fit
    check("C5", "curvature", abs(fit.curvature / cfg.gamma_exp - 1) <= 0.05,
          f"{fit.curvature:.4f} +- {fit.curvature_sigma:.4f}")
    check("C5", "exponent", abs(fit.exponent - 2.0) <= 0.1,
          f"b = {fit.exponent:.3f} +- {fit.exponent_sigma:.3f}")


@pytest.mark.slow
def test_c5_car_flat(scan):
    _, s = scan
    values = np.array([c.value for c in s.cars])
    sigmas = np.array([c.sigma for c in s.cars])
    coef, cov = np.polyfit(s.powers, values, 1, w=1 / sigmas, cov="unscaled")
    slope, err = coef[0], math.sqrt(cov[0, 0])
    check("C5", "car_flat", abs(slope) <= 3 * err, f"slope {slope:.2f} +- {err:.2f} /W")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="binned CAR at 0.7 W is 2.86 +- 0.13 against "
                   "the predicted 3.29, a pull of -3.3")
def test_c5_car_consistent(scan):
    cfg, s = scan
    predicted = predict_car(cfg.sfwm_params())
    pulls = [(c.value - predicted) / c.sigma for c in s.cars]
    detail = ", ".join(f"{p:.1f} W {c.value:.2f}+-{c.sigma:.2f}" for p, c in zip(s.powers, s.cars))
    check("C5", "car_3sigma", max(abs(x) for x in pulls) <= 3,
          f"predicted {predicted:.3f}; {detail}")


# -- 6: correlator exactness ------------------------------------------------------

def random_instance(rng, big):
    n_a = 10_000 if big else int(np.exp(rng.uniform(0, np.log(10_000))))
    n_b = 10_000 if big else int(np.exp(rng.uniform(0, np.log(10_000))))
    q = int(rng.choice([1, 7, 40]))
    spacing = int(rng.integers(100, 20_000))
    a = np.sort(rng.integers(0, n_a * spacing + 1, n_a)) // q * q
    b = rng.integers(0, n_b * spacing + 1, n_b)
    # correlated part, so peaks and ties reach the bins
    k = min(n_a, n_b) // 3
    b[:k] = a[rng.choice(n_a, k, replace=False)] + rng.integers(-5_000, 5_000, k)
    b = np.sort(np.clip(b, 0, None)) // q * q
    bw = int(rng.integers(1, 3_000))
    window = bw * int(rng.integers(1, 40)) + int(rng.integers(0, bw))
    return a.astype(np.uint64), b.astype(np.uint64), bw * 1e-12, window * 1e-12


def test_c6_correlator_exact():
    rng = np.random.default_rng(2024)
    bad = 0
    for i in range(200):
        a, b, bw, window = random_instance(rng, big=i < 5)
        fast = cross_correlate(a, b, bw, window)
        slow = cross_correlate_bruteforce(a, b, bw, window)
        bad += not np.array_equal(fast.counts, slow.counts)
    check("C6", "bruteforce", bad == 0, f"{200 - bad}/200 instances identical")

    r_a, r_b, T = 5e4, 8e4, 20.0
    a = np.sort(rng.integers(0, int(T * 1e12), rng.poisson(r_a * T)))
    b = np.sort(rng.integers(0, int(T * 1e12), rng.poisson(r_b * T)))
    h = cross_correlate(a.astype(np.uint64), b.astype(np.uint64), 1e-9, 50e-9, duration=T)
    expected = r_a * r_b * T * h.bin_width * h.counts.size
    z = (h.counts.sum() - expected) / math.sqrt(expected)
    check("C6", "accidentals", abs(z) <= 3,
          f"{h.counts.sum()} vs {expected:.0f} expected ({z:+.2f} sigma)")


# -- 7: round trips ---------------------------------------------------------------

def test_c7_round_trips(tmp_path):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        geom = cavity.CavityGeometry(length_L=rng.uniform(10e-6, 150e-6),
                                     roc_R=rng.uniform(160e-6, 1e-3),
                                     mirror_transmission_T=rng.uniform(1e-5, 1e-3),
                                     mirror_loss=rng.uniform(0, 1e-3),
                                     wavelength_vac=rng.uniform(500e-9, 1600e-9))
        med = cavity.Medium(index_n=rng.uniform(1.0, 2.5), n2=10 ** rng.uniform(-22, -18))
        props = cavity.derive_properties(geom, med)
        conv = SfwmConventions(bool(rng.integers(2)), rng.uniform(0.01, 1), rng.uniform(0.01, 1),
                               str(rng.choice(["average", "peak"])), bool(rng.integers(2)))
        gamma = predict_pair_flux(props, geom, med, 1.0, conv)
        worst = max(worst, abs(infer_n2(gamma, props, geom, med, conv) / med.n2 - 1))
    check("C7", "flux_n2", worst <= 1e-12, f"max rel err {worst:.1e} over 100 sets")

    cfg = SimConfig(duration=30.0, p_cav=0.58, rng_seed=99)
    plus, minus, _ = simulate_stream(cfg)
    again_plus, again_minus, _ = simulate_stream(cfg)
    same_seed = plus == again_plus and minus == again_minus
    check("C7", "determinism", same_seed, f"{len(plus)}/{len(minus)} tags identical")

    write_tags(plus, tmp_path / "p.ttag")
    back = read_tags(tmp_path / "p.ttag")
    write_tags(back, tmp_path / "q.ttag")
    same_file = (tmp_path / "p.ttag").read_bytes() == (tmp_path / "q.ttag").read_bytes()
    check("C7", "tag_file", back == plus and same_file, "write/read/write bit-identical")


# -- 8: performance ---------------------------------------------------------------

@pytest.mark.slow
def test_c8_performance():
    rng = np.random.default_rng(8)
    n, span = 10_000_000, 1200 * 10 ** 12
    a = TagStream(0, np.sort(rng.integers(0, span, n)) // 40 * 40)
    b = TagStream(1, np.sort(rng.integers(0, span, n)) // 40 * 40)
    raw = a.tags.nbytes + b.tags.nbytes
    cross_correlate(a.tags[:1000], b.tags[:1000], 1e-9, 50e-9)  # compile warm-up

    start = time.perf_counter()
    h = cross_correlate(a, b, 1e-9, 50e-9)
    elapsed = time.perf_counter() - start

    tracemalloc.start()
    cross_correlate(a, b, 1e-9, 50e-9)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()

    check("C8", "time", elapsed <= 5.0, f"{elapsed:.2f} s for 2 x 1e7 tags")
    check("C8", "memory", raw + peak <= 2 * raw,
          f"extra {peak / 1e6:.2f} MB over {raw / 1e6:.0f} MB of tags")
    assert h.counts.sum() > 0
