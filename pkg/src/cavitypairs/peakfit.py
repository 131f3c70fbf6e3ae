"""Lorentzian fits to coincidence peaks, CAR estimates and power scans."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.special import voigt_profile

from .correlator import CorrelationHistogram
from .errors import DataError, FitConvergenceError, NoPeakError

NS = 1e-9
PARAM_NAMES = ("amplitude", "center", "fwhm", "baseline")


def lorentzian(t, amplitude, center, fwhm, baseline, irf_sigma=0.0):
    """Peak on a flat baseline, optionally convolved with Gaussian jitter.

    ``amplitude`` is the height of the intrinsic Lorentzian; the convolution
    preserves the peak area, so with ``irf_sigma > 0`` the observed maximum
    is lower.
    """
    t = np.asarray(t, dtype=float)
    if irf_sigma > 0:
        hwhm = fwhm / 2
        return baseline + amplitude * math.pi * hwhm * voigt_profile(t - center, irf_sigma, hwhm)
    return baseline + amplitude / (1.0 + (2.0 * (t - center) / fwhm) ** 2)


@dataclass
class LorentzianFit:
    amplitude: float
    center: float
    fwhm: float
    baseline: float
    covariance: np.ndarray
    reduced_chi2: float
    irf_sigma: float = 0.0
    iterations: int = 0

    @property
    def params(self):
        return np.array([self.amplitude, self.center, self.fwhm, self.baseline])

    @property
    def sigmas(self):
        return np.sqrt(np.diag(self.covariance))

    @property
    def peak_height(self):
        """Maximum of the fitted peak above the baseline."""
        return _peak_height(self.params, self.irf_sigma)

    def model(self, t):
        return lorentzian(t, self.amplitude, self.center, self.fwhm, self.baseline,
                          self.irf_sigma)

    def peak_area_counts(self, bin_width):
        """Number of coincidences under the peak (model area / bin width)."""
        return self.amplitude * math.pi * self.fwhm / 2 / bin_width


def _peak_height(theta, irf_sigma):
    amplitude, _, fwhm, _ = theta
    if irf_sigma > 0:
        hwhm = fwhm / 2
        return amplitude * math.pi * hwhm * float(voigt_profile(0.0, irf_sigma, hwhm))
    return amplitude


@dataclass
class CarEstimate:
    value: float
    sigma: float
    method: str
    lower_bound: float | None = None

    @property
    def infinite(self):
        return math.isinf(self.value)


# -- fitting -----------------------------------------------------------------

def _model_and_jacobian(x, theta, irf, exposure):
    f, J = _bare_model_and_jacobian(x, theta, irf)
    return f * exposure, J * exposure[:, None]


def _bare_model_and_jacobian(x, theta, irf):
    A, c, w, b = theta
    if irf > 0:
        f = lorentzian(x, A, c, w, b, irf)
        J = np.empty((x.size, 4))
        J[:, 0] = (f - b) / A if A != 0 else lorentzian(x, 1.0, c, w, 0.0, irf)
        for k in (1, 2):
            h = 1e-6 * max(abs(theta[k]), w)
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            J[:, k] = (lorentzian(x, *tp, irf_sigma=irf) - lorentzian(x, *tm, irf_sigma=irf)) / (2 * h)
        J[:, 3] = 1.0
        return f, J
    u = 2.0 * (x - c) / w
    den = 1.0 / (1.0 + u * u)
    f = b + A * den
    J = np.empty((x.size, 4))
    J[:, 0] = den
    J[:, 1] = A * den * den * 4.0 * u / w
    J[:, 2] = A * den * den * 2.0 * u * u / w
    J[:, 3] = 1.0
    return f, J


def _levenberg_marquardt(x, y, weights, theta, irf, exposure, max_iter, rtol):
    f, J = _model_and_jacobian(x, theta, irf, exposure)
    r = y - f
    chi2 = float(np.sum(weights * r * r))
    lam = 1e-3
    for it in range(1, max_iter + 1):
        JW = J * weights[:, None]
        A = JW.T @ J
        g = JW.T @ r
        while True:
            damped = A + lam * np.diag(np.diag(A))
            try:
                step = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(damped, g, rcond=None)[0]
            trial = theta + step
            if trial[0] >= 0 and trial[2] > 0 and trial[3] >= 0:
                f_t, J_t = _model_and_jacobian(x, trial, irf, exposure)
                r_t = y - f_t
                chi2_t = float(np.sum(weights * r_t * r_t))
                if chi2_t <= chi2:
                    break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left: at a minimum or on a bound
                return theta, J, chi2, it
        small = np.all(np.abs(step) <= rtol * (np.abs(theta) + rtol))
        theta, f, J, r, chi2 = trial, f_t, J_t, r_t, chi2_t
        lam = max(lam / 10.0, 1e-12)
        if small:
            return theta, J, chi2, it
    raise FitConvergenceError(f"no convergence after {max_iter} iterations", chi2)


def _smooth(y, width):
    if width <= 1:
        return y.astype(float)
    kernel = np.ones(width) / width
    return np.convolve(y, kernel, mode="same")


def _intrinsic_fwhm(observed, irf_sigma):
    """Invert the Olivero-Longbothum Voigt width for the Lorentzian part."""
    g = 2.0 * math.sqrt(2.0 * math.log(2.0)) * irf_sigma
    if observed <= g:
        return 0.25 * observed
    a, b, c = 0.0692, -1.0692 * observed, observed ** 2 - g ** 2
    return (-b - math.sqrt(b * b - 4 * a * c)) / (2 * a)


def initial_guess(hist: CorrelationHistogram, irf_sigma=0.0):
    """Starting values (amplitude, center, fwhm, baseline) in seconds."""
    y = np.asarray(hist.counts, dtype=float) / hist.exposure
    x = hist.bin_centers
    if y.size == 0 or y.max() == y.min():
        raise NoPeakError("flat histogram: no peak")
    n = y.size
    # the peak is assumed to occupy a small part of the window
    ys = _smooth(y, max(3, n // 100) | 1 if n >= 16 else 1)
    ipk = int(np.argmax(ys))
    tail = np.abs(x - x[ipk]) > 0.25 * (x[-1] - x[0])
    baseline = float(np.median(y[tail])) if tail.sum() >= 3 else float(np.min(ys))
    height = ys[ipk] - baseline
    if height <= 0:
        raise NoPeakError("no excess above the baseline")
    half = baseline + height / 2
    lo = ipk
    while lo > 0 and ys[lo] > half:
        lo -= 1
    hi = ipk
    while hi < n - 1 and ys[hi] > half:
        hi += 1
    fwhm = max(x[hi] - x[lo], 2 * hist.bin_width)
    amplitude = height
    if irf_sigma > 0:
        fwhm = max(_intrinsic_fwhm(fwhm, irf_sigma), hist.bin_width)
        amplitude = height / _peak_height((1.0, 0.0, fwhm, 0.0), irf_sigma)
    return np.array([amplitude, x[ipk], fwhm, baseline])


def fit_lorentzian(hist: CorrelationHistogram, init=None, irf_sigma=0.0,
                   max_iter=200, rtol=1e-10, reweight=True,
                   reweight_passes=20) -> LorentzianFit:
    """Poisson-weighted least-squares Lorentzian fit to a histogram.

    Weights start as ``1 / max(count, 1)``; with ``reweight`` they are then
    recomputed from the fitted model until the parameters settle. The
    minimizer is a damped Gauss-Newton (Levenberg-Marquardt) iteration
    stopping when every parameter moves by less than ``rtol`` relative,
    at most ``max_iter`` iterations per pass. With ``irf_sigma`` (s)
    the Lorentzian is convolved with the combined Gaussian detector jitter
    and ``fwhm`` is the intrinsic correlation width. The model is scaled
    by the histogram's bin exposure, so parameters refer to a continuous
    delay axis.
    """
    y = np.asarray(hist.counts, dtype=float)
    if y.size < 8:
        raise DataError("need at least 8 bins to fit")
    if not np.any(y > 0):
        raise NoPeakError("histogram is empty")
    theta0 = np.asarray(init if init is not None else initial_guess(hist, irf_sigma), float)
    # work in ns for conditioning
    scale = np.array([1.0, 1 / NS, 1 / NS, 1.0])
    x = hist.bin_centers / NS
    irf = irf_sigma / NS
    exposure = np.asarray(hist.exposure, dtype=float)
    weights = 1.0 / np.maximum(y, 1.0)
    theta, J, chi2, it = _levenberg_marquardt(x, y, weights, theta0 * scale, irf, exposure,
                                              max_iter, rtol)
    for _ in range(reweight_passes if reweight else 0):
        # weights from the model: the fixed point solves the Poisson
        # likelihood equations and removes the low-count bias of 1/count
        weights = 1.0 / np.maximum(lorentzian(x, *theta, irf_sigma=irf) * exposure, 1.0)
        previous = theta
        theta, J, chi2, n_it = _levenberg_marquardt(x, y, weights, theta, irf, exposure,
                                                    max_iter, rtol)
        it += n_it
        if np.all(np.abs(theta - previous) <= 1e-9 * (np.abs(previous) + 1e-9)):
            break
    A = (J * weights[:, None]).T @ J
    try:
        cov = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(A)
    cov = cov / np.outer(scale, scale)
    theta = theta / scale
    dof = max(y.size - 4, 1)
    return LorentzianFit(amplitude=float(theta[0]), center=float(theta[1]),
                         fwhm=float(theta[2]), baseline=float(theta[3]),
                         covariance=cov, reduced_chi2=chi2 / dof,
                         irf_sigma=irf_sigma, iterations=it)


# -- CAR -----------------------------------------------------------------------

def _car_from_params(theta, irf):
    return (_peak_height(theta, irf) + theta[3]) / theta[3]


def estimate_car(hist: CorrelationHistogram, fit: LorentzianFit | None = None, method=None,
                 center=None, fwhm=None, exclusion=5.0) -> CarEstimate:
    """Coincidence-to-accidental ratio: peak height over accidental level.

    ``"fit"`` uses the fitted peak maximum plus baseline over the baseline,
    with errors from the fit covariance. ``"binned"`` divides the count of
    the bin containing the peak center by the mean of the bins farther than
    ``exclusion * fwhm`` from it, with Poisson errors. ``center``/``fwhm``
    override the values taken from ``fit`` (or from a rough estimate).
    """
    if method is None:
        method = "fit" if fit is not None else "binned"
    if method == "fit":
        if fit is None:
            raise ValueError("fit-based CAR needs a LorentzianFit")
        return _car_fit(fit)
    if method != "binned":
        raise ValueError(f"unknown CAR method {method!r}")
    if center is None or fwhm is None:
        guess = None
        if fit is None:
            guess = initial_guess(hist)
        center = center if center is not None else (fit.center if fit else guess[1])
        fwhm = fwhm if fwhm is not None else (fit.fwhm if fit else guess[2])
    return _car_binned(hist, center, fwhm, exclusion)


def _car_fit(fit: LorentzianFit):
    theta = fit.params
    b, sb = theta[3], math.sqrt(max(fit.covariance[3, 3], 0.0))
    peak = fit.peak_height
    if b <= 2 * sb:
        lower = (peak + b) / (b + 2 * sb) if b + 2 * sb > 0 else math.inf
        return CarEstimate(math.inf, math.inf, "fit", lower_bound=lower)
    grad = np.empty(4)
    for k in range(4):
        h = 1e-6 * max(abs(theta[k]), 1e-12)
        tp, tm = theta.copy(), theta.copy()
        tp[k] += h
        tm[k] -= h
        grad[k] = (_car_from_params(tp, fit.irf_sigma) - _car_from_params(tm, fit.irf_sigma)) / (2 * h)
    var = float(grad @ fit.covariance @ grad)
    return CarEstimate(_car_from_params(theta, fit.irf_sigma), math.sqrt(max(var, 0.0)), "fit")


def _car_binned(hist, center, fwhm, exclusion):
    x = hist.bin_centers
    counts = np.asarray(hist.counts)
    j = int(np.argmin(np.abs(x - center)))
    peak = float(counts[j])
    far = np.abs(x - center) > exclusion * fwhm
    if far.sum() == 0:
        raise DataError("no baseline bins outside the exclusion radius")
    total = float(counts[far].sum())
    far_exposure = float(hist.exposure[far].sum())
    if total == 0:
        # fewer than 3 expected baseline counts at 95% confidence
        lower = peak / hist.exposure[j] * far_exposure / 3.0 if peak > 0 else 0.0
        return CarEstimate(math.inf, math.inf, "binned", lower_bound=lower)
    mean = total / far_exposure
    scale = 1.0 / (hist.exposure[j] * mean)
    car = peak * scale
    # an empty peak bin still carries a one-count uncertainty
    sigma = math.sqrt(max(peak, 1.0) * scale ** 2 + car * car / total)
    return CarEstimate(car, sigma, "binned")


def coincidence_rate(hist: CorrelationHistogram, center, fwhm, radius=5.0, exclusion=None):
    """Pair rate (1/s) and its error from the excess counts around ``center``.

    Counts within ``radius * fwhm`` minus the baseline (mean of bins beyond
    ``exclusion * fwhm``, default ``radius``) are divided by the fraction
    of a Lorentzian of width ``fwhm`` inside the window.
    """
    exclusion = radius if exclusion is None else exclusion
    x = hist.bin_centers
    counts = np.asarray(hist.counts, dtype=float)
    dist = np.abs(x - center)
    inner = dist <= radius * fwhm
    far = dist > exclusion * fwhm
    if not far.any():
        raise DataError("no baseline bins outside the exclusion radius")
    e_far, e_in = hist.exposure[far].sum(), hist.exposure[inner].sum()
    base = counts[far].sum() / e_far
    var_base = counts[far].sum() / e_far ** 2
    n_in = int(inner.sum())
    excess = counts[inner].sum() - e_in * base
    var = counts[inner].sum() + e_in ** 2 * var_base
    half_span = (n_in * hist.bin_width) / 2
    contained = 2 / math.pi * math.atan(2 * half_span / fwhm)
    scale = 1.0 / (contained * hist.duration)
    return excess * scale, math.sqrt(var) * scale


# -- power scan ------------------------------------------------------------------

@dataclass
class PowerScanFit:
    curvature: float
    curvature_sigma: float
    exponent: float
    exponent_sigma: float
    prefactor: float


def power_scan_fit(powers, rates, sigmas=None) -> PowerScanFit:
    """Weighted fit of ``rate = curvature * P**2``.

    Also fits ``rate = a * P**b`` with a free exponent as a diagnostic.
    """
    p = np.asarray(powers, dtype=float)
    r = np.asarray(rates, dtype=float)
    s = np.ones_like(r) if sigmas is None else np.asarray(sigmas, dtype=float)
    if p.size < 3:
        raise ValueError("need at least three power points")
    if np.unique(p).size != p.size:
        raise ValueError("powers must be distinct")
    if np.all(r == 0):
        raise ValueError("all rates are zero")
    if np.any(s <= 0):
        raise ValueError("rate uncertainties must be positive")
    w = 1.0 / s ** 2
    p2 = p * p
    denom = np.sum(w * p2 * p2)
    curvature = float(np.sum(w * r * p2) / denom)
    curvature_sigma = float(1.0 / math.sqrt(denom))
    if sigmas is None:
        # unit weights: scale by the residual scatter
        dof = p.size - 1
        resid = r - curvature * p2
        curvature_sigma *= math.sqrt(np.sum(resid ** 2) / dof) if dof else 0.0

    (a, b), cov = curve_fit(lambda x, a, b: a * x ** b, p, r, p0=(curvature, 2.0),
                            sigma=s, absolute_sigma=sigmas is not None, maxfev=10000)
    return PowerScanFit(curvature, curvature_sigma, float(b),
                        float(math.sqrt(max(cov[1, 1], 0.0))), float(a))
