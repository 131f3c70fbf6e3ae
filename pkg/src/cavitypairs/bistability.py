"""Power-shifted Lorentzian lineshape of a heated (or Kerr) cavity.

The transmitted power obeys

    P_out / P_in = 1 / ((delta - beta' * P_cav)**2 + 1),   P_cav = P_out / eta,

with ``delta`` the laser detuning in natural linewidths. Writing the shift
``y = beta' * P_cav`` turns this into the cubic

    y**3 - 2*delta*y**2 + (delta**2 + 1)*y - s = 0,   s = beta' * P_in / eta,

where ``s`` is the largest possible shift, reached on top of the tilted
resonance. Three real roots exist only for ``|s| > 8 / (3*sqrt(3))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DataError

# |s| above which the cubic has three real roots for some detuning (the cusp
# at delta = sqrt(3)).
BISTABILITY_THRESHOLD = 8 / (3 * math.sqrt(3))


@dataclass(frozen=True)
class NonlinearLineshapeParams:
    """Lineshape parameters.

    beta_prime : lineshift in natural linewidths per watt of intracavity power
    outcoupling_eta : ratio P_out / P_cav
    p_in_peak : transmitted power on resonance without shift (W)
    """

    beta_prime: float = 0.0
    outcoupling_eta: float = 1.0
    p_in_peak: float = 1.0

    def __post_init__(self):
        if not 0 < self.outcoupling_eta <= 1:
            raise ConfigError("outcoupling must lie in (0, 1]", key="outcoupling_eta")
        if not math.isfinite(self.beta_prime):
            raise ConfigError("beta_prime must be finite", key="beta_prime")
        if not self.p_in_peak >= 0:
            raise ConfigError("input power must be nonnegative", key="p_in_peak")

    @property
    def shift_per_output_watt(self) -> float:
        """Lineshift per watt of transmitted power, beta' / eta."""
        return self.beta_prime / self.outcoupling_eta

    @property
    def max_shift(self) -> float:
        """Shift in linewidths at the top of the tilted resonance."""
        return self.shift_per_output_watt * self.p_in_peak


class SteadyState(NamedTuple):
    p_out: float
    stable: bool


@dataclass
class LineshapeScan:
    detunings: np.ndarray
    p_out: np.ndarray
    sweep_direction: str
    branch_flags: np.ndarray

    def __post_init__(self):
        if len(self.detunings) != len(self.p_out) or len(self.p_out) != len(self.branch_flags):
            raise ValueError("scan arrays must have equal length")
        steps = np.diff(self.detunings)
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ValueError("detunings must be strictly monotone")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["detuning", "p_out", "branch", "direction"])
            for d, p, b in zip(self.detunings, self.p_out, self.branch_flags):
                writer.writerow([repr(float(d)), repr(float(p)), b, self.sweep_direction])


def _shift_roots(delta, s):
    """Real roots of the normalized cubic in the shift ``y``, ascending.

    Closed form (trigonometric or Cardano branch) followed by Newton
    polishing on the undepressed cubic.
    """
    if s == 0.0:
        return [0.0]
    p = 1.0 - delta * delta / 3.0
    q = 2.0 * delta ** 3 / 27.0 + 2.0 * delta / 3.0 - s
    shift = 2.0 * delta / 3.0
    disc = -(4.0 * p ** 3 + 27.0 * q * q)
    if disc > 0:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (2.0 * p) * math.sqrt(-3.0 / p)
        phi = math.acos(min(1.0, max(-1.0, arg)))
        ts = [r * math.cos(phi / 3.0 - 2.0 * math.pi * k / 3.0) for k in range(3)]
    else:
        half = -q / 2.0
        root_d = math.sqrt(max(q * q / 4.0 + p ** 3 / 27.0, 0.0))
        u = np.cbrt(half + math.copysign(root_d, half))
        ts = [float(u - p / (3.0 * u)) if u != 0.0 else 0.0]
    roots = sorted(_polish(t + shift, delta, s) for t in ts)
    return roots


def _polish(y, delta, s, iterations=8):
    a1 = delta * delta + 1.0
    for _ in range(iterations):
        g = ((y - 2.0 * delta) * y + a1) * y - s
        dg = (3.0 * y - 4.0 * delta) * y + a1
        if dg == 0.0:
            break
        step = g / dg
        y -= step
        # relative test: for tiny s the root is tiny and the closed form
        # carries an absolute cancellation error of order delta * eps
        if abs(step) <= 1e-16 * abs(y):
            break
    return y


def cubic_discriminant(delta, params: NonlinearLineshapeParams):
    """Discriminant of the shift cubic; positive means three real roots."""
    s = params.max_shift
    p = 1.0 - delta * delta / 3.0
    q = 2.0 * delta ** 3 / 27.0 + 2.0 * delta / 3.0 - s
    return -(4.0 * p ** 3 + 27.0 * q * q)


def steady_states(delta, params: NonlinearLineshapeParams):
    """All steady-state transmitted powers at detuning ``delta``, ascending.

    With three solutions the middle one is unstable.
    """
    b = params.shift_per_output_watt
    p_in = params.p_in_peak
    if b == 0.0 or p_in == 0.0:
        return (SteadyState(p_in / (delta * delta + 1.0), True),)
    ys = _shift_roots(delta, b * p_in)
    xs = sorted(y / b for y in ys)
    if len(xs) == 3:
        return tuple(SteadyState(x, i != 1) for i, x in enumerate(xs))
    return tuple(SteadyState(x, True) for x in xs)


def lineshape_residual(delta, p_out, params: NonlinearLineshapeParams):
    """Relative residual of the implicit lineshape equation at ``p_out``."""
    shift = params.shift_per_output_watt * p_out
    return p_out * ((delta - shift) ** 2 + 1.0) / params.p_in_peak - 1.0


def detect_bistability(params: NonlinearLineshapeParams) -> bool:
    """True if some detuning admits three steady states.

    The discriminant as a function of detuning is positive somewhere exactly
    when ``|s|`` exceeds the cusp value ``8 / (3*sqrt(3))``.
    """
    return abs(params.max_shift) > BISTABILITY_THRESHOLD


def simulate_scan(params: NonlinearLineshapeParams, delta_range=(-10.0, 10.0),
                  n_points=2001, direction="up") -> LineshapeScan:
    """Adiabatic frequency sweep following the stable branch.

    Each step keeps the stable solution closest to the previous output; at a
    fold the state drops to the remaining stable branch. The sweep starts on
    the lowest-power branch.
    """
    if n_points < 2:
        raise ValueError("need at least two scan points")
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    lo, hi = delta_range
    detunings = np.linspace(lo, hi, n_points)
    if direction == "down":
        detunings = detunings[::-1].copy()

    b = params.shift_per_output_watt
    if b == 0.0:
        p_out = params.p_in_peak / (detunings * detunings + 1.0)
        return LineshapeScan(detunings, p_out, direction,
                             np.full(n_points, "single", dtype=object))

    p_out = np.empty(n_points)
    flags = np.empty(n_points, dtype=object)
    prev = 0.0
    for i, delta in enumerate(detunings):
        stable = [st.p_out for st in steady_states(delta, params) if st.stable]
        if len(stable) == 1:
            prev = stable[0]
            flags[i] = "single"
        else:
            k = min(range(len(stable)), key=lambda j: abs(stable[j] - prev))
            prev = stable[k]
            flags[i] = "lower" if k == 0 else "upper"
        p_out[i] = prev
    return LineshapeScan(detunings, p_out, direction, flags)


def threshold_width(scan: LineshapeScan, threshold=0.1):
    """Width of the detuning interval where the output exceeds
    ``threshold * max``, with linear interpolation at both edges."""
    x = np.asarray(scan.detunings, dtype=float)
    y = np.asarray(scan.p_out, dtype=float)
    if x.size == 0:
        raise DataError("empty scan")
    if x[0] > x[-1]:
        x, y = x[::-1], y[::-1]
    level = threshold * y.max()
    if not y.max() > 0:
        raise DataError("scan has no positive amplitude")
    above = np.flatnonzero(y > level)
    if above.size == 0:
        raise DataError("no crossing: all points below threshold")
    i, j = above[0], above[-1]
    left = x[i] if i == 0 else _crossing(x[i - 1], y[i - 1], x[i], y[i], level)
    right = x[j] if j == x.size - 1 else _crossing(x[j], y[j], x[j + 1], y[j + 1], level)
    return right - left


def _crossing(x0, y0, x1, y1, level):
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def extract_lineshift(scan: LineshapeScan, threshold=0.1):
    """Lineshift in natural linewidths from the threshold interval of a scan.

    Calibrated for a sweep toward the shift (up for ``beta' > 0``). On the
    rising edge the output is ``threshold * P_in`` where the shift is
    ``threshold * beta``; the far edge is the fold near ``delta = beta``. The
    interval therefore spans ``(1 - threshold) * beta + h`` linewidths with
    ``h = sqrt(1/threshold - 1)``, which is inverted here. Below the onset of
    bistability the interval keeps its linear width ``2h`` and carries no
    shift information; 0 is returned there.
    """
    half = math.sqrt(1.0 / threshold - 1.0)
    width = threshold_width(scan, threshold)
    step = abs(scan.detunings[1] - scan.detunings[0]) if len(scan.detunings) > 1 else 0.0
    if width - 2.0 * half <= 2.0 * step:
        return 0.0
    return (width - half) / (1.0 - threshold)


def temperature_rise(beta, Q, C_TO, n):
    """Temperature increase (K) producing a lineshift of ``beta`` linewidths."""
    if not Q > 0:
        raise ValueError("quality factor must be positive")
    if C_TO == 0:
        raise ValueError("thermo-optic coefficient must be nonzero")
    return abs(beta) * n / (Q * abs(C_TO))


def lineshift_for_temperature(delta_T, Q, C_TO, n):
    """Magnitude of the lineshift (linewidths) for a temperature rise."""
    return abs(delta_T) * Q * abs(C_TO) / n


def fit_line(x, y):
    """Least-squares line ``y = slope*x + intercept``; returns (slope, intercept, r2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)
