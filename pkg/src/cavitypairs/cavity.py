"""Passive Fabry-Perot microcavity: spectral properties and mode comb.

All frequencies are ordinary frequencies in Hz stored as float64; convert
to THz only for display. Lengths are in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.constants import c as SPEED_OF_LIGHT

from .errors import ConfigError, UncompensatableError, UnstableCavityError

FINESSE_CONVENTIONS = ("round_trip", "per_mirror")


@dataclass(frozen=True)
class CavityGeometry:
    """Plano-concave resonator with two identical mirrors.

    ``mirror_transmission_T`` and ``mirror_loss`` are per-mirror values.
    """

    length_L: float = 38.4e-6
    roc_R: float = 200e-6
    mirror_transmission_T: float = 100e-6
    mirror_loss: float = 100e-6
    wavelength_vac: float = 780e-9

    def __post_init__(self):
        if not self.length_L > 0:
            raise ConfigError("cavity length must be positive", key="length_L")
        if not self.roc_R > 0:
            raise ConfigError("radius of curvature must be positive", key="roc_R")
        if not 0 < self.mirror_transmission_T < 1:
            raise ConfigError("mirror transmission must lie in (0, 1)",
                              key="mirror_transmission_T")
        if not 0 <= self.mirror_loss < 1:
            raise ConfigError("mirror loss must lie in [0, 1)", key="mirror_loss")
        if not self.wavelength_vac > 0:
            raise ConfigError("wavelength must be positive", key="wavelength_vac")


@dataclass(frozen=True)
class Medium:
    """Homogeneous liquid filling the resonator."""

    index_n: float = 1.556
    n2: float = 3.62e-20
    absorption_alpha: float = 0.0
    thermo_optic_CTO: float = 3e-4

    def __post_init__(self):
        if not self.index_n >= 1:
            raise ConfigError("refractive index must be >= 1", key="index_n")
        if not self.n2 >= 0:
            raise ConfigError("n2 must be nonnegative", key="n2")
        if not self.absorption_alpha >= 0:
            raise ConfigError("absorption must be nonnegative", key="absorption_alpha")


VACUUM = Medium(index_n=1.0, n2=0.0)


@dataclass(frozen=True)
class CavityProperties:
    fsr_hz: float
    finesse: float
    linewidth_hz: float
    waist_w0: float
    quality_Q: float
    resonance_nu: float

    @property
    def fsr_angular(self) -> float:
        """Free spectral range in rad/s."""
        return 2 * math.pi * self.fsr_hz


@dataclass(frozen=True)
class DispersionModel:
    """Quadratic offset of the longitudinal-mode comb.

    Mode ``n`` on either side of the pump sits ``quadratic_coeff_D2 * n**2``
    above the ideal comb. ``tuning_sensitivity`` is the change of the energy
    mismatch (Hz) per unit of the control knob, e.g. a cavity-length or
    pump retune.
    """

    quadratic_coeff_D2: float = 0.0
    tuning_sensitivity: float = 0.0


def fsr_hz(length_L, index_n=1.0):
    """Free spectral range c / (2 n L) in Hz."""
    return SPEED_OF_LIGHT / (2 * index_n * length_L)


def fsr_angular(length_L, index_n=1.0):
    """Free spectral range pi c / (n L) in rad/s."""
    return math.pi * SPEED_OF_LIGHT / (index_n * length_L)


def round_trip_loss(geom: CavityGeometry, convention: str = "round_trip") -> float:
    """Fractional power loss entering the finesse.

    ``"round_trip"`` sums transmission and loss of both mirrors,
    ``"per_mirror"`` counts a single mirror.
    """
    per_mirror = geom.mirror_transmission_T + geom.mirror_loss
    if convention == "round_trip":
        return 2 * per_mirror
    if convention == "per_mirror":
        return per_mirror
    raise ConfigError(f"unknown finesse convention {convention!r}",
                      key="finesse_convention")


def waist(length_L, roc_R, wavelength_vac, index_n=1.0):
    """1/e^2 mode radius on the planar mirror.

    Uses the wavelength inside the medium, ``wavelength_vac / index_n``.
    """
    if not 0 < length_L < roc_R:
        raise UnstableCavityError(
            f"unstable geometry: need 0 < L < R, got L={length_L:g} m, R={roc_R:g} m",
            key="length_L")
    w0_sq = wavelength_vac / (math.pi * index_n) * math.sqrt(length_L * (roc_R - length_L))
    return math.sqrt(w0_sq)


def derive_properties(geom: CavityGeometry, med: Medium = VACUUM, *,
                      finesse: float | None = None,
                      convention: str = "round_trip") -> CavityProperties:
    """Spectral properties of the filled (or empty) resonator.

    Parameters
    ----------
    geom, med
        Resonator and filling medium.
    finesse
        Measured finesse. When given it replaces the value computed from
        the mirror budget, pi / round-trip loss.
    convention
        How per-mirror transmission and loss combine, see
        :func:`round_trip_loss`.
    """
    if not geom.length_L < geom.roc_R:
        raise UnstableCavityError(
            f"unstable geometry: need L < R, got L={geom.length_L:g} m, "
            f"R={geom.roc_R:g} m", key="length_L")
    fsr = fsr_hz(geom.length_L, med.index_n)
    if finesse is None:
        finesse = math.pi / round_trip_loss(geom, convention)
    elif not finesse > 0:
        raise ConfigError("finesse must be positive", key="finesse_measured")
    linewidth = fsr / finesse
    nu_res = SPEED_OF_LIGHT / geom.wavelength_vac
    return CavityProperties(
        fsr_hz=fsr,
        finesse=finesse,
        linewidth_hz=linewidth,
        waist_w0=waist(geom.length_L, geom.roc_R, geom.wavelength_vac, med.index_n),
        quality_Q=nu_res / linewidth,
        resonance_nu=nu_res,
    )


def infer_index_from_fsr(fsr_empty, fsr_filled):
    """Refractive index from the free spectral range before and after filling."""
    if not (fsr_empty > 0 and fsr_filled > 0):
        raise ValueError("free spectral ranges must be positive")
    if fsr_filled > fsr_empty:
        raise ValueError("filled FSR exceeds empty FSR: index below 1 is unphysical")
    return fsr_empty / fsr_filled


def mode_frequencies(nu0, fsr, order_n, disp: DispersionModel | None = None,
                     control_offset=0.0):
    """Upper and lower mode of order ``order_n`` around the pump ``nu0``.

    The dispersion offset, plus half the control-induced mismatch, is added
    to both modes, so ``nu_plus + nu_minus - 2*nu0`` equals
    :func:`energy_mismatch`.
    """
    if order_n < 0:
        raise ValueError("mode order must be nonnegative")
    offset = 0.5 * energy_mismatch(order_n, disp, control_offset)
    return nu0 + order_n * fsr + offset, nu0 - order_n * fsr + offset


def energy_mismatch(order_n, disp: DispersionModel | None = None, control_offset=0.0):
    """``nu_plus + nu_minus - 2*nu0`` in Hz for the given control setting."""
    if disp is None:
        return 0.0
    return 2 * disp.quadratic_coeff_D2 * order_n ** 2 + disp.tuning_sensitivity * control_offset


def find_dispersion_compensation(nu0, fsr, order_n, disp: DispersionModel, linewidth,
                                 bounds=(-math.inf, math.inf)):
    """Control offset that zeroes the pair energy mismatch.

    The mismatch is linear in the control, so the optimum is the clipped
    closed-form root. Raises :class:`UncompensatableError` if the residual
    at the optimum still exceeds ``linewidth``.
    """
    lo, hi = bounds
    residual0 = energy_mismatch(order_n, disp)
    if residual0 == 0.0:
        return 0.0
    if disp.tuning_sensitivity == 0.0:
        raise UncompensatableError(
            f"mismatch {residual0:.6g} Hz with zero tuning sensitivity")
    offset = min(max(-residual0 / disp.tuning_sensitivity, lo), hi)
    nu_p, nu_m = mode_frequencies(nu0, fsr, order_n, disp, offset)
    residual = abs(nu_p + nu_m - 2 * nu0)
    if residual > linewidth:
        raise UncompensatableError(
            f"best residual {residual:.6g} Hz exceeds linewidth {linewidth:.6g} Hz "
            f"within bounds {bounds}")
    return offset


def absorption_upper_bound(finesse_measured, finesse_sigma, geom: CavityGeometry,
                           med: Medium):
    """Largest absorption coefficient hidden inside the finesse uncertainty.

    The loss headroom ``pi/F - pi/(F + sigma)`` is attributed to
    absorption over the round trip, ``2 * alpha * n * L``. Mirror
    reflectivity changes on filling are not modeled.
    """
    if not finesse_sigma >= 0:
        raise ValueError("finesse uncertainty must be nonnegative")
    headroom = math.pi / finesse_measured - math.pi / (finesse_measured + finesse_sigma)
    return headroom / (2 * med.index_n * geom.length_L)
