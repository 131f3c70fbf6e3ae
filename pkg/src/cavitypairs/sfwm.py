"""Pair flux from spontaneous four-wave mixing in a uniformly filled cavity.

    Gamma = fsr * F / pi**2 * (k * n2 * I * L)**2,   k = 2*pi*n / lambda_vac,

with ``I`` the intracavity intensity. The conventions that the pair-rate
literature leaves implicit are explicit fields of :class:`SfwmConventions`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cavity import CavityGeometry, CavityProperties, Medium
from .errors import ConfigError

INTENSITY_DEFINITIONS = {
    # P / (pi w0^2): transverse average over the 1/e^2 area
    "average": 1.0,
    # 2P / (pi w0^2): on-axis peak of the Gaussian mode
    "peak": 2.0,
}


@dataclass(frozen=True)
class SfwmConventions:
    """How a measured pair-rate coefficient relates to generated pairs.

    include_detection_efficiency
        The rate refers to detected pairs, i.e. already contains
        ``eta1 * eta2``.
    intensity_definition
        ``"average"`` uses ``P/(pi w0^2)``, ``"peak"`` the on-axis value.
    fsr_angular
        Use the free spectral range in rad/s (True) or Hz (False) as the
        prefactor.
    """

    include_detection_efficiency: bool = True
    eta1: float = 0.099
    eta2: float = 0.072
    intensity_definition: str = "average"
    fsr_angular: bool = True

    def __post_init__(self):
        for key in ("eta1", "eta2"):
            if not 0 < getattr(self, key) <= 1:
                raise ConfigError("detection efficiency must lie in (0, 1]", key=key)
        if self.intensity_definition not in INTENSITY_DEFINITIONS:
            raise ConfigError(f"unknown intensity definition {self.intensity_definition!r}",
                              key="intensity_definition")

    @property
    def detection_factor(self) -> float:
        return self.eta1 * self.eta2 if self.include_detection_efficiency else 1.0


@dataclass(frozen=True)
class SfwmParams:
    """Measured rate coefficients of one pair order.

    gamma_exp : pair-rate curvature (W^-2 s^-1)
    gamma_plus, gamma_minus : background singles per watt (W^-1 s^-1)
    tau_c : FWHM of the pair correlation peak (s)
    """

    gamma_exp: float = 1.12
    gamma_plus: float = 1.43e4
    gamma_minus: float = 1.43e4
    tau_c: float = 1.06e-9
    order_n: int = 2

    def __post_init__(self):
        for key in ("gamma_exp", "gamma_plus", "gamma_minus"):
            if not getattr(self, key) >= 0:
                raise ConfigError("rates must be nonnegative", key=key)
        if not self.tau_c > 0:
            raise ConfigError("correlation time must be positive", key="tau_c")
        if self.order_n < 0:
            raise ConfigError("order must be nonnegative", key="order_n")


def _coupling_per_n2(props: CavityProperties, geom: CavityGeometry, med: Medium,
                     p_cav, conv: SfwmConventions):
    """k * I * L, the Kerr phase per unit n2."""
    if not props.waist_w0 > 0:
        raise ValueError("mode waist must be positive")
    k = 2 * math.pi * med.index_n / geom.wavelength_vac
    intensity = INTENSITY_DEFINITIONS[conv.intensity_definition] * p_cav / (
        math.pi * props.waist_w0 ** 2)
    return k * intensity * geom.length_L


def _prefactor(props: CavityProperties, conv: SfwmConventions):
    if not props.finesse > 0:
        raise ValueError("finesse must be positive")
    fsr = props.fsr_angular if conv.fsr_angular else props.fsr_hz
    return fsr * props.finesse / math.pi ** 2 * conv.detection_factor


def predict_pair_flux(props: CavityProperties, geom: CavityGeometry, med: Medium,
                      p_cav, conv: SfwmConventions = SfwmConventions()):
    """Pair rate (1/s) at intracavity power ``p_cav``.

    Only the liquid contributes to the Kerr integral; the mirror coatings are
    left out.
    """
    if p_cav < 0:
        raise ValueError("intracavity power must be nonnegative")
    phase = med.n2 * _coupling_per_n2(props, geom, med, p_cav, conv)
    return _prefactor(props, conv) * phase ** 2


def infer_n2(gamma_exp, props: CavityProperties, geom: CavityGeometry, med: Medium,
             conv: SfwmConventions = SfwmConventions()):
    """Nonlinear index (m^2/W) reproducing the rate curvature ``gamma_exp``."""
    if not gamma_exp > 0:
        raise ValueError("rate curvature must be positive")
    coupling = _coupling_per_n2(props, geom, med, 1.0, conv)
    return math.sqrt(gamma_exp / _prefactor(props, conv)) / coupling


def predict_car(params: SfwmParams):
    """Coincidence-to-accidental ratio limited by linear background.

    ``2/(pi tau_c) * Gamma / (gamma_+ gamma_-)``: the Cauchy peak density over
    the accidental density. Independent of pump power; ``math.inf`` without
    background.
    """
    denom = params.gamma_plus * params.gamma_minus
    if denom == 0:
        return math.inf
    return 2.0 / (math.pi * params.tau_c) * params.gamma_exp / denom


def background_for_car(car, gamma_exp, tau_c):
    """Equal per-channel background coefficient giving ``car`` in :func:`predict_car`."""
    return math.sqrt(2.0 / (math.pi * tau_c) * gamma_exp / car)


def fwhm_to_linewidth(tau_fwhm):
    """Lorentzian linewidth (Hz) of a correlation peak of FWHM ``tau_fwhm``."""
    if not tau_fwhm > 0:
        raise ValueError("FWHM must be positive")
    return 1.0 / (math.pi * tau_fwhm)
