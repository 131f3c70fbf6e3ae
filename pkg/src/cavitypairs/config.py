"""Flat ``key = value`` run configuration.

Values are SI (meters, seconds, Hz, watts). ``#`` starts a comment, lists
are comma separated, ``none`` clears an optional value. Unknown or
repeated keys are rejected with their line number. :meth:`RunConfig.dump`
writes every key with defaults filled in, which is enough to repeat a run
bit for bit.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from .bistability import NonlinearLineshapeParams
from .cavity import derive_properties
from .cavity import FINESSE_CONVENTIONS, CavityGeometry, DispersionModel, Medium
from .errors import ConfigError
from .sfwm import INTENSITY_DEFINITIONS, SfwmConventions, SfwmParams
from .tagsim import DetectorModel, SimConfig

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _choice(*options):
    return {"choices": options}


@dataclass
class RunConfig:
    # resonator and medium
    length_L: float = 38.4e-6
    roc_R: float = 200e-6
    mirror_transmission_T: float = 100e-6
    mirror_loss: float = 100e-6
    wavelength_vac: float = 780e-9
    finesse_convention: str = field(default="round_trip", metadata=_choice(*FINESSE_CONVENTIONS))
    finesse_measured: typing.Optional[float] = 12500.0
    finesse_sigma: float = 500.0
    index_n: float = 1.556
    n2: float = 3.62e-20
    absorption_alpha: float = 0.0
    thermo_optic_CTO: float = 3e-4
    fsr_empty_measured: typing.Optional[float] = 3.901e12
    fsr_filled_measured: typing.Optional[float] = 2.507e12
    pump_frequency: float = 382.155e12
    mode_orders: int = 3
    dispersion_D2: float = 0.0
    tuning_sensitivity: float = 0.0

    # thermal lineshape (beta_prime in linewidths per intracavity watt)
    beta_prime: float = 130.0
    outcoupling_eta: float = 100e-6
    p_in_peak: float = 58e-6
    scan_delta_min: float = -20.0
    scan_delta_max: float = 100.0
    scan_points: int = 6001
    scan_direction: str = field(default="up", metadata=_choice("up", "down"))
    lineshift_threshold: float = 0.1
    lineshape_powers: typing.List[float] = field(
        default_factory=lambda: [20e-6, 30e-6, 40e-6, 50e-6, 60e-6, 70e-6])
    quality_Q: float = 2e6

    # pair source
    gamma_exp: float = 1.12
    gamma_plus: float = 1.43e4
    gamma_minus: float = 1.43e4
    tau_c: float = 1.06e-9
    order_n: int = 2
    include_detection_efficiency: bool = True
    eta1: float = 0.099
    eta2: float = 0.072
    intensity_definition: str = field(default="average",
                                      metadata=_choice(*INTENSITY_DEFINITIONS))
    fsr_angular: bool = True

    # detectors and simulation
    duration: float = 1200.0
    p_cav: float = 0.58
    cable_delay: float = -12e-9
    rng_seed: int = 0
    max_tags: int = 60_000_000
    jitter_sigma_plus: float = 350e-12
    jitter_sigma_minus: float = 350e-12
    quantization: float = 40e-12
    dark_rate_plus: float = 0.0
    dark_rate_minus: float = 0.0
    dead_time_plus: float = 0.0
    dead_time_minus: float = 0.0

    # correlation analysis
    bin_width: float = 0.1e-9
    window: float = 50e-9
    fit_irf: bool = True
    car_method: str = field(default="fit", metadata=_choice("fit", "binned"))
    scan_powers: typing.List[float] = field(
        default_factory=lambda: [0.2, 0.3, 0.4, 0.5, 0.6, 0.7])
    scan_segments: int = 1

    # -- parsing ---------------------------------------------------------------

    @classmethod
    def from_text(cls, text, source="<config>"):
        hints = typing.get_type_hints(cls)
        fmap = {f.name: f for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}: expected 'key = value'", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in fmap:
                raise ConfigError(f"{source}: unknown key", key=key, line=lineno)
            if key in values:
                raise ConfigError(f"{source}: duplicate key", key=key, line=lineno)
            values[key] = _convert(value, hints[key], fmap[key], key, lineno)
        cfg = cls(**values)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), source=str(path))

    def dump(self):
        lines = ["# resolved configuration"]
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def validate(self):
        """Build every domain object once so invalid values fail early."""
        derive_properties(self.geometry(), self.medium(), finesse=self.finesse_measured,
                          convention=self.finesse_convention)
        self.lineshape_params()
        self.sfwm_params()
        self.conventions()
        self.sim_config()
        if self.scan_points < 2:
            raise ConfigError("need at least two scan points", key="scan_points")
        if not 0 < self.lineshift_threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)", key="lineshift_threshold")
        if not 0 < self.bin_width <= self.window:
            raise ConfigError("need 0 < bin_width <= window", key="bin_width")
        if self.scan_segments < 1:
            raise ConfigError("need at least one segment", key="scan_segments")
        if self.mode_orders < 0:
            raise ConfigError("mode_orders must be nonnegative", key="mode_orders")

    # -- domain objects --------------------------------------------------------

    def geometry(self):
        return CavityGeometry(self.length_L, self.roc_R, self.mirror_transmission_T,
                              self.mirror_loss, self.wavelength_vac)

    def medium(self):
        return Medium(self.index_n, self.n2, self.absorption_alpha, self.thermo_optic_CTO)

    def dispersion(self):
        return DispersionModel(self.dispersion_D2, self.tuning_sensitivity)

    def lineshape_params(self, p_in=None):
        return NonlinearLineshapeParams(self.beta_prime, self.outcoupling_eta,
                                        self.p_in_peak if p_in is None else p_in)

    def sfwm_params(self):
        return SfwmParams(self.gamma_exp, self.gamma_plus, self.gamma_minus, self.tau_c,
                          self.order_n)

    def conventions(self):
        return SfwmConventions(self.include_detection_efficiency, self.eta1, self.eta2,
                               self.intensity_definition, self.fsr_angular)

    def detectors(self):
        plus = DetectorModel(self.jitter_sigma_plus, self.quantization, self.dark_rate_plus,
                             self.dead_time_plus, self.eta1)
        minus = DetectorModel(self.jitter_sigma_minus, self.quantization, self.dark_rate_minus,
                              self.dead_time_minus, self.eta2)
        return plus, minus

    def sim_config(self, p_cav=None, rng_seed=None, duration=None):
        plus, minus = self.detectors()
        return SimConfig(
            duration=self.duration if duration is None else duration,
            p_cav=self.p_cav if p_cav is None else p_cav,
            sfwm=self.sfwm_params(), det_plus=plus, det_minus=minus,
            cable_delay=self.cable_delay,
            rng_seed=self.rng_seed if rng_seed is None else rng_seed,
            rates_detected=self.include_detection_efficiency,
            max_tags=self.max_tags)

    @property
    def irf_sigma(self):
        """Combined jitter of the delay between the two detectors."""
        if not self.fit_irf:
            return 0.0
        return (self.jitter_sigma_plus ** 2 + self.jitter_sigma_minus ** 2) ** 0.5


def _convert(value, hint, f, key, lineno):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    try:
        if origin is typing.Union and type(None) in args:
            if value.lower() == "none":
                return None
            hint = next(a for a in args if a is not type(None))
            origin = typing.get_origin(hint)
        if origin is list:
            items = [v.strip() for v in value.split(",") if v.strip()]
            return [float(v) for v in items]
        if hint is bool:
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if hint is int:
            return int(float(value)) if "e" in value.lower() else int(value, 0)
        if hint is float:
            return float(value)
        if hint is str:
            choices = f.metadata.get("choices")
            if choices and value not in choices:
                raise ValueError(f"{value!r} not one of {', '.join(choices)}")
            return value
    except ValueError as exc:
        raise ConfigError(f"bad value: {exc}", key=key, line=lineno) from None
    raise ConfigError(f"unsupported type {hint}", key=key, line=lineno)


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)
