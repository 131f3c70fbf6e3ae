"""Cavity-enhanced photon pair source: resonator properties, thermal
lineshapes, pair-rate estimates, detector tag simulation and coincidence
analysis."""

from .cavity import (CavityGeometry, CavityProperties, DispersionModel, Medium,
                     derive_properties)
from .config import RunConfig
from .correlator import CorrelationHistogram, cross_correlate
from .errors import (CavityPairsError, ConfigError, DataError, FitConvergenceError,
                     NumericalError)
from .peakfit import estimate_car, fit_lorentzian, power_scan_fit
from .sfwm import SfwmConventions, SfwmParams, infer_n2, predict_car, predict_pair_flux
from .tagio import TagStream, read_tags, write_tags
from .tagsim import DetectorModel, SimConfig, simulate_stream

__version__ = "0.1.0"
