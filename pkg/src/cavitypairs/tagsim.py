"""Monte Carlo two-channel detector streams for a cavity pair source.

Event model per run of length ``duration`` at intracavity power ``P``:

* pairs: Poisson process at ``gamma_exp * P**2``; the minus-channel photon
  follows the plus-channel photon by a Cauchy delay (FWHM ``tau_c``)
  centered on the cable delay;
* background: independent Poisson singles at ``gamma_+- * P`` per channel;
* dark counts: Poisson at each detector's ``dark_rate``.

Photon tags are thinned by detector efficiency unless the rate coefficients
already refer to detected counts. Every tag then gets Gaussian jitter, is
clamped to ``[0, duration]``, floored onto the TDC grid and sorted. An
optional non-paralyzable dead time is applied last.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np

from .errors import ConfigError
from .sfwm import SfwmParams
from .tagio import TagStream

PS = 1e-12
CHANNEL_PLUS = 0
CHANNEL_MINUS = 1


@dataclass(frozen=True)
class DetectorModel:
    jitter_sigma: float = 350e-12
    quantization: float = 40e-12
    dark_rate: float = 0.0
    dead_time: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self):
        for key in ("jitter_sigma", "quantization", "dark_rate", "dead_time"):
            if not getattr(self, key) >= 0:
                raise ConfigError("detector parameters must be nonnegative", key=key)
        if not 0 <= self.efficiency <= 1:
            raise ConfigError("efficiency must lie in [0, 1]", key="efficiency")
        if self.quantization_ps < 1:
            raise ConfigError("quantization must be at least 1 ps", key="quantization")

    @property
    def quantization_ps(self) -> int:
        return int(round(self.quantization / PS))


@dataclass(frozen=True)
class SimConfig:
    """Simulation run.

    ``rates_detected`` states whether ``sfwm.gamma_*`` are detected-count
    coefficients; if so no efficiency thinning is applied to photons.
    """

    duration: float = 1200.0
    p_cav: float = 0.58
    sfwm: SfwmParams = field(default_factory=SfwmParams)
    det_plus: DetectorModel = field(default_factory=DetectorModel)
    det_minus: DetectorModel = field(default_factory=DetectorModel)
    cable_delay: float = -12e-9
    rng_seed: int = 0
    rates_detected: bool = True
    max_tags: int = 60_000_000
    cauchy_clip: float = 100.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be positive", key="duration")
        if not self.p_cav >= 0:
            raise ConfigError("power must be nonnegative", key="p_cav")
        if not 0 <= self.rng_seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer", key="rng_seed")

    @property
    def pair_rate(self) -> float:
        return self.sfwm.gamma_exp * self.p_cav ** 2

    def expected_tags(self):
        """Expected number of tags (plus, minus) before dead time."""
        T, P = self.duration, self.p_cav
        counts = []
        for gamma, det in ((self.sfwm.gamma_plus, self.det_plus),
                           (self.sfwm.gamma_minus, self.det_minus)):
            eff = 1.0 if self.rates_detected else det.efficiency
            counts.append(((self.pair_rate + gamma * P) * eff + det.dark_rate) * T)
        return tuple(counts)


@dataclass
class SimTruth:
    generated_pairs: int
    detected_pairs: int
    background_plus: int
    background_minus: int
    dark_plus: int
    dark_minus: int
    tags_plus: int
    tags_minus: int
    dead_time_lost_plus: int = 0
    dead_time_lost_minus: int = 0
    pair_delays: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("pair_delays")
        return d


def _rng(seed_seq):
    return np.random.Generator(np.random.Philox(seed_seq))


def _to_ticks(times, det: DetectorModel, duration, rng):
    """Jitter, clamp, floor to the TDC grid; returns sorted uint64 ps."""
    if det.jitter_sigma > 0 and times.size:
        times = times + rng.normal(0.0, det.jitter_sigma, times.size)
    np.clip(times, 0.0, duration, out=times)
    q = det.quantization_ps
    ticks = np.floor(times / (q * PS)).astype(np.uint64)
    np.minimum(ticks, np.uint64(math.floor(duration / (q * PS))), out=ticks)
    ticks *= np.uint64(q)
    ticks.sort()
    return ticks


@numba.njit(cache=True)
def _dead_time_mask(ticks, dead_ps):
    keep = np.ones(ticks.size, dtype=np.bool_)
    if ticks.size == 0:
        return keep
    last = ticks[0]
    for i in range(1, ticks.size):
        if ticks[i] - last < dead_ps:
            keep[i] = False
        else:
            last = ticks[i]
    return keep


def _apply_dead_time(ticks, det: DetectorModel):
    if det.dead_time <= 0 or ticks.size == 0:
        return ticks, 0
    keep = _dead_time_mask(ticks, np.uint64(round(det.dead_time / PS)))
    return ticks[keep], int(ticks.size - keep.sum())


def simulate_stream(cfg: SimConfig):
    """Generate (plus, minus, truth) for ``cfg``. Bit-identical for a fixed seed."""
    n_plus, n_minus = cfg.expected_tags()
    if max(n_plus, n_minus) > cfg.max_tags:
        raise ConfigError(
            f"expected {max(n_plus, n_minus):.3g} tags per channel exceeds the budget "
            f"of {cfg.max_tags}", key="max_tags")

    seeds = np.random.SeedSequence(cfg.rng_seed).spawn(6)
    rng_pairs, rng_bg_p, rng_bg_m, rng_dark, rng_jit_p, rng_jit_m = map(_rng, seeds)
    T, P = cfg.duration, cfg.p_cav
    sp = cfg.sfwm

    n_pairs = int(rng_pairs.poisson(cfg.pair_rate * T))
    t0 = rng_pairs.uniform(0.0, T, n_pairs)
    half_width = sp.tau_c / 2.0
    delays = cfg.cable_delay + half_width * rng_pairs.standard_cauchy(n_pairs)
    np.clip(delays, cfg.cable_delay - cfg.cauchy_clip * sp.tau_c,
            cfg.cable_delay + cfg.cauchy_clip * sp.tau_c, out=delays)
    if cfg.rates_detected:
        keep_p = keep_m = np.ones(n_pairs, dtype=bool)
    else:
        keep_p = rng_pairs.random(n_pairs) < cfg.det_plus.efficiency
        keep_m = rng_pairs.random(n_pairs) < cfg.det_minus.efficiency
    both = keep_p & keep_m

    def background(rng, gamma, det):
        n = int(rng.poisson(gamma * P * T))
        t = rng.uniform(0.0, T, n)
        if not cfg.rates_detected:
            t = t[rng.random(n) < det.efficiency]
        return t

    bg_p = background(rng_bg_p, sp.gamma_plus, cfg.det_plus)
    bg_m = background(rng_bg_m, sp.gamma_minus, cfg.det_minus)
    dark_p = rng_dark.uniform(0.0, T, int(rng_dark.poisson(cfg.det_plus.dark_rate * T)))
    dark_m = rng_dark.uniform(0.0, T, int(rng_dark.poisson(cfg.det_minus.dark_rate * T)))

    times_p = np.concatenate([t0[keep_p], bg_p, dark_p])
    times_m = np.concatenate([(t0 + delays)[keep_m], bg_m, dark_m])
    n_bg_p, n_bg_m = bg_p.size, bg_m.size
    del bg_p, bg_m
    ticks_p = _to_ticks(times_p, cfg.det_plus, T, rng_jit_p)
    del times_p
    ticks_m = _to_ticks(times_m, cfg.det_minus, T, rng_jit_m)
    del times_m
    ticks_p, lost_p = _apply_dead_time(ticks_p, cfg.det_plus)
    ticks_m, lost_m = _apply_dead_time(ticks_m, cfg.det_minus)

    truth = SimTruth(
        generated_pairs=n_pairs,
        detected_pairs=int(both.sum()),
        background_plus=int(n_bg_p),
        background_minus=int(n_bg_m),
        dark_plus=int(dark_p.size),
        dark_minus=int(dark_m.size),
        tags_plus=int(ticks_p.size),
        tags_minus=int(ticks_m.size),
        dead_time_lost_plus=lost_p,
        dead_time_lost_minus=lost_m,
        pair_delays=delays[both],
    )
    plus = TagStream(CHANNEL_PLUS, ticks_p, cfg.det_plus.quantization_ps)
    minus = TagStream(CHANNEL_MINUS, ticks_m, cfg.det_minus.quantization_ps)
    return plus, minus, truth
