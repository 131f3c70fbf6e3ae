"""Two-channel coincidence histograms from sorted time-tag streams.

Bins are half-open, ``[(j - m - 1/2) w, (j - m + 1/2) w)`` for the delay
``t_b - t_a``, with an odd number of bins so that bin ``m`` is centered on
zero delay. Timestamps are integer picoseconds; bin edges are kept in
doubled units so odd bin widths stay exact.

Tags recorded on a TDC grid give delays on that grid. When the bin width
is not a multiple of it, neighbouring bins hold different numbers of
possible delays; ``exposure`` records that as a relative weight per bin
(1 for a continuous delay) and every estimator divides it out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DataError, UnsortedStreamError
from .tagio import TagStream

PS = 1e-12


@dataclass
class CorrelationHistogram:
    bin_width: float
    window: float
    bin_centers: np.ndarray
    counts: np.ndarray
    n_a: int
    n_b: int
    duration: float
    exposure: np.ndarray | None = None

    def __post_init__(self):
        if self.exposure is None:
            self.exposure = np.ones(self.counts.size)

    @property
    def bin_width_ps(self) -> int:
        return int(round(self.bin_width / PS))

    @property
    def accidental_level(self) -> float:
        """Expected counts per bin for uncorrelated streams."""
        return self.n_a * self.n_b * self.bin_width / self.duration

    def normalized(self):
        """Counts divided by the accidental level of each bin."""
        return self.counts / (self.accidental_level * self.exposure)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_center_ps", "counts"])
            for t, n in zip(np.rint(self.bin_centers / PS).astype(np.int64), self.counts):
                writer.writerow([int(t), int(n)])


def bin_layout(bin_width, window):
    """(bin width in ps, number of bins); the bin count is forced odd."""
    bw = int(round(bin_width / PS))
    if bw < 1:
        raise ValueError("bin width must be at least 1 ps")
    if bin_width > window:
        raise ValueError("bin width exceeds the correlation window")
    n = int(round(2 * window / bin_width))
    if n % 2 == 0:
        n += 1
    return bw, n


def bin_exposure(bw_ps, n_bins, grid_ps=1):
    """Grid delays per bin times ``grid_ps / bw_ps``; all ones when commensurate."""
    m = n_bins // 2
    j = np.arange(n_bins, dtype=np.int64) - m
    lo2, hi2 = (2 * j - 1) * bw_ps, (2 * j + 1) * bw_ps
    step = 2 * grid_ps
    count = -np.floor_divide(-hi2, step) + np.floor_divide(-lo2, step)
    return count * grid_ps / bw_ps


def _grid(a, b, grid_ps):
    if grid_ps is not None:
        return int(grid_ps)
    if isinstance(a, TagStream) and isinstance(b, TagStream):
        return math.gcd(a.quantization_ps, b.quantization_ps)
    return 1


@numba.njit(cache=True)
def _first_decrease(t):
    for i in range(1, t.size):
        if t[i] < t[i - 1]:
            return i
    return -1


@numba.njit(cache=True)
def _correlate_sorted(a, b, lo2, bw2, n_bins, counts):
    hi2 = lo2 + n_bins * bw2
    nb = b.size
    start = 0
    for i in range(a.size):
        ai = a[i]
        while start < nb and 2 * (b[start] - ai) < lo2:
            start += 1
        k = start
        while k < nb:
            d2 = 2 * (b[k] - ai)
            if d2 >= hi2:
                break
            counts[(d2 - lo2) // bw2] += 1
            k += 1


def _as_int64(stream):
    tags = stream.tags if isinstance(stream, TagStream) else np.asarray(stream)
    if tags.dtype == np.uint64:
        return tags.view(np.int64)
    return tags.astype(np.int64, copy=False)


def _check_sorted(t, name):
    bad = _first_decrease(t)
    if bad >= 0:
        raise UnsortedStreamError(f"stream {name} is not time-sorted", int(bad))


def _duration(a, b):
    if a.size == 0 and b.size == 0:
        return 0.0
    firsts = [x[0] for x in (a, b) if x.size]
    lasts = [x[-1] for x in (a, b) if x.size]
    return float(max(lasts) - min(firsts)) * PS


def _histogram(a, b, bin_width, window, counts, duration, grid_ps):
    bw, n = bin_layout(bin_width, window)
    m = n // 2
    centers = (np.arange(n) - m) * bw * PS
    if duration is None:
        duration = _duration(a, b)
    return CorrelationHistogram(bin_width=bw * PS, window=window, bin_centers=centers,
                                counts=counts, n_a=int(a.size), n_b=int(b.size),
                                duration=duration, exposure=bin_exposure(bw, n, grid_ps))


def cross_correlate(a, b, bin_width=1e-9, window=50e-9, duration=None, grid_ps=None):
    """Coincidence histogram of delays ``t_b - t_a`` within ``window``.

    Single forward pass: the first candidate in ``b`` only ever advances,
    so the cost is ``O(N_a + N_b + matches)`` and no per-tag temporaries are
    allocated. ``a`` and ``b`` are :class:`TagStream` objects or integer
    picosecond arrays. ``duration`` (s) defaults to the span of the tags.
    ``grid_ps`` is the delay grid used for the bin exposure; it defaults to
    the common quantization of two streams and 1 ps for plain arrays.
    """
    grid = _grid(a, b, grid_ps)
    ta, tb = _as_int64(a), _as_int64(b)
    if ta.size and np.shares_memory(ta, tb):
        raise DataError("a stream cannot be correlated with itself; "
                        "auto-correlation is not supported")
    _check_sorted(ta, "a")
    _check_sorted(tb, "b")
    bw, n = bin_layout(bin_width, window)
    m = n // 2
    counts = np.zeros(n, dtype=np.int64)
    _correlate_sorted(ta, tb, (-2 * m - 1) * bw, 2 * bw, n, counts)
    return _histogram(ta, tb, bin_width, window, counts, duration, grid)


def cross_correlate_bruteforce(a, b, bin_width=1e-9, window=50e-9, duration=None,
                               grid_ps=None, block=2048):
    """All-pairs reference implementation of :func:`cross_correlate`.

    Forms every difference ``t_b - t_a`` (in blocks of ``a``) and bins the
    ones inside the histogram span. Quadratic cost; meant for checking.
    """
    grid = _grid(a, b, grid_ps)
    ta, tb = _as_int64(a), _as_int64(b)
    bw, n = bin_layout(bin_width, window)
    m = n // 2
    counts = np.zeros(n, dtype=np.int64)
    for s in range(0, ta.size, block):
        d2 = 2 * (tb[None, :] - ta[s:s + block, None]).ravel()
        j = np.floor_divide(d2 + (2 * m + 1) * bw, 2 * bw)
        j = j[(j >= 0) & (j < n)]
        counts += np.bincount(j, minlength=n)
    return _histogram(ta, tb, bin_width, window, counts, duration, grid)
