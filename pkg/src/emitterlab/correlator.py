"""Coincidence and TCSPC histograms from integer-picosecond timestamps.

Lag convention: tau = t2 - t1 (channel 1 starts, channel 2 stops); bins are
left-closed, right-open, with bin k covering [k*w, (k+1)*w).  The
correlation window is rounded up to a whole number of bins on each side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .errors import DomainError, PreconditionError

PS_PER_S = 1e12
KINDS = ("coincidence", "tcspc", "irf", "spectrum")

# 73.3 ps, the bin width of the HBT correlation card
DEFAULT_BIN_WIDTH = 7.33e-11


@dataclass(frozen=True)
class Histogram:
    """Uniformly binned counts.

    ``bin_width`` and ``origin`` (left edge of the first bin) are in seconds
    for time histograms and in nanometres for spectra.  ``T`` is the
    acquisition time in s, ``N1``/``N2`` the channel count rates in cts/s.
    """

    counts: np.ndarray
    bin_width: float
    origin: float = 0.0
    kind: str = "coincidence"
    T: float = 0.0
    N1: float = 0.0
    N2: float = 0.0
    normalized: bool = False
    discarded: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown histogram kind {self.kind!r}")
        if not self.bin_width > 0:
            raise DomainError(f"bin width must be positive, got {self.bin_width}")
        c = np.asarray(self.counts)
        if self.normalized:
            c = np.array(c, dtype=np.float64)
        else:
            if c.size and (np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0))):
                raise ValueError("raw counts must be non-negative integers")
            c = np.array(c, dtype=np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def __len__(self):
        return len(self.counts)

    @property
    def edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(len(self.counts) + 1)

    @property
    def left_edges(self) -> np.ndarray:
        return self.origin + self.bin_width * np.arange(len(self.counts))

    @property
    def centers(self) -> np.ndarray:
        return self.left_edges + 0.5 * self.bin_width

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return (self.bin_width == other.bin_width and self.origin == other.origin
                and self.kind == other.kind and self.T == other.T and self.N1 == other.N1
                and self.N2 == other.N2 and self.normalized == other.normalized
                and self.discarded == other.discarded
                and np.array_equal(self.counts, other.counts))

    __hash__ = None


def _to_ps(seconds: float) -> float:
    # strip float noise such as 1e-9 * 1e12 = 1000.0000000000001
    return round(seconds * PS_PER_S, 6)


def _check_sorted(t: np.ndarray, name: str) -> np.ndarray:
    t = np.ascontiguousarray(t, dtype=np.int64)
    if len(t) > 1 and np.any(np.diff(t) < 0):
        raise PreconditionError(f"{name} timestamps are not sorted")
    return t


def _half_bins(omega: float, window: float) -> int:
    if not omega > 0:
        raise DomainError(f"bin width must be positive, got {omega}")
    if not window > omega:
        raise DomainError(f"window ({window} s) must exceed the bin width ({omega} s)")
    return int(math.ceil(_to_ps(window) / _to_ps(omega) * (1 - 1e-12)))


@njit(cache=True)
def _sweep(a, b, w, half):
    counts = np.zeros(2 * half, dtype=np.int64)
    lo = math.floor(-half * w) - 1
    hi = math.ceil(half * w) + 1
    j0 = 0
    nb = b.shape[0]
    for i in range(a.shape[0]):
        t = a[i]
        while j0 < nb and b[j0] - t < lo:
            j0 += 1
        j = j0
        while j < nb:
            d = b[j] - t
            if d > hi:
                break
            k = math.floor(d / w)
            if -half <= k < half:
                counts[k + half] += 1
            j += 1
    return counts


@njit(cache=True)
def _all_pairs(a, b, w, half):
    counts = np.zeros(2 * half, dtype=np.int64)
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            k = math.floor((b[j] - a[i]) / w)
            if -half <= k < half:
                counts[k + half] += 1
    return counts


def _coincidence(ch1, ch2, omega, window, counter) -> Histogram:
    a = _check_sorted(ch1, "channel 1")
    b = _check_sorted(ch2, "channel 2")
    half = _half_bins(omega, window)
    counts = counter(a, b, _to_ps(omega), half)
    return Histogram(counts, omega, -half * omega, "coincidence")


def coincidence_histogram(ch1, ch2, omega: float = DEFAULT_BIN_WIDTH,
                          window: float = 20e-9) -> Histogram:
    """Start-stop coincidence counts between two sorted ps channels.

    A two-pointer sweep visits only pairs within the window, so the cost is
    O(N * pairs per window).  ``omega`` and ``window`` are in seconds.
    """
    return _coincidence(ch1, ch2, omega, window, _sweep)


def brute_force_pairs(ch1, ch2, omega: float = DEFAULT_BIN_WIDTH,
                      window: float = 20e-9) -> Histogram:
    """O(N1*N2) enumeration of every pair; reference for the sweep."""
    return _coincidence(ch1, ch2, omega, window, _all_pairs)


def normalize_g2(h: Histogram, N1: float, N2: float, omega: float, T: float) -> Histogram:
    """Divide coincidences by the accidental level N1*N2*omega*T."""
    if h.kind != "coincidence":
        raise DomainError(f"can only normalize coincidence histograms, got {h.kind!r}")
    denom = N1 * N2 * omega * T
    if not (N1 > 0 and N2 > 0 and omega > 0 and T > 0) or not math.isfinite(denom):
        raise DomainError(
            f"normalization needs positive N1, N2, omega, T (got {N1}, {N2}, {omega}, {T})")
    return replace(h, counts=np.asarray(h.counts, dtype=np.float64) / denom,
                   T=T, N1=N1, N2=N2, normalized=True)


def g2_from_channels(ch1, ch2, duration: float, omega: float = DEFAULT_BIN_WIDTH,
                     window: float = 20e-9) -> tuple[Histogram, Histogram]:
    """Raw and normalized histograms, using the channels' own mean rates."""
    raw = coincidence_histogram(ch1, ch2, omega, window)
    n1 = len(ch1) / duration
    n2 = len(ch2) / duration
    raw = replace(raw, T=duration, N1=n1, N2=n2)
    return raw, normalize_g2(raw, n1, n2, omega, duration)


def tcspc_histogram(photons, syncs, period: float, bin_width: float) -> Histogram:
    """Delay of each photon after the most recent sync marker.

    Photons before the first sync, or more than one period after their sync
    (a missing marker), are discarded and tallied in ``discarded``.
    """
    p = _check_sorted(photons, "photon")
    s = _check_sorted(syncs, "sync")
    if not (bin_width > 0 and period > 0):
        raise DomainError("period and bin width must be positive")
    if bin_width > period:
        raise DomainError("bin width exceeds the sync period")
    n_bins = int(math.ceil(_to_ps(period) / _to_ps(bin_width) * (1 - 1e-12)))
    period_ps = _to_ps(period)
    idx = np.searchsorted(s, p, side="right") - 1
    has_sync = idx >= 0
    delay = p[has_sync] - s[idx[has_sync]]
    in_range = delay < period_ps
    delay = delay[in_range]
    k = np.floor(delay / _to_ps(bin_width)).astype(np.int64)
    k = np.minimum(k, n_bins - 1)
    counts = np.bincount(k, minlength=n_bins)
    discarded = int(len(p) - len(delay))
    return Histogram(counts, bin_width, 0.0, "tcspc", discarded=discarded)
