"""Photon timestamp generation from the kinetic model.

Two exact samplers are provided for CW excitation:

* ``simulate_cw`` exploits that every radiative decay resets the emitter to
  the ground level, so detected photons form a renewal process.  The number
  of excitation cycles between kept photons is geometric, and the interval
  is a sum of Gamma-distributed dwell times.  Cost is O(kept photons), which
  is what makes realistic collection efficiencies (~1e-4) tractable.
* ``simulate_cw_direct`` is a plain jump-by-jump Gillespie trajectory and
  serves as the independent reference in the test suite.

Times are integer picoseconds on output; internal arithmetic is in ns.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import ConfigError
from .kinetics import (EmitterConfig, ExcitationContext, Pulsed, excitation_rate)

PS_PER_NS = 1000
PS_PER_S = 10**12


def config_digest(*objs) -> bytes:
    return hashlib.sha256(repr(objs).encode()).digest()


def _seed_int(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, np.uint32)[0])
    return int(np.random.SeedSequence(seed).generate_state(1, np.uint32)[0])


def _seed_value(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        ent = seed.entropy
        return int(ent) & 0xFFFFFFFFFFFFFFFF if isinstance(ent, int) else 0
    return int(seed) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class PhotonStream:
    times: np.ndarray  # int64 ps, non-decreasing
    duration: float  # s
    config_hash: bytes = b"\0" * 32
    seed: int = 0

    def __post_init__(self):
        t = np.array(self.times, dtype=np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self):
        return len(self.times)

    @property
    def rate(self) -> float:
        return len(self.times) / self.duration


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 1.0
    jitter_sigma: float = 0.0  # ns
    dead_time: float = 0.0  # ns
    dark_rate: float = 0.0  # cts/s
    background_rate: float = 0.0  # cts/s

    def __post_init__(self):
        for name in ("efficiency", "jitter_sigma", "dead_time", "dark_rate", "background_rate"):
            val = getattr(self, name)
            if not (val >= 0 and math.isfinite(val)):
                raise ConfigError(f"detector {name} must be finite and >= 0, got {val}")
        if self.efficiency > 1:
            raise ConfigError(f"detector efficiency must be <= 1, got {self.efficiency}")


@dataclass(frozen=True)
class TimestampStream:
    """Time-ordered records of (channel, time in ps) for one acquisition."""

    channels: np.ndarray
    times: np.ndarray
    duration_ps: int
    n_channels: int
    config_hash: bytes = b"\0" * 32
    seed: int = 0

    def __post_init__(self):
        ch = np.array(self.channels, dtype=np.uint8)
        t = np.array(self.times, dtype=np.int64)
        if ch.shape != t.shape:
            raise ValueError("channels and times must have equal length")
        if len(ch) and int(ch.max()) >= self.n_channels:
            raise ValueError(f"channel id {int(ch.max())} >= n_channels {self.n_channels}")
        ch.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "times", t)
        if len(self.config_hash) != 32:
            raise ValueError("config hash must be 32 bytes")

    @classmethod
    def from_channels(cls, per_channel, duration: float, config_hash=b"\0" * 32, seed=0):
        per_channel = [np.asarray(t, dtype=np.int64) for t in per_channel]
        times = np.concatenate(per_channel) if per_channel else np.empty(0, np.int64)
        chans = np.concatenate([np.full(len(t), i, np.uint8) for i, t in enumerate(per_channel)]) \
            if per_channel else np.empty(0, np.uint8)
        order = np.lexsort((chans, times))
        return cls(chans[order], times[order], int(round(duration * PS_PER_S)),
                   len(per_channel), config_hash, seed)

    @property
    def duration(self) -> float:
        return self.duration_ps / PS_PER_S

    def channel(self, i: int) -> np.ndarray:
        return self.times[self.channels == i]

    @property
    def counts(self) -> list[int]:
        return np.bincount(self.channels, minlength=self.n_channels).tolist()

    def rate(self, i: int) -> float:
        return self.counts[i] / self.duration

    def __eq__(self, other):
        if not isinstance(other, TimestampStream):
            return NotImplemented
        return (self.duration_ps == other.duration_ps and self.n_channels == other.n_channels
                and self.config_hash == other.config_hash and self.seed == other.seed
                and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.times, other.times))

    __hash__ = None


def _ns_to_ps(t_ns: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(t_ns) * PS_PER_NS).astype(np.int64)


def _check_duration(duration: float):
    if not (duration > 0 and math.isfinite(duration)):
        raise ConfigError(f"duration must be positive, got {duration}")


def simulate_cw(cfg: EmitterConfig, ctx: ExcitationContext, duration: float, seed,
                efficiency: float = 1.0) -> PhotonStream:
    """Exact CW photon stream, thinned to a fraction ``efficiency`` of emissions.

    Emissions are kept independently with probability ``efficiency`` (the
    collection efficiency); the thinning is folded into the sampler, so the
    cost scales with kept photons only.
    """
    if ctx.pulsed:
        raise ConfigError("simulate_cw needs a CW excitation context")
    _check_duration(duration)
    if not 0 <= efficiency <= 1:
        raise ConfigError(f"efficiency must lie in [0, 1], got {efficiency}")
    digest = config_digest(cfg, ctx, efficiency)
    empty = PhotonStream(np.empty(0, np.int64), duration, digest, _seed_value(seed))

    k_exc = excitation_rate(cfg, ctx)
    k_x = cfg.k_decay(ctx.wavelength)
    if k_exc > 0 and cfg.k_isc > 0 and cfg.k_isc_return == 0:
        raise ConfigError("the isc level is reachable but has zero escape rate")
    q = efficiency * cfg.k_rad / k_x
    if k_exc == 0 or q == 0:
        return empty
    p_isc = (cfg.k_isc / k_x) / (1.0 - q) if q < 1 else 0.0

    rng = np.random.default_rng(seed)
    t_end = duration * 1e9
    mean_cycles = 1.0 / q
    mean_dt = mean_cycles * (1.0 / k_exc + 1.0 / k_x)
    if cfg.k_isc > 0:
        mean_dt += (mean_cycles - 1.0) * p_isc / cfg.k_isc_return
    n_chunk = int(min(max(1.05 * t_end / mean_dt + 64, 64), 1 << 21))

    pieces = []
    t0 = 0.0
    while t0 < t_end:
        cycles = rng.geometric(q, n_chunk)
        dt = rng.gamma(cycles, 1.0 / k_exc) + rng.gamma(cycles, 1.0 / k_x)
        if cfg.k_isc > 0:
            shelved = rng.binomial(cycles - 1, p_isc)
            dt += rng.gamma(shelved, 1.0 / cfg.k_isc_return)
        t = t0 + np.cumsum(dt)
        pieces.append(t[t < t_end])
        t0 = t[-1]
    times = _ns_to_ps(np.concatenate(pieces))
    return PhotonStream(times, duration, digest, _seed_value(seed))


@njit(cache=True)
def _gillespie_cw(seed, k_exc, k_rad, k_nr, k_isc, k_ret, eff, t_end):
    np.random.seed(seed)
    occupancy = np.zeros(3)
    out = np.empty(1024)
    n = 0
    jumps = 0
    state = 0
    t = 0.0
    while True:
        if state == 0:
            rate = k_exc
        elif state == 1:
            rate = k_rad + k_nr + k_isc
        else:
            rate = k_ret
        if rate <= 0.0:
            occupancy[state] += t_end - t
            break
        dt = -math.log(1.0 - np.random.random()) / rate
        if t + dt >= t_end:
            occupancy[state] += t_end - t
            break
        occupancy[state] += dt
        t += dt
        jumps += 1
        if state == 0:
            state = 1
        elif state == 1:
            u = np.random.random() * rate
            if u < k_rad:
                if eff >= 1.0 or np.random.random() < eff:
                    if n == out.shape[0]:
                        grown = np.empty(2 * n)
                        grown[:n] = out
                        out = grown
                    out[n] = t
                    n += 1
                state = 0
            elif u < k_rad + k_nr:
                state = 0
            else:
                state = 2
        else:
            state = 0
    return out[:n], occupancy / t_end, jumps


class Trajectory(NamedTuple):
    photons: PhotonStream
    occupancy: np.ndarray  # time fraction per level
    jumps: int


def simulate_cw_direct(cfg: EmitterConfig, ctx: ExcitationContext, duration: float, seed,
                       efficiency: float = 1.0) -> Trajectory:
    """Jump-by-jump Gillespie trajectory; slow, used as a reference."""
    if ctx.pulsed:
        raise ConfigError("simulate_cw_direct needs a CW excitation context")
    _check_duration(duration)
    k_exc = excitation_rate(cfg, ctx)
    if k_exc > 0 and cfg.k_isc > 0 and cfg.k_isc_return == 0:
        raise ConfigError("the isc level is reachable but has zero escape rate")
    t_ns, occ, jumps = _gillespie_cw(_seed_int(seed), k_exc, cfg.k_rad, cfg.k_nr(ctx.wavelength),
                                     cfg.k_isc, cfg.k_isc_return, efficiency, duration * 1e9)
    photons = PhotonStream(_ns_to_ps(t_ns), duration, config_digest(cfg, ctx, efficiency),
                           _seed_value(seed))
    return Trajectory(photons, occ, int(jumps))


@njit(cache=True)
def _pulsed_kernel(seed, n_pulses, period, width, offset, k_peak,
                   k_rad, k_nr, k_isc, k_ret, eff, t_end):
    np.random.seed(seed)
    out = np.empty(1024)
    n = 0
    if k_peak <= 0.0:
        return out[:0]
    k_x = k_rad + k_nr + k_isc
    p_win = -math.expm1(-k_peak * width)
    log_miss = math.log1p(-p_win) if p_win < 1.0 else -math.inf
    state = 0
    t = 0.0
    while t < t_end:
        if state == 0:
            m = math.floor((t - offset) / period)
            if m < 0:
                m = 0
            start = offset + m * period
            if t >= start + width:
                m += 1
                start += period
            if m >= n_pulses:
                break
            if t <= start:
                # skip whole pulses in which no excitation happens
                u = 1.0 - np.random.random()
                if log_miss == -math.inf:
                    skipped = 0
                else:
                    skipped = math.floor(math.log(u) / log_miss)
                if m + skipped >= n_pulses:
                    break
                start += skipped * period
                v = np.random.random()
                t = start - math.log1p(-v * p_win) / k_peak
                state = 1
            else:
                dt = -math.log(1.0 - np.random.random()) / k_peak
                if t + dt < start + width:
                    t += dt
                    state = 1
                else:
                    t = start + width
        elif state == 1:
            t += -math.log(1.0 - np.random.random()) / k_x
            u = np.random.random() * k_x
            if u < k_rad:
                if t < t_end and (eff >= 1.0 or np.random.random() < eff):
                    if n == out.shape[0]:
                        grown = np.empty(2 * n)
                        grown[:n] = out
                        out = grown
                    out[n] = t
                    n += 1
                state = 0
            elif u < k_rad + k_nr:
                state = 0
            else:
                state = 2
        else:
            if k_ret <= 0.0:
                break
            t += -math.log(1.0 - np.random.random()) / k_ret
            state = 0
    return out[:n]


class PulsedRun(NamedTuple):
    photons: PhotonStream
    syncs: np.ndarray  # int64 ps, one per pulse


def simulate_pulsed(cfg: EmitterConfig, ctx: ExcitationContext, duration: float, seed,
                    efficiency: float = 1.0) -> PulsedRun:
    """Exact trajectory under a train of rectangular excitation pulses.

    The average power sets the pulse energy: during a pulse the excitation
    rate is the CW rate scaled by period / pulse width.  A sync marker is
    emitted at the start of every period; the optical pulse follows after
    ``sync_offset_ns``.
    """
    if not isinstance(ctx.mode, Pulsed):
        raise ConfigError("simulate_pulsed needs a pulsed excitation context")
    _check_duration(duration)
    mode = ctx.mode
    if cfg.k_isc > 0 and cfg.k_isc_return == 0 and excitation_rate(cfg, ctx) > 0:
        raise ConfigError("the isc level is reachable but has zero escape rate")
    period_ps = int(round(mode.period_ns * PS_PER_NS))
    duration_ps = int(round(duration * PS_PER_S))
    n_pulses = -(-duration_ps // period_ps)
    syncs = np.arange(n_pulses, dtype=np.int64) * period_ps
    k_peak = excitation_rate(cfg, ctx) * mode.period_ns / mode.pulse_width_ns
    t_ns = _pulsed_kernel(_seed_int(seed), n_pulses, mode.period_ns, mode.pulse_width_ns,
                          mode.sync_offset_ns, k_peak, cfg.k_rad, cfg.k_nr(ctx.wavelength),
                          cfg.k_isc, cfg.k_isc_return, efficiency, duration * 1e9)
    photons = PhotonStream(_ns_to_ps(t_ns), duration, config_digest(cfg, ctx, efficiency),
                           _seed_value(seed))
    return PulsedRun(photons, syncs)


def hbt_split(stream: PhotonStream, seed) -> tuple[PhotonStream, PhotonStream]:
    """Route each photon to one of two arms with probability 1/2."""
    rng = np.random.default_rng(seed)
    to_first = rng.random(len(stream.times)) < 0.5
    make = lambda t: PhotonStream(t, stream.duration, stream.config_hash, stream.seed)  # noqa: E731
    return make(stream.times[to_first]), make(stream.times[~to_first])


@njit(cache=True)
def _dead_time_mask(times, gap):
    keep = np.zeros(times.shape[0], dtype=np.bool_)
    last = 0
    have = False
    for i in range(times.shape[0]):
        if not have or times[i] - last >= gap:
            keep[i] = True
            last = times[i]
            have = True
    return keep


def detect(stream: PhotonStream, det: DetectorConfig, duration: float, seed) -> np.ndarray:
    """Registered times (int64 ps) of one detector channel.

    Order of effects: efficiency thinning, Poisson dark and background counts
    over [0, duration], Gaussian jitter (rounded to whole ps, events pushed
    outside [0, duration] are lost), sorting, then dead time.  Consecutive
    kept events are at least ``max(dead_time, 1 ps)`` apart.
    """
    _check_duration(duration)
    rng = np.random.default_rng(seed)
    duration_ps = int(round(duration * PS_PER_S))
    t = np.asarray(stream.times, dtype=np.int64)
    if det.efficiency < 1.0:
        t = t[rng.random(len(t)) < det.efficiency]
    extra_rate = det.dark_rate + det.background_rate
    if extra_rate > 0:
        n_extra = rng.poisson(extra_rate * duration)
        extra = np.floor(rng.random(n_extra) * duration_ps).astype(np.int64)
        t = np.concatenate([t, extra])
    if det.jitter_sigma > 0 and len(t):
        t = t + np.rint(rng.normal(0.0, det.jitter_sigma * PS_PER_NS, len(t))).astype(np.int64)
        t = t[(t >= 0) & (t <= duration_ps)]
    t = np.sort(t, kind="stable")
    gap = max(int(round(det.dead_time * PS_PER_NS)), 1)
    return t[_dead_time_mask(t, gap)]
