"""Acquisition and sweep drivers shared by the CLI and the experiment scripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .io import ExperimentConfig, config_hash
from .montecarlo import TimestampStream, detect, hbt_split, simulate_cw, simulate_pulsed

# channel layout of simulated files
HBT_CHANNELS = (0, 1)
PHOTON_CHANNEL, SYNC_CHANNEL = 0, 1


def acquire(cfg: ExperimentConfig, duration: float, seed: int) -> TimestampStream:
    """Simulate one acquisition and return the recorded events.

    CW: emission, beam splitter, one detector per arm (channels 0 and 1).
    Pulsed: one detector on channel 0, laser sync markers on channel 1.
    Child seeds are spawned from ``seed`` so every stage has its own stream.
    """
    if seed < 0:
        raise UsageError("seed must be non-negative")
    ss = np.random.SeedSequence(seed)
    s_emit, s_split, s_det1, s_det2 = ss.spawn(4)
    digest = config_hash(cfg)
    if cfg.excitation.pulsed:
        run = simulate_pulsed(cfg.emitter, cfg.excitation, duration, s_emit,
                              efficiency=cfg.collection_efficiency)
        photons = detect(run.photons, cfg.detector, duration, s_det1)
        return TimestampStream.from_channels([photons, run.syncs], duration, digest, seed)
    emitted = simulate_cw(cfg.emitter, cfg.excitation, duration, s_emit,
                          efficiency=cfg.collection_efficiency)
    arm1, arm2 = hbt_split(emitted, s_split)
    ch1 = detect(arm1, cfg.detector, duration, s_det1)
    ch2 = detect(arm2, cfg.detector, duration, s_det2)
    return TimestampStream.from_channels([ch1, ch2], duration, digest, seed)


def detected_rate(cfg: ExperimentConfig, dwell: float, seed: int) -> float:
    """Total recorded photon rate (cts/s) summed over both HBT arms."""
    stream = acquire(cfg, dwell, seed)
    if cfg.excitation.pulsed:
        return stream.counts[PHOTON_CHANNEL] / dwell
    return sum(stream.counts[c] for c in HBT_CHANNELS) / dwell


@dataclass(frozen=True)
class Sweep:
    """Per-point rates of a parameter sweep, in point order."""

    x: np.ndarray
    raw: np.ndarray  # cts/s
    background: float  # cts/s from the dark reference
    seeds: tuple[int, ...]

    @property
    def rate(self) -> np.ndarray:
        return self.raw - self.background


def _check_dwell(dwell: float):
    if not dwell > 0:
        raise UsageError(f"dwell must be positive, got {dwell}")


def _sweep(base: ExperimentConfig, key: str, points, dwell: float, seed: int) -> Sweep:
    _check_dwell(dwell)
    points = np.asarray(points, dtype=float)
    seeds = tuple(seed + i for i in range(len(points)))
    raw = np.array([detected_rate(base.with_excitation(**{key: float(p)}), dwell, s)
                    for p, s in zip(points, seeds)])
    # dark reference: same detector, laser off, next seed in line
    dark = detected_rate(base.with_excitation(power=0.0), dwell, seed + len(points))
    return Sweep(points, raw, dark, seeds)


def saturation_sweep(base: ExperimentConfig, powers, dwell: float, seed: int) -> Sweep:
    """Point i is simulated at powers[i] with seed + i."""
    if base.excitation.pulsed:
        raise DomainError("saturation sweeps use CW excitation")
    if len(np.unique(np.asarray(powers, dtype=float))) < 3:
        raise UsageError("a saturation sweep needs at least 3 distinct powers")
    if np.any(np.asarray(powers, dtype=float) < 0):
        raise UsageError("powers must be non-negative")
    return _sweep(base, "power", powers, dwell, seed)


def polarization_sweep(base: ExperimentConfig, angles, dwell: float, seed: int) -> Sweep:
    """Point i is simulated at excitation polarization angles[i] with seed + i."""
    if base.excitation.pulsed:
        raise DomainError("polarization sweeps use CW excitation")
    if len(angles) < 4:
        raise UsageError("a polarization sweep needs at least 4 angles")
    return _sweep(base, "pol_theta", angles, dwell, seed)
