"""Level scheme and rate model of a single molecular emitter.

Three levels are tracked: the ground doublet, the optically excited doublet
and one effective shelving level standing in for the intersystem-crossing
manifold.  All rates are in ns^-1, powers in uW and angles in degrees.

The reference emitter is calibrated to three measured observables of the
VOPc molecule E1: an antibunching time of 1.27 ns under 300 uW of 658 nm
light, a saturation power of 249 uW and a saturated count rate of
26 kcts/s.  Under pumping the two-level g2 dip recovers at
``k_exc + k_rad + k_nr``, so matching the antibunching time at 300 uW fixes
``k_rad + k_nr(658) = (1/1.27 ns) / (1 + 300/249)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError, NumericalError

LEVELS = ("ground", "excited", "isc")
GROUND, EXCITED, ISC = 0, 1, 2

REF_G2_TIME_NS = 1.27
REF_POWER_UW = 300.0
REF_PSAT_UW = 249.0
REF_CINF_CPS = 26_000.0
GREEN_LIFETIME_NS = 0.25
GREEN_SIGMA_REL = 1.0 / 7.0

# total excited-state decay rate of the reference emitter at 658 nm
REF_K_TOTAL = (1.0 / REF_G2_TIME_NS) / (1.0 + REF_POWER_UW / REF_PSAT_UW)
# ns^-1 uW^-1, so that P_sat = 249 uW at 658 nm with sigma_rel = 1
DEFAULT_ALPHA = REF_K_TOTAL / REF_PSAT_UW
# photons detected per photon emitted, so det_eff * k_rad = 26 kcts/s
DEFAULT_DET_EFF = REF_CINF_CPS / (REF_K_TOTAL * 1e9)


def _as_rate_map(values: Mapping, name: str) -> dict[float, float]:
    out = {}
    for key, val in dict(values).items():
        out[float(key)] = float(val)
    if not out:
        raise ConfigError(f"{name} must list at least one wavelength")
    return out


@dataclass(frozen=True)
class EmitterConfig:
    """Rates and orientation of one simulated molecule."""

    k_rad: float
    k_nr_by_wavelength: Mapping[float, float]
    sigma_rel_by_wavelength: Mapping[float, float]
    k_isc: float = 0.0
    k_isc_return: float = 0.0
    tilt_phi: float = 0.0
    excited_splitting_ev: float = 0.07

    def __post_init__(self):
        object.__setattr__(self, "k_nr_by_wavelength",
                           _as_rate_map(self.k_nr_by_wavelength, "k_nr_by_wavelength"))
        object.__setattr__(self, "sigma_rel_by_wavelength",
                           _as_rate_map(self.sigma_rel_by_wavelength, "sigma_rel_by_wavelength"))
        if not (self.k_rad > 0 and math.isfinite(self.k_rad)):
            raise ConfigError(f"k_rad must be positive and finite, got {self.k_rad}")
        for name in ("k_isc", "k_isc_return"):
            val = getattr(self, name)
            if not (val >= 0 and math.isfinite(val)):
                raise ConfigError(f"{name} must be >= 0, got {val}")
        for wl, val in self.k_nr_by_wavelength.items():
            if not (val >= 0 and math.isfinite(val)):
                raise ConfigError(f"k_nr at {wl:g} nm must be >= 0, got {val}")
        for wl, val in self.sigma_rel_by_wavelength.items():
            if not (val >= 0 and math.isfinite(val)):
                raise ConfigError(f"sigma_rel at {wl:g} nm must be >= 0, got {val}")
        if not (0.0 <= self.tilt_phi <= 90.0):
            raise ConfigError(f"tilt_phi must lie in [0, 90] degrees, got {self.tilt_phi}")

    def k_nr(self, wavelength: float) -> float:
        try:
            return self.k_nr_by_wavelength[float(wavelength)]
        except KeyError:
            raise ConfigError(
                f"no k_nr entry for wavelength {wavelength:g} nm "
                f"(known: {sorted(self.k_nr_by_wavelength)})") from None

    def sigma_rel(self, wavelength: float) -> float:
        try:
            return self.sigma_rel_by_wavelength[float(wavelength)]
        except KeyError:
            raise ConfigError(
                f"no sigma_rel entry for wavelength {wavelength:g} nm "
                f"(known: {sorted(self.sigma_rel_by_wavelength)})") from None

    def k_decay(self, wavelength: float) -> float:
        """Total departure rate from the excited level."""
        return self.k_rad + self.k_nr(wavelength) + self.k_isc


@dataclass(frozen=True)
class CW:
    pass


@dataclass(frozen=True)
class Pulsed:
    period_ns: float = 20.0
    pulse_width_ps: float = 50.0
    # optical pulse arrives this long after its electrical sync marker
    sync_offset_ns: float = 2.0

    def __post_init__(self):
        width_ns = self.pulse_width_ps / 1000.0
        if not width_ns > 0:
            raise ConfigError(f"pulse width must be positive, got {self.pulse_width_ps} ps")
        if not self.period_ns > width_ns:
            raise ConfigError(
                f"pulse period {self.period_ns} ns is not longer than the "
                f"pulse width {self.pulse_width_ps} ps")
        if not (0 <= self.sync_offset_ns and self.sync_offset_ns + width_ns <= self.period_ns):
            raise ConfigError("sync offset must place the pulse inside its period")

    @property
    def pulse_width_ns(self) -> float:
        return self.pulse_width_ps / 1000.0


@dataclass(frozen=True)
class ExcitationContext:
    wavelength: float
    power: float
    pol_theta: float = 0.0
    mode: CW | Pulsed = field(default_factory=CW)
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not (self.power >= 0 and math.isfinite(self.power)):
            raise ConfigError(f"power must be >= 0, got {self.power}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")

    @property
    def pulsed(self) -> bool:
        return isinstance(self.mode, Pulsed)


@dataclass(frozen=True)
class RateMatrix:
    """Generator matrix; ``matrix[i, j]`` is the rate from level j to level i."""

    matrix: np.ndarray
    labels: tuple[str, ...] = LEVELS

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def rate(self, src: str, dst: str) -> float:
        return float(self.matrix[self.labels.index(dst), self.labels.index(src)])


@dataclass(frozen=True)
class SteadyState:
    populations: np.ndarray
    detected_rate: float  # cts/s

    @property
    def p_excited(self) -> float:
        return float(self.populations[EXCITED])


def polarization_factor(tilt_phi: float, pol_theta: float) -> float:
    """Relative absorption of a tilted in-plane dipole pair, 1 - sin^2(phi) sin^2(theta)."""
    s_phi = math.sin(math.radians(tilt_phi))
    s_theta = math.sin(math.radians(pol_theta))
    return max(0.0, 1.0 - s_phi * s_phi * s_theta * s_theta)


def excitation_rate(cfg: EmitterConfig, ctx: ExcitationContext) -> float:
    """Time-averaged excitation rate (ns^-1) for the given laser conditions."""
    sigma = cfg.sigma_rel(ctx.wavelength)
    return ctx.alpha * sigma * ctx.power * polarization_factor(cfg.tilt_phi, ctx.pol_theta)


def effective_lifetime(k_rad: float, k_nr: float) -> float:
    total = k_rad + k_nr
    if k_rad < 0 or k_nr < 0:
        raise DomainError(f"rates must be non-negative (k_rad={k_rad}, k_nr={k_nr})")
    if not total > 0:
        raise DomainError("effective lifetime undefined when k_rad + k_nr = 0")
    return 1.0 / total


def build_rate_matrix(cfg: EmitterConfig, ctx: ExcitationContext) -> RateMatrix:
    if ctx.pulsed:
        raise ConfigError("a stationary rate matrix needs a CW excitation context")
    k_exc = excitation_rate(cfg, ctx)
    k_relax = cfg.k_rad + cfg.k_nr(ctx.wavelength)
    m = np.zeros((3, 3))
    m[EXCITED, GROUND] = k_exc
    m[GROUND, EXCITED] = k_relax
    m[ISC, EXCITED] = cfg.k_isc
    m[GROUND, ISC] = cfg.k_isc_return
    m[np.diag_indices(3)] = -m.sum(axis=0)
    return RateMatrix(m)


def steady_state(m: RateMatrix, k_rad: float, det_eff: float = DEFAULT_DET_EFF) -> SteadyState:
    """Stationary populations and the detected photon rate in cts/s."""
    a = np.asarray(m.matrix)
    n = a.shape[0]
    if a[EXCITED, GROUND] == 0.0:
        pops = np.zeros(n)
        pops[GROUND] = 1.0
        return SteadyState(pops, 0.0)

    # every level reachable from the ground level must be left again
    reachable = {GROUND}
    frontier = [GROUND]
    while frontier:
        j = frontier.pop()
        for i in range(n):
            if i != j and a[i, j] > 0 and i not in reachable:
                reachable.add(i)
                frontier.append(i)
    for j in sorted(reachable):
        if a[j, j] == 0.0:
            raise NumericalError(
                f"level '{m.labels[j]}' is absorbing while excitation is on; "
                f"rate matrix:\n{a}")

    idx = sorted(reachable)
    sub = a[np.ix_(idx, idx)]
    lhs = np.vstack([sub[:-1], np.ones(len(idx))])
    rhs = np.zeros(len(idx))
    rhs[-1] = 1.0
    try:
        p_sub = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular rate matrix:\n{a}") from exc
    if not np.all(np.isfinite(p_sub)):
        raise NumericalError(f"non-finite stationary solution for rate matrix:\n{a}")
    pops = np.zeros(n)
    pops[idx] = np.clip(p_sub, 0.0, None)
    pops /= pops.sum()
    rate = det_eff * k_rad * 1e9 * pops[EXCITED]
    return SteadyState(pops, float(rate))


def saturation_parameters(cfg: EmitterConfig, ctx: ExcitationContext,
                          det_eff: float = DEFAULT_DET_EFF) -> tuple[float, float]:
    """Analytic (C_inf in cts/s, P_sat in uW) of the detected rate versus power.

    The shelving level rescales both: C_inf by the fraction of saturated time
    spent outside it, P_sat by ``1 + k_isc / k_isc_return``.
    """
    per_uw = (ctx.alpha * cfg.sigma_rel(ctx.wavelength)
              * polarization_factor(cfg.tilt_phi, ctx.pol_theta))
    k_x = cfg.k_decay(ctx.wavelength)
    shelf = 0.0
    if cfg.k_isc > 0:
        if cfg.k_isc_return == 0:
            return 0.0, math.inf
        shelf = cfg.k_isc / cfg.k_isc_return
    if per_uw == 0:
        return det_eff * cfg.k_rad * 1e9 / (1 + shelf), math.inf
    c_inf = det_eff * cfg.k_rad * 1e9 / (1.0 + shelf)
    p_sat = k_x / (per_uw * (1.0 + shelf))
    return c_inf, p_sat


def antibunching_time(cfg: EmitterConfig, ctx: ExcitationContext) -> float:
    """1/e recovery time (ns) of g2 for the two-level scheme under CW pumping."""
    return 1.0 / (excitation_rate(cfg, ctx) + cfg.k_rad + cfg.k_nr(ctx.wavelength))


def reference_emitter(tilt_phi: float = 0.0) -> EmitterConfig:
    """VOPc emitter E1 as calibrated in the module docstring."""
    return EmitterConfig(
        k_rad=REF_K_TOTAL,
        k_nr_by_wavelength={658.0: 0.0, 515.0: 1.0 / GREEN_LIFETIME_NS - REF_K_TOTAL},
        sigma_rel_by_wavelength={658.0: 1.0, 515.0: GREEN_SIGMA_REL},
        tilt_phi=tilt_phi,
    )
