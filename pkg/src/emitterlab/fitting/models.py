"""Closed-form model functions.  Times in ns, angles in degrees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, erfcx

SQRT2 = np.sqrt(2.0)


def _exp_gauss_term(t, tau, sigma):
    """exp(sigma^2/(2 tau^2) - t/tau) * erfc(sigma/(sqrt2 tau) - t/(sqrt2 sigma)).

    Evaluated as exp(-t^2/2sigma^2) * erfcx(u) where u >= 0 so the large
    exponential prefactor never materialises, and directly where u < 0
    (the prefactor is then bounded by 1).
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        # ratios first: products with a subnormal sigma lose their precision
        z = t / sigma
        r = sigma / tau
        u = (r - z) / SQRT2
        out = np.empty(np.broadcast(t, u).shape)
        pos = u >= 0
        out[pos] = np.exp(-0.5 * z[pos] ** 2) * erfcx(u[pos])
        neg = ~pos
        out[neg] = np.exp(0.5 * r * r - t[neg] / tau) * erfc(u[neg])
    return out


def g2_ideal(tau, a, tau1):
    return 1.0 - a * np.exp(-np.abs(np.asarray(tau, float)) / tau1)


def g2_convolved(tau, a, tau1, sigma):
    """1 - a exp(-|tau|/tau1) convolved with a normalised Gaussian of width sigma."""
    t = np.abs(np.asarray(tau, dtype=float))
    if sigma == 0:
        return g2_ideal(t, a, tau1)
    dip = _exp_gauss_term(t, tau1, sigma) + _exp_gauss_term(-t, tau1, sigma)
    return 1.0 - 0.5 * a * dip


def exp_gauss(t, tau, sigma):
    """Unit-height one-sided exponential exp(-t/tau) H(t) convolved with a unit-area Gaussian."""
    t = np.asarray(t, dtype=float)
    if sigma == 0:
        with np.errstate(over="ignore"):
            return np.where(t >= 0, np.exp(-np.where(t >= 0, t, 0.0) / tau), 0.0)
    return 0.5 * _exp_gauss_term(t, tau, sigma)


def lifetime_model(t, amplitude, tau, t0, baseline, sigma):
    return amplitude * exp_gauss(np.asarray(t, float) - t0, tau, sigma) + baseline


def saturation_model(power, c_inf, p_sat):
    power = np.asarray(power, dtype=float)
    return c_inf * power / (power + p_sat)


def polarization_model(theta_deg, i0, phi_deg, theta0_deg):
    s_phi = np.sin(np.radians(phi_deg))
    s_th = np.sin(np.radians(np.asarray(theta_deg, float) - theta0_deg))
    return i0 * (1.0 - s_phi ** 2 * s_th ** 2)


def gaussian_model(x, amplitude, center, sigma, baseline):
    z = (np.asarray(x, float) - center) / sigma
    return amplitude * np.exp(-0.5 * z * z) + baseline


def spectrum_model(x, components, baseline):
    x = np.asarray(x, dtype=float)
    out = np.full(x.shape, float(baseline))
    for amp, center, width in components:
        out += gaussian_model(x, amp, center, width, 0.0)
    return out


@dataclass(frozen=True)
class G2Model:
    a: float
    tau1: float  # ns
    sigma_irf: float = 0.0  # ns

    def __post_init__(self):
        if not self.tau1 > 0:
            raise ValueError("tau1 must be positive")
        if not self.sigma_irf >= 0:
            raise ValueError("sigma_irf must be >= 0")

    def __call__(self, tau):
        return g2_convolved(tau, self.a, self.tau1, self.sigma_irf)

    @property
    def g2_zero(self) -> float:
        return float(self(0.0))


@dataclass(frozen=True)
class SaturationModel:
    c_inf: float  # cts/s
    p_sat: float  # uW

    def __post_init__(self):
        if not (self.c_inf > 0 and self.p_sat > 0):
            raise ValueError("C_inf and P_sat must be positive")

    def __call__(self, power):
        return saturation_model(power, self.c_inf, self.p_sat)


@dataclass(frozen=True)
class PolarizationModel:
    i0: float  # cts/s
    phi: float  # deg
    theta0: float = 0.0  # deg

    def __post_init__(self):
        if not self.i0 > 0:
            raise ValueError("I0 must be positive")
        if not 0 <= self.phi <= 90:
            raise ValueError("phi must lie in [0, 90] degrees")
        if not 0 <= self.theta0 < 180:
            raise ValueError("theta0 must lie in [0, 180) degrees")

    def __call__(self, theta_deg):
        return polarization_model(theta_deg, self.i0, self.phi, self.theta0)

    @property
    def contrast(self) -> float:
        """min/max intensity ratio, 1 - sin^2(phi)."""
        return float(np.cos(np.radians(self.phi)) ** 2)


@dataclass(frozen=True)
class SpectrumModel:
    components: tuple[tuple[float, float, float], ...]  # (amplitude, center nm, width nm)
    baseline: float = 0.0

    def __post_init__(self):
        for amp, _, width in self.components:
            if amp < 0 or width <= 0:
                raise ValueError("amplitudes must be >= 0 and widths > 0")

    def __call__(self, wavelength_nm):
        return spectrum_model(wavelength_nm, self.components, self.baseline)
