import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from emitterlab.errors import ConfigError, DomainError, NumericalError
from emitterlab.kinetics import (CW, DEFAULT_DET_EFF, EXCITED, GROUND, ISC, EmitterConfig,
                                 ExcitationContext, Pulsed, antibunching_time,
                                 build_rate_matrix, effective_lifetime, excitation_rate,
                                 reference_emitter, saturation_parameters, steady_state)

# frozen with mpmath at 30 digits
COS2_37_4 = 0.631094589320432384
COS2_53_6 = 0.352145974977976625
LIFETIME_MIXED = 0.249999901574841900  # 1 / (1/1.27 + 3.2126)
RATE_AT_100UW = 7449.85673352435530  # 26000 * 100 / 349


def _emitter(k_rad=1.0, k_nr=0.0, k_isc=0.0, k_ret=0.0, phi=0.0, sigma=1.0):
    return EmitterConfig(k_rad, {658: k_nr}, {658: sigma}, k_isc, k_ret, phi)


def test_green_absorbs_seven_times_less():
    cfg = reference_emitter()
    red = excitation_rate(cfg, ExcitationContext(658, 120.0))
    green = excitation_rate(cfg, ExcitationContext(515, 120.0))
    assert red / green == pytest.approx(7.0, rel=1e-14)


def test_untilted_molecule_ignores_polarization():
    cfg = reference_emitter(tilt_phi=0.0)
    rates = [excitation_rate(cfg, ExcitationContext(658, 50.0, th)) for th in range(0, 360, 7)]
    assert np.ptp(rates) == 0.0


@pytest.mark.parametrize("phi, expected", [(37.4, COS2_37_4), (53.6, COS2_53_6)])
def test_tilt_contrast(phi, expected):
    cfg = reference_emitter(tilt_phi=phi)
    r90 = excitation_rate(cfg, ExcitationContext(658, 10.0, 90.0))
    r0 = excitation_rate(cfg, ExcitationContext(658, 10.0, 0.0))
    assert r90 / r0 == pytest.approx(expected, rel=1e-13)


def test_unknown_wavelength_names_key():
    with pytest.raises(ConfigError, match="532"):
        excitation_rate(reference_emitter(), ExcitationContext(532, 10.0))


@pytest.mark.parametrize("k_rad, k_nr, expected", [
    (1 / 1.27, 0.0, 1.27),
    (1.0, 0.0, 1.0),
    (1 / 1.27, 3.2126, LIFETIME_MIXED),
])
def test_effective_lifetime(k_rad, k_nr, expected):
    assert effective_lifetime(k_rad, k_nr) == pytest.approx(expected, rel=1e-14)


def test_effective_lifetime_zero_rates():
    with pytest.raises(DomainError):
        effective_lifetime(0.0, 0.0)


def test_green_nonradiative_rate_gives_quarter_ns():
    cfg = EmitterConfig(1 / 1.27, {515: 1 / 0.25 - 1 / 1.27}, {515: 1.0})
    assert effective_lifetime(cfg.k_rad, cfg.k_nr(515)) == pytest.approx(0.25, rel=1e-14)
    assert cfg.k_nr(515) == pytest.approx(3.2125984251968504, rel=1e-14)


def test_rate_matrix_layout():
    cfg = _emitter(k_rad=0.7874, k_isc=0.0)
    ctx = ExcitationContext(658, 0.5 / cfg.sigma_rel(658), alpha=1.0)
    m = build_rate_matrix(cfg, ctx)
    assert m.rate("excited", "ground") == pytest.approx(0.7874)
    assert m.rate("ground", "excited") == pytest.approx(0.5)
    assert np.all(m.matrix[ISC] == 0) and np.all(m.matrix[:, ISC] == 0)
    np.testing.assert_allclose(m.matrix.sum(axis=0), 0.0, atol=1e-15)


def test_rate_matrix_rejects_pulsed():
    with pytest.raises(ConfigError):
        build_rate_matrix(_emitter(), ExcitationContext(658, 1.0, mode=Pulsed()))


def test_dark_emitter_sits_in_ground_state():
    m = build_rate_matrix(reference_emitter(), ExcitationContext(658, 0.0))
    ss = steady_state(m, 1.0)
    assert ss.populations.tolist() == [1.0, 0.0, 0.0]
    assert ss.detected_rate == 0.0
    # only decay entries are populated
    assert m.rate("ground", "excited") == 0.0 and m.rate("excited", "ground") > 0


def test_half_saturation_midpoint():
    cfg = reference_emitter()
    c_inf, p_sat = saturation_parameters(cfg, ExcitationContext(658, 1.0))
    ss = steady_state(build_rate_matrix(cfg, ExcitationContext(658, p_sat)), cfg.k_rad)
    assert ss.p_excited == pytest.approx(0.5, rel=1e-12)
    assert ss.detected_rate == pytest.approx(c_inf / 2, rel=1e-12)


def test_reference_calibration():
    cfg = reference_emitter()
    c_inf, p_sat = saturation_parameters(cfg, ExcitationContext(658, 300.0))
    assert c_inf == pytest.approx(26000.0, rel=1e-12)
    assert p_sat == pytest.approx(249.0, rel=1e-12)
    assert antibunching_time(cfg, ExcitationContext(658, 300.0)) == pytest.approx(1.27, rel=1e-12)
    ss = steady_state(build_rate_matrix(cfg, ExcitationContext(658, 100.0)), cfg.k_rad)
    assert ss.detected_rate == pytest.approx(RATE_AT_100UW, rel=1e-12)


def test_absorbing_shelf_is_reported():
    cfg = _emitter(k_isc=0.1, k_ret=0.0)
    m = build_rate_matrix(cfg, ExcitationContext(658, 1.0, alpha=1.0))
    with pytest.raises(NumericalError, match="isc"):
        steady_state(m, cfg.k_rad)


def test_shelving_matches_matrix_exponential():
    # independent route: propagate the master equation to long times
    cfg = _emitter(k_rad=0.6, k_nr=0.2, k_isc=0.05, k_ret=0.01)
    m = build_rate_matrix(cfg, ExcitationContext(658, 0.9, alpha=1.0))
    p_inf = expm(m.matrix * 5e4) @ np.array([1.0, 0.0, 0.0])
    ss = steady_state(m, cfg.k_rad, det_eff=1e-3)
    np.testing.assert_allclose(ss.populations, p_inf, rtol=1e-9)
    c_inf, p_sat = saturation_parameters(cfg, ExcitationContext(658, 1.0, alpha=1.0), 1e-3)
    assert ss.detected_rate == pytest.approx(c_inf * 0.9 / (0.9 + p_sat), rel=1e-12)


def test_config_validation():
    with pytest.raises(ConfigError):
        EmitterConfig(0.0, {658: 0}, {658: 1})
    with pytest.raises(ConfigError):
        EmitterConfig(1.0, {658: -1}, {658: 1})
    with pytest.raises(ConfigError):
        EmitterConfig(1.0, {658: 0}, {658: 1}, tilt_phi=91.0)
    with pytest.raises(ConfigError):
        ExcitationContext(658, -1.0)
    with pytest.raises(ConfigError):
        Pulsed(period_ns=0.04, pulse_width_ps=50)


angles = st.floats(-720, 720, allow_nan=False)
tilts = st.floats(0, 90)


@given(phi=tilts, theta=angles)
def test_excitation_is_180_periodic_and_peaks_at_zero(phi, theta):
    cfg = reference_emitter(tilt_phi=phi)
    r = excitation_rate(cfg, ExcitationContext(658, 40.0, theta))
    r_shift = excitation_rate(cfg, ExcitationContext(658, 40.0, theta + 180.0))
    r0 = excitation_rate(cfg, ExcitationContext(658, 40.0, 0.0))
    assert r == pytest.approx(r_shift, rel=1e-9, abs=1e-15)
    assert r <= r0 * (1 + 1e-12)
    assert r >= 0


@given(k_rad=st.floats(1e-3, 1e3), k_nr=st.floats(0, 1e3), dk=st.floats(1e-6, 1e3))
def test_lifetime_decreases_with_nonradiative_rate(k_rad, k_nr, dk):
    assert effective_lifetime(k_rad, k_nr + dk) < effective_lifetime(k_rad, k_nr)


@given(k_rad=st.floats(1e-3, 10), k_nr=st.floats(0, 10), k_isc=st.floats(0, 1),
       k_ret=st.floats(1e-4, 1), power=st.floats(0, 1e4), phi=tilts, theta=angles)
def test_populations_are_normalised(k_rad, k_nr, k_isc, k_ret, power, phi, theta):
    cfg = _emitter(k_rad, k_nr, k_isc, k_ret, phi)
    ss = steady_state(build_rate_matrix(cfg, ExcitationContext(658, power, theta)), k_rad)
    assert abs(ss.populations.sum() - 1.0) < 1e-12
    assert np.all(ss.populations >= 0)


@given(k_rad=st.floats(1e-2, 10), k_nr=st.floats(0, 10), phi=tilts, theta=angles)
def test_two_level_rate_is_exactly_saturation_law(k_rad, k_nr, phi, theta):
    cfg = _emitter(k_rad, k_nr, phi=phi)
    base = ExcitationContext(658, 1.0, theta)
    c_inf, p_sat = saturation_parameters(cfg, base, DEFAULT_DET_EFF)
    if not math.isfinite(p_sat):
        return
    for p in np.geomspace(1e-2, 1e4, 15):
        ss = steady_state(build_rate_matrix(cfg, ExcitationContext(658, p, theta)), k_rad)
        assert ss.detected_rate == pytest.approx(c_inf * p / (p + p_sat), rel=1e-9)


def test_level_indices():
    assert (GROUND, EXCITED, ISC) == (0, 1, 2)
    assert isinstance(ExcitationContext(658, 1.0).mode, CW)
