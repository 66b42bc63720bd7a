"""Model-specific fitting routines built on :func:`least_squares`.

Each routine derives its starting point from the data with a cheap
heuristic (noted per function) and runs a single local optimisation.
"""

from __future__ import annotations

import math

import numpy as np

from ..correlator import Histogram
from ..errors import DomainError
from .models import (exp_gauss, g2_convolved, gaussian_model, polarization_model,
                     saturation_model, spectrum_model)
from .optimizer import FitResult, least_squares

SINGLE_EMITTER_THRESHOLD = 0.5
NS_PER_S = 1e9


def _poisson_weights(counts):
    return 1.0 / np.maximum(np.asarray(counts, dtype=float), 1.0)


def _smooth(y, width):
    width = max(int(width), 1)
    if width == 1:
        return np.asarray(y, float)
    kernel = np.ones(width) / width
    return np.convolve(y, kernel, mode="same")


def fit_g2(h: Histogram, sigma_irf: float | None = 0.41) -> FitResult:
    """Fit the IRF-convolved antibunching dip to a normalised g2 histogram.

    ``sigma_irf`` in ns is held fixed; pass ``None`` to fit it as well.
    The start value of tau1 is the lag at which the smoothed, symmetrised dip
    has recovered to 1 - a/e.
    """
    if not h.normalized:
        raise DomainError("fit_g2 expects a normalized histogram")
    tau = h.centers * NS_PER_S
    y = np.asarray(h.counts, dtype=float)
    bin_ns = h.bin_width * NS_PER_S

    order = np.argsort(np.abs(tau), kind="stable")
    abs_tau = np.abs(tau)[order]
    sm = _smooth(y[order], max(5, len(y) // 60))
    a0 = float(np.clip(1.0 - sm[: max(4, len(y) // 60)].mean(), 0.05, 1.0))
    target = 1.0 - a0 / math.e
    above = np.nonzero(sm >= target)[0]
    tau1_0 = float(abs_tau[above[0]]) if above.size else 1.0
    tau1_0 = float(np.clip(tau1_0, max(bin_ns, 0.05), 0.25 * abs_tau.max()))

    fit_sigma = sigma_irf is None
    if fit_sigma:
        p0 = [a0, tau1_0, max(2 * bin_ns, 0.3)]
        model = lambda t, p: g2_convolved(t, p[0], p[1], p[2])  # noqa: E731
        bounds = ([0.0, 1e-3, 0.0], [1.0, 1e3, 10.0])
        names, units = ("a", "tau1", "sigma_irf"), ("", "ns", "ns")
    else:
        if sigma_irf < 0:
            raise DomainError("sigma_irf must be >= 0")
        p0 = [a0, tau1_0]
        model = lambda t, p: g2_convolved(t, p[0], p[1], sigma_irf)  # noqa: E731
        bounds = ([0.0, 1e-3], [1.0, 1e3])
        names, units = ("a", "tau1"), ("", "ns")
    res = least_squares(model, p0, tau, y, bounds=bounds, names=names, units=units,
                        model_id="g2_convolved")
    sig = res["sigma_irf"] if fit_sigma else sigma_irf
    g0 = float(g2_convolved(0.0, res["a"], res["tau1"], sig))
    res.extras["g2_zero"] = g0
    res.extras["sigma_irf_ns"] = float(sig)
    res.extras["single_emitter"] = bool(g0 < SINGLE_EMITTER_THRESHOLD)
    res.extras["verdict"] = "single emitter" if g0 < SINGLE_EMITTER_THRESHOLD \
        else "not a single emitter"
    return res


def fit_lifetime(h: Histogram, irf_sigma: float = 0.41) -> FitResult:
    """Fit amplitude * (exp decay conv Gaussian IRF)(t - t0) + baseline.

    Poisson weights.  Starts: baseline from the 10th percentile of the
    counts, t0 one IRF width before the peak, tau from the excess of the
    count-weighted mean delay over the peak position.
    """
    t = h.centers * NS_PER_S
    y = np.asarray(h.counts, dtype=float)
    if y.sum() <= 0:
        raise DomainError("no photons binned")
    if irf_sigma < 0:
        raise DomainError("irf_sigma must be >= 0")
    bin_ns = h.bin_width * NS_PER_S
    b0 = float(np.percentile(y, 10))
    excess = np.clip(y - b0, 0, None)
    ipk = int(np.argmax(_smooth(y, 3)))
    t_pk = float(t[ipk])
    mean_t = float((excess * t).sum() / max(excess.sum(), 1e-300))
    tau0 = float(np.clip(mean_t - t_pk + 0.5 * irf_sigma, max(bin_ns, 0.02), 0.5 * np.ptp(t)))
    t00 = t_pk - 0.5 * irf_sigma if irf_sigma > 0 else t_pk - 0.5 * bin_ns
    peak_shape = float(exp_gauss(t_pk - t00, tau0, irf_sigma))
    amp0 = max(float(y[ipk] - b0), 1.0) / max(peak_shape, 1e-3)

    def model(tt, p):
        return p[0] * exp_gauss(tt - p[2], p[1], irf_sigma) + p[3]

    lo = [0.0, 1e-4, float(t[0]) - 5 * irf_sigma - bin_ns, 0.0]
    hi = [np.inf, 10 * np.ptp(t) + 1.0, float(t[-1]), np.inf]
    p0 = np.clip([amp0, tau0, t00, b0], lo, hi)
    res = least_squares(model, p0, t, y, weights=_poisson_weights(y), bounds=(lo, hi),
                        names=("amplitude", "tau", "t0", "baseline"),
                        units=("cts", "ns", "ns", "cts"), model_id="lifetime_exp_gauss")
    res.extras["irf_sigma_ns"] = float(irf_sigma)
    if np.ptp(t) < 5 * res["tau"]:
        res.warnings.append("histogram spans less than 5 lifetimes")
    return res


def fit_saturation(power, rate) -> FitResult:
    """Fit C(P) = C_inf P / (P + P_sat).

    Starts from the double-reciprocal line 1/C = 1/C_inf + (P_sat/C_inf)/P.
    """
    p = np.asarray(power, dtype=float)
    c = np.asarray(rate, dtype=float)
    if p.shape != c.shape or p.ndim != 1:
        raise ValueError("power and rate must be 1-D arrays of equal length")
    n_distinct = len(np.unique(p))
    if n_distinct < 3:
        raise DomainError(
            f"rank-deficient saturation data: {n_distinct} distinct power(s), need >= 3")
    ok = (p > 0) & (c > 0)
    c_inf0, p_sat0 = 2.0 * c.max(), float(np.median(p))
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(1.0 / p[ok], 1.0 / c[ok], 1)
        if icpt > 0 and slope > 0:
            c_inf0, p_sat0 = 1.0 / icpt, slope / icpt
    c_inf0 = max(c_inf0, 1e-12)
    p_sat0 = max(p_sat0, 1e-12)
    res = least_squares(lambda x, q: saturation_model(x, q[0], q[1]), [c_inf0, p_sat0], p, c,
                        bounds=([0.0, 0.0], [np.inf, np.inf]), names=("c_inf", "p_sat"),
                        units=("cts/s", "uW"), model_id="saturation")
    res.extras["rate_at_p_sat"] = float(saturation_model(res["p_sat"], res["c_inf"], res["p_sat"]))
    return res


def fit_polarization(theta_deg, rate) -> FitResult:
    """Fit I(theta) = I0 (1 - sin^2(phi) sin^2(theta - theta0)).

    Internally the contrast s = sin^2(phi) is fitted, bounded to [0, 1].
    The start values are exact for noiseless data: the model equals
    I0 (1 - s/2) + (I0 s/2) cos 2(theta - theta0), a linear fit in
    {1, cos 2theta, sin 2theta}.
    """
    th = np.asarray(theta_deg, dtype=float)
    y = np.asarray(rate, dtype=float)
    if th.shape != y.shape or th.ndim != 1:
        raise ValueError("angles and rates must be 1-D arrays of equal length")
    if len(np.unique(np.mod(th, 180.0))) < 3 or len(th) < 4:
        raise DomainError("need >= 4 angles covering >= 3 distinct polarizations")
    rad = np.radians(th)
    basis = np.column_stack([np.ones_like(rad), np.cos(2 * rad), np.sin(2 * rad)])
    c0, cc, cs = np.linalg.lstsq(basis, y, rcond=None)[0]
    amp = math.hypot(cc, cs)
    theta00 = 0.5 * math.degrees(math.atan2(cs, cc))
    i00 = max(c0 + amp, 1e-12)
    s0 = float(np.clip(2 * amp / i00, 0.0, 1.0))

    def model(x, q):
        return q[0] * (1.0 - q[1] * np.sin(np.radians(x - q[2])) ** 2)

    res = least_squares(model, [i00, s0, theta00], th, y,
                        bounds=([0.0, 0.0, -np.inf], [np.inf, 1.0, np.inf]),
                        names=("i0", "contrast", "theta0"), units=("cts/s", "", "deg"),
                        model_id="polarization")
    s, s_err = res["contrast"], res.error("contrast")
    phi = math.degrees(math.asin(math.sqrt(s)))
    if np.isfinite(s_err):
        hi = math.degrees(math.asin(math.sqrt(min(1.0, s + s_err))))
        lo = math.degrees(math.asin(math.sqrt(max(0.0, s - s_err))))
        phi_err = 0.5 * (hi - lo)
    else:
        phi_err = 90.0
    theta0 = float(np.mod(res["theta0"], 180.0))
    if theta0 >= 180.0:
        theta0 = 0.0
    res.names = ("i0", "phi", "theta0")
    res.units = ("cts/s", "deg", "deg")
    res.values = np.array([res["i0"], phi, theta0])
    res.errors = np.array([res.errors[0], phi_err, res.errors[2]])
    res.extras["contrast"] = float(s)
    res.extras["min_max_ratio"] = float(1.0 - s)
    # the fitted modulation amplitude is Rayleigh distributed under a flat trace:
    # 3 sigma keeps the false "modulated" rate near exp(-4.5), about 1 %
    low = s <= 3 * s_err if np.isfinite(s_err) else True
    res.extras["low_contrast"] = bool(low)
    if low:
        res.warnings.append("low contrast: phi not distinguishable from 0")
    return res


def fit_gaussian(h: Histogram) -> FitResult:
    """Gaussian peak plus constant baseline, e.g. for an IRF histogram.

    Works in ns for time histograms.  The width is bounded below by
    bin_width/sqrt(12), the rms of a single occupied bin; hitting that
    bound is flagged.  Starts from the count-weighted moments.
    """
    scale = 1.0 if h.kind == "spectrum" else NS_PER_S
    x = h.centers * scale
    y = np.asarray(h.counts, dtype=float)
    bw = h.bin_width * scale
    if y.size < 1 or y.max() <= 0:
        raise DomainError("empty histogram")
    b0 = float(min(np.percentile(y, 10), y.min())) if y.size > 4 else 0.0
    ex = np.clip(y - b0, 0, None)
    c0 = float((ex * x).sum() / ex.sum())
    s_min = bw / math.sqrt(12.0)
    s0 = max(float(np.sqrt((ex * (x - c0) ** 2).sum() / ex.sum())), s_min)
    amp0 = float(y.max() - b0)
    lo = [0.0, float(x[0]) - bw, s_min, 0.0]
    hi = [np.inf, float(x[-1]) + bw, np.inf, np.inf]
    weights = None if h.normalized else _poisson_weights(y)
    res = least_squares(lambda xx, p: gaussian_model(xx, p[0], p[1], p[2], p[3]),
                        np.clip([amp0, c0, s0, b0], lo, hi), x, y, weights=weights,
                        bounds=(lo, hi), names=("amplitude", "center", "sigma", "baseline"),
                        units=("cts", "nm" if scale == 1.0 else "ns", "nm" if scale == 1.0
                               else "ns", "cts"), model_id="gaussian")
    if res["sigma"] <= s_min * (1 + 1e-9):
        res.extras["width_at_bin_limit"] = True
        res.warnings.append("peak narrower than one bin; sigma held at bin_width/sqrt(12)")
    return res


def _greedy_init(x, y, n, b0, width0):
    resid = y - b0
    comps = []
    for _ in range(n):
        i = int(np.argmax(resid))
        amp = max(float(resid[i]), 1e-12)
        comps.append([amp, float(x[i]), width0])
        resid = resid - gaussian_model(x, amp, x[i], width0, 0.0)
    return comps


def _quantile_init(x, y, n, b0, width0):
    w = np.clip(y - b0, 0, None)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    centers = [float(np.interp((k + 0.5) / n, cdf, x)) for k in range(n)]
    amps = [max(float(np.interp(c, x, y) - b0), 1e-12) for c in centers]
    return [[a, c, width0] for a, c in zip(amps, centers)]


def fit_spectrum(spectrum, intensity=None, n_components: int = 2) -> FitResult:
    """Sum of ``n_components`` Gaussians plus a constant baseline.

    ``spectrum`` is either a Histogram over nm or an array of wavelengths
    (then ``intensity`` is required).  Two starts are tried, greedy peak
    picking on the residual and centres at equal-area quantiles; the lower
    residual wins.  Components are returned sorted by centre.
    """
    if isinstance(spectrum, Histogram):
        x = spectrum.centers
        y = np.asarray(spectrum.counts, dtype=float)
    else:
        x = np.asarray(spectrum, dtype=float)
        y = np.asarray(intensity, dtype=float)
    if not 1 <= n_components <= 4:
        raise DomainError("n_components must be between 1 and 4")
    if np.any(np.diff(x) <= 0):
        raise DomainError("spectrum wavelengths must be strictly increasing")
    n_par = 3 * n_components + 1
    warnings = []
    if x.size <= n_par:
        warnings.append(f"rank-deficient: {x.size} samples for {n_par} parameters")
    span = float(x[-1] - x[0])
    dx = float(np.median(np.diff(x))) if x.size > 1 else 1.0
    b0 = float(np.percentile(y, 5))
    above = x[y - b0 >= 0.5 * (y.max() - b0)]
    fwhm = float(above[-1] - above[0]) if above.size > 1 else 4 * dx
    width0 = max(fwhm / (2.3548 * n_components), dx)
    lo = [0.0, float(x[0]), dx / 4] * n_components + [-np.inf]
    hi = [np.inf, float(x[-1]), max(span, dx)] * n_components + [np.inf]

    def model(xx, p):
        comps = p[:-1].reshape(-1, 3)
        return spectrum_model(xx, comps, p[-1])

    best = None
    for init in (_greedy_init, _quantile_init):
        comps = init(x, y, n_components, b0, width0)
        p0 = np.clip(np.concatenate([np.ravel(comps), [b0]]), lo, hi)
        res = least_squares(model, p0, x, y, bounds=(lo, hi), model_id="spectrum")
        if best is None or res.rss < best.rss:
            best = res
    comps = best.values[:-1].reshape(-1, 3)
    errs = best.errors[:-1].reshape(-1, 3)
    order = np.argsort(comps[:, 1], kind="stable")
    comps, errs = comps[order], errs[order]
    names, units = [], []
    for k in range(n_components):
        names += [f"amplitude_{k}", f"center_{k}", f"width_{k}"]
        units += ["", "nm", "nm"]
    best.names = tuple(names) + ("baseline",)
    best.units = tuple(units) + ("",)
    best.values = np.concatenate([comps.ravel(), best.values[-1:]])
    best.errors = np.concatenate([errs.ravel(), best.errors[-1:]])
    best.warnings = warnings + best.warnings
    amp_max = comps[:, 0].max() if n_components else 0.0
    weak = [k for k in range(n_components) if comps[k, 0] < 1e-2 * amp_max]
    if weak:
        best.warnings.append(
            f"component(s) {weak} have negligible amplitude; too many components for the data")
    best.extras["n_components"] = n_components
    return best
