"""Regenerate the data behind every analysis panel as CSV plus a text summary.

Runs the simulated measurement chain for antibunching, saturation (red and
green), pulsed lifetime, polarization (two tilts and a flat control) and a
two-Gaussian spectrum.  No plotting; the CSVs load into any plotting tool.

    python3 scripts/reproduce_figures.py --out figures/ [--quick]
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from emitterlab.correlator import g2_from_channels, tcspc_histogram
from emitterlab.fitting import (fit_g2, fit_lifetime, fit_polarization, fit_saturation,
                                fit_spectrum, spectrum_model)
from emitterlab.io import load_config, write_histogram_csv, write_points_csv
from emitterlab.pipeline import (HBT_CHANNELS, PHOTON_CHANNEL, SYNC_CHANNEL, acquire,
                                 polarization_sweep, saturation_sweep)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def antibunching(out, seed, duration, boost):
    cfg = load_config(CONFIGS / "reference.cfg")
    if boost != 1:
        cfg = replace(cfg, collection_efficiency=boost * cfg.collection_efficiency)
    stream = acquire(cfg, duration, seed)
    ch1, ch2 = (stream.channel(c) for c in HBT_CHANNELS)
    _, g = g2_from_channels(ch1, ch2, stream.duration, cfg.bin_width, cfg.window)
    write_histogram_csv(g, out / f"g2_reference_x{boost:g}.csv")
    res = fit_g2(g, 0.41)
    return (f"g2: {duration:g} s, collection x{boost:g}, tau1 = {res['tau1']:.3f} ns, "
            f"g2(0) = {res.extras['g2_zero']:.3f} ({res.extras['verdict']})")


def saturation(out, seed, dwell):
    powers = np.geomspace(25, 1000, 8)
    lines = []
    for name in ("reference", "green"):
        cfg = load_config(CONFIGS / f"{name}.cfg")
        sweep = saturation_sweep(cfg, powers, dwell, seed)
        write_points_csv({"power_uw": sweep.x, "rate_cps": sweep.rate},
                         out / f"saturation_{name}.csv")
        res = fit_saturation(sweep.x, sweep.rate)
        lines.append(f"saturation {name}: C_inf = {res['c_inf']:.0f} cts/s, "
                     f"P_sat = {res['p_sat']:.0f} uW")
    return "\n".join(lines)


def lifetime(out, seed, duration):
    lines = []
    for name in ("lifetime_515", "lifetime_127"):
        cfg = load_config(CONFIGS / f"{name}.cfg")
        stream = acquire(cfg, duration, seed)
        period = cfg.excitation.mode.period_ns * 1e-9
        h = tcspc_histogram(stream.channel(PHOTON_CHANNEL), stream.channel(SYNC_CHANNEL),
                            period, 64e-12)
        write_histogram_csv(h, out / f"{name}.csv")
        res = fit_lifetime(h, 0.41)
        lines.append(f"{name}: tau = {res['tau']:.3f} ns from {int(h.counts.sum())} photons")
    return "\n".join(lines)


def polarization(out, seed, dwell):
    angles = np.arange(24) * 15.0
    lines = []
    for name in ("polarization_e1", "polarization_e2", "polarization_flat"):
        cfg = load_config(CONFIGS / f"{name}.cfg")
        sweep = polarization_sweep(cfg, angles, dwell, seed)
        write_points_csv({"angle_deg": sweep.x, "rate_cps": sweep.rate}, out / f"{name}.csv")
        res = fit_polarization(sweep.x, sweep.rate)
        flag = " (low contrast)" if res.extras["low_contrast"] else ""
        lines.append(f"{name}: phi = {res['phi']:.1f} deg, min/max = "
                     f"{res.extras['min_max_ratio']:.3f}{flag}")
    return "\n".join(lines)


def spectrum(out, seed):
    # synthetic two-band emission, 0.5 nm pixels, shot noise
    wl = np.arange(780.0, 1000.0, 0.5)
    truth = spectrum_model(wl, [(400.0, 860.0, 12.0), (250.0, 900.0, 18.0)], 20.0)
    counts = np.random.default_rng(seed).poisson(truth).astype(float)
    write_points_csv({"wavelength_nm": wl, "intensity": counts}, out / "spectrum.csv")
    res = fit_spectrum(wl, counts, 2)
    return (f"spectrum: centres {res['center_0']:.1f} and {res['center_1']:.1f} nm, "
            f"widths {res['width_0']:.1f} and {res['width_1']:.1f} nm")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("figures"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true", help="short dwell times for a smoke run")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    dwell = 1.0 if args.quick else 20.0
    t0 = time.perf_counter()
    summary = [
        antibunching(args.out, args.seed, 5.0 if args.quick else 60.0, 1),
        antibunching(args.out, args.seed, 5.0 if args.quick else 20.0, 30),
        saturation(args.out, args.seed, dwell),
        lifetime(args.out, args.seed, 0.02 if args.quick else 0.3),
        polarization(args.out, args.seed, dwell),
        spectrum(args.out, args.seed),
    ]
    text = "\n".join(summary) + f"\nelapsed: {time.perf_counter() - t0:.1f} s\n"
    (args.out / "summary.txt").write_text(text)
    print(text, end="")


if __name__ == "__main__":
    main()
