"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 format or configuration error,
3 numerical or domain failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .correlator import g2_from_channels, tcspc_histogram
from .errors import EmitterLabError, FormatError, UsageError
from .fitting import (fit_g2, fit_gaussian, fit_lifetime, fit_polarization, fit_saturation,
                      fit_spectrum)
from .io import (POINT_SCHEMAS, load_config, read_histogram_csv, read_points_csv,
                 read_timestamps, write_histogram_csv, write_points_csv, write_timestamps)
from .pipeline import (HBT_CHANNELS, PHOTON_CHANNEL, SYNC_CHANNEL, acquire, polarization_sweep,
                       saturation_sweep)

DEFAULT_ANGLES = tuple(float(a) for a in range(0, 360, 15))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(kind):
    def conv(text):
        try:
            val = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not val > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val
    return conv


def _non_negative_int(text):
    try:
        val = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if val < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return val


def _float_list(text):
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") \
            from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _irf(text):
    if text.lower() == "free":
        return None
    try:
        val = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a width in ns or 'free', got {text!r}") \
            from None
    if not val >= 0:
        raise argparse.ArgumentTypeError("IRF sigma must be >= 0")
    return val


def _emit(text: str, report_path):
    sys.stdout.write(text)
    if report_path:
        Path(report_path).write_text(text)


def _default_out(path, suffix):
    # next to timestamp inputs; in the working directory for configs
    p = Path(path)
    return p.with_name(p.stem + suffix) if p.suffix != ".cfg" else Path(p.stem + suffix)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    stream = acquire(cfg, args.duration, args.seed)
    write_timestamps(stream, args.out)
    names = ("photons", "sync") if cfg.excitation.pulsed else ("arm1", "arm2")
    lines = [f"config: {args.config}",
             f"config_hash: {stream.config_hash.hex()}",
             f"seed: {args.seed}",
             f"duration_s: {stream.duration:.9g}",
             f"output: {args.out}"]
    for i, name in enumerate(names):
        lines.append(f"channel {i} ({name}): {stream.counts[i]} events, "
                     f"{stream.rate(i):.6g} cts/s")
    _emit("\n".join(lines) + "\n", args.report)
    return 0


def cmd_g2(args) -> int:
    stream = read_timestamps(args.input)
    if stream.n_channels < 2:
        raise UsageError(f"{args.input}: g2 needs a two-channel file, found "
                         f"{stream.n_channels} channel(s)")
    ch1, ch2 = (stream.channel(c) for c in HBT_CHANNELS)
    if len(ch1) == 0 or len(ch2) == 0:
        raise UsageError(f"{args.input}: one of the correlation channels is empty")
    omega = args.bin * 1e-12
    raw, norm = g2_from_channels(ch1, ch2, stream.duration, omega, args.window * 1e-9)
    out = args.out or _default_out(args.input, ".g2.csv")
    write_histogram_csv(norm, out)
    lines = [f"input: {args.input}",
             f"config_hash: {stream.config_hash.hex()}",
             f"seed: {stream.seed}",
             f"output: {out}",
             f"T_s: {stream.duration:.9g}",
             f"N1_cps: {norm.N1:.9g}",
             f"N2_cps: {norm.N2:.9g}",
             f"bin_s: {omega:.9g}",
             f"coincidences: {int(raw.counts.sum())}"]
    text = "\n".join(lines) + "\n"
    if args.fit:
        res = fit_g2(norm, args.irf_sigma)
        text += res.report()
        text += f"verdict: {res.extras['verdict']} (g2(0) = {res.extras['g2_zero']:.4f})\n"
    _emit(text, args.report)
    return 0


def cmd_lifetime(args) -> int:
    stream = read_timestamps(args.input)
    if stream.n_channels < 2 or stream.counts[SYNC_CHANNEL] < 2:
        raise UsageError(f"{args.input}: lifetime needs a photon channel and a sync channel "
                         f"(channel {SYNC_CHANNEL}) with at least two markers")
    photons = stream.channel(PHOTON_CHANNEL)
    syncs = stream.channel(SYNC_CHANNEL)
    period = float(np.median(np.diff(syncs))) * 1e-12
    h = tcspc_histogram(photons, syncs, period, args.bin * 1e-12)
    if int(h.counts.sum()) == 0:
        raise EmitterLabError("no photons binned")
    out = args.out or _default_out(args.input, ".tcspc.csv")
    write_histogram_csv(h, out)
    res = fit_lifetime(h, args.irf_sigma)
    lines = [f"input: {args.input}",
             f"config_hash: {stream.config_hash.hex()}",
             f"seed: {stream.seed}",
             f"output: {out}",
             f"sync_period_s: {period:.9g}",
             f"photons_binned: {int(h.counts.sum())}",
             f"discarded: {h.discarded}"]
    _emit("\n".join(lines) + "\n" + res.report(), args.report)
    return 0


def _sweep_report(args, cfg, sweep, res, xname, out):
    lines = [f"config: {args.config}",
             f"config_hash: {cfg.digest.hex()}",
             f"seed: {args.seed}",
             f"dwell_s: {args.dwell:.9g}",
             f"points: {len(sweep.x)} ({xname})",
             f"background_cps: {sweep.background:.9g}",
             f"output: {out}"]
    return "\n".join(lines) + "\n" + res.report()


def cmd_saturation(args) -> int:
    cfg = load_config(args.config)
    if len(args.powers) < 3:
        raise UsageError("--powers needs at least 3 values")
    sweep = saturation_sweep(cfg, args.powers, args.dwell, args.seed)
    out = args.out or _default_out(args.config, ".saturation.csv")
    write_points_csv({"power_uw": sweep.x, "rate_cps": sweep.rate, "raw_rate_cps": sweep.raw},
                     out, {"background_cps": format(sweep.background, ".17g"),
                           "dwell_s": format(args.dwell, ".17g"), "seed": args.seed})
    res = fit_saturation(sweep.x, sweep.rate)
    _emit(_sweep_report(args, cfg, sweep, res, "power_uw", out), args.report)
    return 0


def cmd_polarization(args) -> int:
    cfg = load_config(args.config)
    if len(args.angles) < 4:
        raise UsageError("--angles needs at least 4 values")
    sweep = polarization_sweep(cfg, args.angles, args.dwell, args.seed)
    out = args.out or _default_out(args.config, ".polarization.csv")
    write_points_csv({"angle_deg": sweep.x, "rate_cps": sweep.rate, "raw_rate_cps": sweep.raw},
                     out, {"background_cps": format(sweep.background, ".17g"),
                           "dwell_s": format(args.dwell, ".17g"), "seed": args.seed})
    res = fit_polarization(sweep.x, sweep.rate)
    _emit(_sweep_report(args, cfg, sweep, res, "angle_deg", out), args.report)
    return 0


def cmd_fit(args) -> int:
    kind = args.kind
    if kind in ("g2", "lifetime", "gaussian") or (kind == "spectrum" and _is_histogram(args.input)):
        h = read_histogram_csv(args.input)
        if kind == "g2":
            if not h.normalized:
                raise FormatError(f"{args.input}: g2 fits need a normalized histogram")
            res = fit_g2(h, args.irf_sigma)
        elif kind == "lifetime":
            res = fit_lifetime(h, 0.41 if args.irf_sigma is None else args.irf_sigma)
        elif kind == "gaussian":
            res = fit_gaussian(h)
        else:
            res = fit_spectrum(h, n_components=args.components)
    else:
        cols = POINT_SCHEMAS[kind]
        data = read_points_csv(args.input, cols)
        x, y = data[cols[0]], data[cols[1]]
        if kind == "saturation":
            res = fit_saturation(x, y)
        elif kind == "polarization":
            res = fit_polarization(x, y)
        else:
            res = fit_spectrum(x, y, n_components=args.components)
    text = f"input: {args.input}\n" + res.report()
    if kind == "g2":
        text += f"verdict: {res.extras['verdict']} (g2(0) = {res.extras['g2_zero']:.4f})\n"
    _emit(text, args.report)
    return 0


def _is_histogram(path) -> bool:
    try:
        with open(path) as fh:
            head = fh.read(4096)
    except OSError as exc:
        raise FormatError(str(exc)) from None
    return "# kind=" in head


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="emitterlab", description="Single-emitter photon statistics workbench.")
    p.add_argument("--version", action="version", version=f"emitterlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--report", help="also write the report text to this file")

    s = sub.add_parser("simulate", help="simulate a timestamp file from a config")
    s.add_argument("config")
    s.add_argument("--duration", type=_positive(float), default=60.0, help="seconds")
    s.add_argument("--seed", type=_non_negative_int, default=0)
    s.add_argument("--out", required=True)
    common(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("g2", help="coincidence histogram, normalization and dip fit")
    s.add_argument("input")
    s.add_argument("--bin", type=_positive(float), default=73.3, help="bin width, ps")
    s.add_argument("--window", type=_positive(float), default=20.0, help="half range, ns")
    s.add_argument("--fit", action="store_true")
    s.add_argument("--irf-sigma", type=_irf, default=0.41, help="ns, or 'free'")
    s.add_argument("--out", help="histogram CSV (default: <input>.g2.csv)")
    common(s)
    s.set_defaults(func=cmd_g2)

    s = sub.add_parser("lifetime", help="TCSPC histogram and lifetime fit")
    s.add_argument("input")
    s.add_argument("--bin", type=_positive(float), default=64.0, help="bin width, ps")
    s.add_argument("--irf-sigma", type=_irf, default=0.41, help="ns")
    s.add_argument("--out", help="histogram CSV (default: <input>.tcspc.csv)")
    common(s)
    s.set_defaults(func=cmd_lifetime)

    s = sub.add_parser("saturation", help="power sweep and saturation fit")
    s.add_argument("config")
    s.add_argument("--powers", type=_float_list, required=True, help="comma-separated uW")
    s.add_argument("--dwell", type=_positive(float), default=20.0, help="seconds per point")
    s.add_argument("--seed", type=_non_negative_int, default=0)
    s.add_argument("--out")
    common(s)
    s.set_defaults(func=cmd_saturation)

    s = sub.add_parser("polarization", help="polarization sweep and dipole fit")
    s.add_argument("config")
    s.add_argument("--angles", type=_float_list, default=list(DEFAULT_ANGLES),
                   help="comma-separated degrees (default 0..345 in 15 degree steps)")
    s.add_argument("--dwell", type=_positive(float), default=20.0, help="seconds per point")
    s.add_argument("--seed", type=_non_negative_int, default=0)
    s.add_argument("--out")
    common(s)
    s.set_defaults(func=cmd_polarization)

    s = sub.add_parser("fit", help="fit a model to an existing CSV")
    s.add_argument("kind", choices=("g2", "lifetime", "saturation", "polarization", "spectrum",
                                    "gaussian"))
    s.add_argument("input")
    s.add_argument("--irf-sigma", type=_irf, default=0.41, help="ns, or 'free' (g2 only)")
    s.add_argument("--components", type=int, default=2, help="Gaussians in a spectrum fit")
    common(s)
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) == "lifetime" and args.irf_sigma is None:
            raise UsageError("lifetime fits need a fixed --irf-sigma")
        return args.func(args)
    except EmitterLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
