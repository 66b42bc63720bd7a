"""File formats: binary timestamp streams, histogram/points CSV, experiment config.

Binary timestamp layout (little-endian)::

    magic     4 bytes  b"PHTS"
    version   u16
    nch       u8
    duration  u64      ps
    counts    u64 * nch
    hash      32 bytes
    seed      u64
    records   (u8 channel, u64 time ps) * sum(counts), sorted by (time, channel)
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .correlator import Histogram
from .errors import (BadMagicError, ConfigError, CountMismatchError, FormatError,
                     NonMonotonicError, TruncatedFileError)
from .kinetics import (CW, DEFAULT_ALPHA, DEFAULT_DET_EFF, EmitterConfig, ExcitationContext,
                       Pulsed)
from .montecarlo import DetectorConfig, TimestampStream

MAGIC = b"PHTS"
FORMAT_VERSION = 1
RECORD_DTYPE = np.dtype([("channel", "u1"), ("time", "<u8")])  # packed, 9 bytes
_HEAD = struct.Struct("<4sHBQ")
_TAIL = struct.Struct("<32sQ")


def header_size(n_channels: int) -> int:
    return _HEAD.size + 8 * n_channels + _TAIL.size


# --------------------------------------------------------------------- binary

def encode_timestamps(stream: TimestampStream) -> bytes:
    counts = stream.counts
    head = _HEAD.pack(MAGIC, FORMAT_VERSION, stream.n_channels, stream.duration_ps)
    head += struct.pack(f"<{stream.n_channels}Q", *counts)
    head += _TAIL.pack(stream.config_hash, stream.seed)
    rec = np.empty(len(stream.times), dtype=RECORD_DTYPE)
    rec["channel"] = stream.channels
    rec["time"] = stream.times
    return head + rec.tobytes()


def write_timestamps(stream: TimestampStream, path) -> None:
    if len(stream.times) and np.any(stream.times < 0):
        raise FormatError("negative timestamps cannot be written")
    Path(path).write_bytes(encode_timestamps(stream))


def decode_timestamps(data: bytes, source: str = "<bytes>") -> TimestampStream:
    if len(data) < _HEAD.size:
        raise TruncatedFileError(f"{source}: header truncated ({len(data)} bytes)")
    magic, version, nch, duration_ps = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{source}: unsupported format version {version}")
    hsize = header_size(nch)
    if len(data) < hsize:
        raise TruncatedFileError(f"{source}: header truncated ({len(data)} of {hsize} bytes)")
    counts = struct.unpack_from(f"<{nch}Q", data, _HEAD.size)
    config_hash, seed = _TAIL.unpack_from(data, _HEAD.size + 8 * nch)
    expected = sum(counts)
    body = len(data) - hsize
    found, rest = divmod(body, RECORD_DTYPE.itemsize)
    if found < expected or (found == expected and rest):
        raise TruncatedFileError(
            f"{source}: expected {expected} records, found {found}"
            + (f" and {rest} stray bytes" if rest else ""))
    if found > expected:
        raise CountMismatchError(
            f"{source}: header declares {expected} records but {found} are present")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=expected, offset=hsize)
    chans = rec["channel"].astype(np.uint8)
    times = rec["time"].astype(np.uint64)
    if expected and int(times.max()) > np.iinfo(np.int64).max:
        raise FormatError(f"{source}: timestamp exceeds the signed 64-bit range")
    times = times.astype(np.int64)
    if expected and int(chans.max()) >= nch:
        raise FormatError(f"{source}: record channel {int(chans.max())} >= channel count {nch}")
    actual = np.bincount(chans, minlength=nch)[:nch]
    if not np.array_equal(actual, np.asarray(counts)):
        raise CountMismatchError(
            f"{source}: per-channel counts {actual.tolist()} differ from header {list(counts)}")
    if expected > 1:
        dt = np.diff(times)
        bad = np.nonzero((dt < 0) | ((dt == 0) & (np.diff(chans.astype(np.int16)) <= 0)))[0]
        if bad.size:
            i = int(bad[0]) + 1
            raise NonMonotonicError(f"{source}: record {i} is out of (time, channel) order")
    return TimestampStream(chans, times, int(duration_ps), nch, bytes(config_hash), int(seed))


def read_timestamps(path) -> TimestampStream:
    return decode_timestamps(Path(path).read_bytes(), str(path))


# ----------------------------------------------------------------------- CSV

_HIST_REQUIRED = ("kind", "T_s", "N1_cps", "N2_cps")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _axis_key(kind: str) -> str:
    return "nm" if kind == "spectrum" else "s"


def histogram_to_csv(h: Histogram) -> str:
    unit = _axis_key(h.kind)
    lines = [f"# kind={h.kind}",
             f"# bin_width_{unit}={_fmt(h.bin_width)}",
             f"# origin_{unit}={_fmt(h.origin)}",
             f"# T_s={_fmt(h.T)}",
             f"# N1_cps={_fmt(h.N1)}",
             f"# N2_cps={_fmt(h.N2)}",
             f"# normalized={'true' if h.normalized else 'false'}",
             f"# discarded={h.discarded}",
             "bin_left,count"]
    left = h.left_edges
    if h.normalized:
        lines += [f"{_fmt(x)},{_fmt(c)}" for x, c in zip(left, h.counts)]
    else:
        lines += [f"{_fmt(x)},{int(c)}" for x, c in zip(left, h.counts)]
    return "\n".join(lines) + "\n"


def write_histogram_csv(h: Histogram, path) -> None:
    Path(path).write_text(histogram_to_csv(h))


def _split_csv(text: str, source: str):
    meta, rows = {}, []
    header = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                meta[key.strip()] = val.strip()
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            header = fields
            continue
        if len(fields) != len(header):
            raise FormatError(f"{source}:{lineno}: expected {len(header)} fields, "
                              f"got {len(fields)}")
        rows.append((lineno, fields))
    return meta, header, rows


def _to_float(text: str, source: str, lineno) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"{source}:{lineno}: not a number: {text!r}") from None


def histogram_from_csv(text: str, source: str = "<csv>") -> Histogram:
    meta, header, rows = _split_csv(text, source)
    kind = meta.get("kind")
    unit = _axis_key(kind) if kind else "s"
    missing = [k for k in _HIST_REQUIRED + (f"bin_width_{unit}",) if k not in meta]
    if missing:
        raise FormatError(f"{source}: missing metadata key(s): {', '.join(missing)}")
    if header != ["bin_left", "count"]:
        raise FormatError(f"{source}: expected columns bin_left,count, got {header}")
    normalized = meta.get("normalized", "false").lower() == "true"
    bw = _to_float(meta[f"bin_width_{unit}"], source, "header")
    left = np.array([_to_float(f[0], source, n) for n, f in rows])
    if normalized:
        counts = np.array([_to_float(f[1], source, n) for n, f in rows])
    else:
        try:
            counts = np.array([int(f[1]) for _, f in rows], dtype=np.int64)
        except ValueError:
            raise FormatError(f"{source}: raw histogram counts must be integers") from None
    origin_key = f"origin_{unit}"
    origin = _to_float(meta[origin_key], source, "header") if origin_key in meta else (
        float(left[0]) if left.size else 0.0)
    expect = origin + bw * np.arange(left.size)
    if left.size and not np.allclose(left, expect, rtol=1e-9, atol=1e-6 * bw):
        raise FormatError(f"{source}: bin_left column is not uniform with width {bw}")
    try:
        return Histogram(counts, bw, origin, kind, _to_float(meta["T_s"], source, "header"),
                         _to_float(meta["N1_cps"], source, "header"),
                         _to_float(meta["N2_cps"], source, "header"), normalized,
                         int(meta.get("discarded", "0")))
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None


def read_histogram_csv(path) -> Histogram:
    return histogram_from_csv(Path(path).read_text(), str(path))


POINT_SCHEMAS = {
    "saturation": ("power_uw", "rate_cps"),
    "polarization": ("angle_deg", "rate_cps"),
    "spectrum": ("wavelength_nm", "intensity"),
}


def points_to_csv(columns: dict[str, np.ndarray], meta: dict | None = None) -> str:
    names = list(columns)
    lines = [f"# {k}={v}" for k, v in (meta or {}).items()]
    lines.append(",".join(names))
    for row in zip(*(np.asarray(columns[n], float) for n in names)):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_points_csv(columns: dict, path, meta: dict | None = None) -> None:
    Path(path).write_text(points_to_csv(columns, meta))


def points_from_csv(text: str, required, source: str = "<csv>") -> dict[str, np.ndarray]:
    _, header, rows = _split_csv(text, source)
    if header is None:
        raise FormatError(f"{source}: no column header line")
    missing = [c for c in required if c not in header]
    if missing:
        raise FormatError(f"{source}: missing column(s): {', '.join(missing)} "
                          f"(found {', '.join(header)})")
    return {c: np.array([_to_float(f[header.index(c)], source, n) for n, f in rows])
            for c in header}


def read_points_csv(path, required) -> dict[str, np.ndarray]:
    return points_from_csv(Path(path).read_text(), required, str(path))


# -------------------------------------------------------------------- config

@dataclass(frozen=True)
class _Key:
    required: bool = False
    default: object = None
    kind: str = "float"  # float | map | mode


SCHEMA = {
    "emitter": {
        "k_rad_per_ns": _Key(True),
        "k_nr_per_ns": _Key(True, kind="map"),
        "sigma_rel": _Key(True, kind="map"),
        "k_isc_per_ns": _Key(default=0.0),
        "k_isc_return_per_ns": _Key(default=0.0),
        "tilt_phi_deg": _Key(default=0.0),
        "excited_splitting_ev": _Key(default=0.07),
    },
    "excitation": {
        "wavelength_nm": _Key(True),
        "power_uw": _Key(True),
        "pol_theta_deg": _Key(default=0.0),
        "mode": _Key(default="cw", kind="mode"),
        "period_ns": _Key(default=20.0),
        "pulse_width_ps": _Key(default=50.0),
        "sync_offset_ns": _Key(default=2.0),
        "alpha_per_ns_per_uw": _Key(default=DEFAULT_ALPHA),
    },
    "detector": {
        "collection_efficiency": _Key(default=DEFAULT_DET_EFF),
        "efficiency": _Key(default=1.0),
        "jitter_sigma_ns": _Key(default=0.0),
        "dead_time_ns": _Key(default=0.0),
        "dark_rate_cps": _Key(default=0.0),
        "background_rate_cps": _Key(default=0.0),
    },
    "correlator": {
        "bin_ps": _Key(default=73.3),
        "window_ns": _Key(default=20.0),
    },
}
_PULSE_KEYS = ("period_ns", "pulse_width_ps", "sync_offset_ns")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one simulated acquisition.

    ``collection_efficiency`` is the fraction of emitted photons reaching the
    detectors; ``detector.efficiency`` is the detector's own quantum
    efficiency.
    """

    emitter: EmitterConfig
    excitation: ExcitationContext
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    collection_efficiency: float = DEFAULT_DET_EFF
    bin_ps: float = 73.3
    window_ns: float = 20.0

    def __post_init__(self):
        if not 0 <= self.collection_efficiency <= 1:
            raise ConfigError(
                f"collection_efficiency must lie in [0, 1], got {self.collection_efficiency}")
        if not self.bin_ps > 0:
            raise ConfigError(f"bin_ps must be positive, got {self.bin_ps}")
        if not self.window_ns * 1000 > self.bin_ps:
            raise ConfigError("window_ns must exceed the bin width")
        # fail early on wavelengths missing from either map
        self.emitter.k_nr(self.excitation.wavelength)
        self.emitter.sigma_rel(self.excitation.wavelength)

    @property
    def bin_width(self) -> float:
        return self.bin_ps * 1e-12

    @property
    def window(self) -> float:
        return self.window_ns * 1e-9

    @property
    def total_efficiency(self) -> float:
        return self.collection_efficiency * self.detector.efficiency

    def with_excitation(self, **changes) -> "ExperimentConfig":
        return replace(self, excitation=replace(self.excitation, **changes))

    def with_detector(self, **changes) -> "ExperimentConfig":
        return replace(self, detector=replace(self.detector, **changes))

    def dumps(self) -> str:
        return dump_config(self)

    @property
    def digest(self) -> bytes:
        return config_hash(self)


def _parse_map(text: str, key: str, line: int, source) -> dict[float, float]:
    out = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"{key}: expected 'wavelength_nm:value' pairs, got {item!r}",
                              line, source)
        wl, val = item.split(":", 1)
        try:
            out[float(wl)] = float(val)
        except ValueError:
            raise ConfigError(f"{key}: not a number in {item!r}", line, source) from None
    if not out:
        raise ConfigError(f"{key}: no wavelength entries", line, source)
    return out


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    """Parse the sectioned ``key = value`` format; see ``configs/`` for examples.

    Unknown sections or keys, duplicates and missing required keys are errors
    that carry the offending line number.
    """
    values: dict[str, dict[str, tuple[object, int]]] = {s: {} for s in SCHEMA}
    section = None
    section_line = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno, source)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno, source)
            if section in section_line:
                raise ConfigError(f"duplicate section [{section}]", lineno, source)
            section_line[section] = lineno
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        if section is None:
            raise ConfigError("key outside of any section", lineno, source)
        key, val = (s.strip() for s in line.split("=", 1))
        spec = SCHEMA[section].get(key)
        if spec is None:
            raise ConfigError(f"unknown key '{key}' in [{section}]", lineno, source)
        if key in values[section]:
            raise ConfigError(f"duplicate key '{key}' in [{section}]", lineno, source)
        if spec.kind == "map":
            parsed = _parse_map(val, key, lineno, source)
        elif spec.kind == "mode":
            parsed = val.lower()
            if parsed not in ("cw", "pulsed"):
                raise ConfigError(f"mode must be 'cw' or 'pulsed', got {val!r}", lineno, source)
        else:
            try:
                parsed = float(val)
            except ValueError:
                raise ConfigError(f"{key}: not a number: {val!r}", lineno, source) from None
            if not math.isfinite(parsed):
                raise ConfigError(f"{key}: must be finite", lineno, source)
        values[section][key] = (parsed, lineno)

    for sec, keys in SCHEMA.items():
        for key, spec in keys.items():
            if spec.required and key not in values[sec]:
                raise ConfigError(f"missing required key '{key}' in [{sec}]",
                                  section_line.get(sec), source)

    def get(sec, key):
        item = values[sec].get(key)
        return SCHEMA[sec][key].default if item is None else item[0]

    def line_of(sec, key=None):
        if key is not None and key in values[sec]:
            return values[sec][key][1]
        return section_line.get(sec)

    def build(sec, factory):
        try:
            return factory()
        except ConfigError as exc:
            if exc.line is not None:
                raise
            raise ConfigError(str(exc), line_of(sec), source) from None

    emitter = build("emitter", lambda: EmitterConfig(
        k_rad=get("emitter", "k_rad_per_ns"),
        k_nr_by_wavelength=get("emitter", "k_nr_per_ns"),
        sigma_rel_by_wavelength=get("emitter", "sigma_rel"),
        k_isc=get("emitter", "k_isc_per_ns"),
        k_isc_return=get("emitter", "k_isc_return_per_ns"),
        tilt_phi=get("emitter", "tilt_phi_deg"),
        excited_splitting_ev=get("emitter", "excited_splitting_ev")))
    pulsed = get("excitation", "mode") == "pulsed"
    if not pulsed:
        for key in _PULSE_KEYS:
            if key in values["excitation"]:
                raise ConfigError(f"'{key}' only applies to mode = pulsed",
                                  line_of("excitation", key), source)
    mode = build("excitation", lambda: Pulsed(
        get("excitation", "period_ns"), get("excitation", "pulse_width_ps"),
        get("excitation", "sync_offset_ns")) if pulsed else CW())
    excitation = build("excitation", lambda: ExcitationContext(
        wavelength=get("excitation", "wavelength_nm"), power=get("excitation", "power_uw"),
        pol_theta=get("excitation", "pol_theta_deg"), mode=mode,
        alpha=get("excitation", "alpha_per_ns_per_uw")))
    detector = build("detector", lambda: DetectorConfig(
        efficiency=get("detector", "efficiency"),
        jitter_sigma=get("detector", "jitter_sigma_ns"),
        dead_time=get("detector", "dead_time_ns"),
        dark_rate=get("detector", "dark_rate_cps"),
        background_rate=get("detector", "background_rate_cps")))
    try:
        return ExperimentConfig(emitter, excitation, detector,
                                collection_efficiency=get("detector", "collection_efficiency"),
                                bin_ps=get("correlator", "bin_ps"),
                                window_ns=get("correlator", "window_ns"))
    except ConfigError as exc:
        if exc.line is not None:
            raise
        msg = str(exc)
        sec = "correlator" if ("bin" in msg or "window" in msg) else (
            "detector" if "efficiency" in msg else "excitation")
        raise ConfigError(msg, line_of(sec), source) from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from None
    return parse_config(text, str(path))


def _map_text(m) -> str:
    return ", ".join(f"{_fmt(k)}:{_fmt(v)}" for k, v in sorted(m.items()))


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form: every key, fixed order, 17-digit floats."""
    e, x, d = cfg.emitter, cfg.excitation, cfg.detector
    lines = ["[emitter]",
             f"k_rad_per_ns = {_fmt(e.k_rad)}",
             f"k_nr_per_ns = {_map_text(e.k_nr_by_wavelength)}",
             f"sigma_rel = {_map_text(e.sigma_rel_by_wavelength)}",
             f"k_isc_per_ns = {_fmt(e.k_isc)}",
             f"k_isc_return_per_ns = {_fmt(e.k_isc_return)}",
             f"tilt_phi_deg = {_fmt(e.tilt_phi)}",
             f"excited_splitting_ev = {_fmt(e.excited_splitting_ev)}",
             "",
             "[excitation]",
             f"wavelength_nm = {_fmt(x.wavelength)}",
             f"power_uw = {_fmt(x.power)}",
             f"pol_theta_deg = {_fmt(x.pol_theta)}",
             f"mode = {'pulsed' if x.pulsed else 'cw'}"]
    if x.pulsed:
        lines += [f"period_ns = {_fmt(x.mode.period_ns)}",
                  f"pulse_width_ps = {_fmt(x.mode.pulse_width_ps)}",
                  f"sync_offset_ns = {_fmt(x.mode.sync_offset_ns)}"]
    lines += [f"alpha_per_ns_per_uw = {_fmt(x.alpha)}",
              "",
              "[detector]",
              f"collection_efficiency = {_fmt(cfg.collection_efficiency)}",
              f"efficiency = {_fmt(d.efficiency)}",
              f"jitter_sigma_ns = {_fmt(d.jitter_sigma)}",
              f"dead_time_ns = {_fmt(d.dead_time)}",
              f"dark_rate_cps = {_fmt(d.dark_rate)}",
              f"background_rate_cps = {_fmt(d.background_rate)}",
              "",
              "[correlator]",
              f"bin_ps = {_fmt(cfg.bin_ps)}",
              f"window_ns = {_fmt(cfg.window_ns)}"]
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> bytes:
    """SHA-256 of the canonical text; stored in timestamp file headers."""
    return hashlib.sha256(dump_config(cfg).encode()).digest()
