"""On-disk formats: signal binaries with sidecar metadata, hop and recovery CSVs."""

from __future__ import annotations

import csv
import os
import struct

import numpy as np

from .core import ComplexSignal, InvalidArgumentError
from .mc_sampler import CosetStreams, McConfig

MAGIC = b"MCFH"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQ")

HOP_COLUMNS = ("radio", "hop", "carrier_hz", "phase_rad", "start_s", "duration_s")
RECOVERY_COLUMNS = ("segment", "start_index", "solver", "support_size", "support_indices",
                    "residual", "rank_Z", "wall_time_s")


def read_metadata(path):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidArgumentError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def write_metadata(path, items):
    with open(path, "w") as fh:
        for key, value in items.items():
            fh.write(f"{key}={value}\n")


def _meta_path(path):
    return path + ".meta"


def write_signal(path, signal: ComplexSignal):
    """16-byte header, interleaved little-endian f64 (re, im), sidecar ``<path>.meta``."""
    data = np.empty(2 * len(signal), dtype="<f8")
    data[0::2] = signal.samples.real
    data[1::2] = signal.samples.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(signal)))
        fh.write(data.tobytes())
    write_metadata(_meta_path(path), {
        "sample_interval_seconds": repr(signal.sample_interval_seconds),
        "start_time_seconds": repr(signal.start_time_seconds),
    })


def read_signal(path) -> ComplexSignal:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated header")
    magic, version, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise InvalidArgumentError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise InvalidArgumentError(f"{path}: unsupported format version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * count:
        raise InvalidArgumentError(f"{path}: expected {count} samples, found {body.size / 2:g}")
    meta = read_metadata(_meta_path(path))
    try:
        dt = float(meta["sample_interval_seconds"])
        t0 = float(meta.get("start_time_seconds", 0.0))
    except (KeyError, ValueError) as exc:
        raise InvalidArgumentError(f"{path}: bad metadata ({exc})") from exc
    return ComplexSignal(body[0::2] + 1j * body[1::2], dt, t0)


def write_hops(path, hops):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HOP_COLUMNS)
        for h in hops:
            w.writerow([h.radio_index, h.hop_index, repr(h.carrier_hz), repr(h.phase_rad),
                        repr(h.start_seconds), repr(h.duration_seconds)])


def read_hops(path):
    from .fh_signal import HopRecord

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [HopRecord(int(r["radio"]), int(r["hop"]), float(r["carrier_hz"]),
                      float(r["phase_rad"]), float(r["start_s"]), float(r["duration_s"]))
            for r in rows]


def write_cosets(out_dir, streams: CosetStreams):
    """One signal file per coset plus ``manifest.txt`` with T_c, L, q and C."""
    cfg = streams.config
    os.makedirs(out_dir, exist_ok=True)
    step = cfg.period * cfg.base_interval_seconds
    for i, c in enumerate(cfg.pattern):
        t0 = streams.origin_time + c * cfg.base_interval_seconds
        write_signal(os.path.join(out_dir, f"coset_{i:03d}.sig"),
                     ComplexSignal(streams.streams[i], step, t0))
    write_metadata(os.path.join(out_dir, "manifest.txt"), {
        "base_interval_seconds": repr(cfg.base_interval_seconds),
        "period": cfg.period,
        "channel_count": cfg.channel_count,
        "pattern": ",".join(str(c) for c in cfg.pattern),
        "origin_time_seconds": repr(streams.origin_time),
    })


def read_cosets(in_dir) -> CosetStreams:
    meta = read_metadata(os.path.join(in_dir, "manifest.txt"))
    try:
        pattern = tuple(int(c) for c in meta["pattern"].split(","))
        cfg = McConfig(float(meta["base_interval_seconds"]), int(meta["period"]), pattern)
        origin = float(meta.get("origin_time_seconds", 0.0))
    except (KeyError, ValueError) as exc:
        raise InvalidArgumentError(f"{in_dir}: bad coset manifest ({exc})") from exc
    if int(meta.get("channel_count", len(pattern))) != len(pattern):
        raise InvalidArgumentError(f"{in_dir}: channel_count disagrees with pattern")
    streams = [read_signal(os.path.join(in_dir, f"coset_{i:03d}.sig")).samples
               for i in range(len(pattern))]
    if len({s.size for s in streams}) != 1:
        raise InvalidArgumentError(f"{in_dir}: coset streams differ in length")
    return CosetStreams(np.vstack(streams), cfg, origin)


def write_recovery_manifest(path, solutions):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECOVERY_COLUMNS)
        for s in solutions:
            w.writerow([s.segment_index, s.start_index, s.solver_id, s.support.size,
                        " ".join(str(i) for i in s.support.indices),
                        f"{s.residual_norm:.12e}", s.rank_z, f"{s.wall_time_seconds:.6e}"])
