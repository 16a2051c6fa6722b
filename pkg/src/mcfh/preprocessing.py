"""Interpolation and delay correction of coset streams, and segmentation.

The aligned streams satisfy z(k) = A x_bb(k), where row l of x_bb is the
l-th spectral slice of the input shifted to baseband. Slice l covers the
digital band ``[l/L - 1/(2L), l/L + 1/(2L))`` modulo 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ComplexSignal, InvalidArgumentError
from .mc_sampler import CosetStreams, McConfig, MeasurementMatrix, signed_bins

MIN_STREAM_LENGTH = 32
DEFAULT_GUARD = 512


@dataclass(frozen=True)
class AlignedStreams:
    streams: np.ndarray  # (q, n) at rate 1/T_c
    config: McConfig
    valid_range: tuple  # [start, stop) in base-rate samples
    origin_time: float = 0.0

    @property
    def length(self):
        return self.streams.shape[1]

    @property
    def valid_length(self):
        return self.valid_range[1] - self.valid_range[0]


@dataclass(frozen=True)
class SegmentMatrix:
    entries: np.ndarray  # (q, r)
    segment_index: int
    start_index: int
    config: McConfig

    @property
    def width(self):
        return self.entries.shape[1]


def baseband_mask(n, period):
    """Boolean mask over the n DFT bins belonging to the baseband slice F_0."""
    m = n // period
    k = signed_bins(n)
    return (k >= -(m // 2)) & (k < m - m // 2)


def interpolate_and_align(streams: CosetStreams, guard=DEFAULT_GUARD) -> AlignedStreams:
    """Ideal-lowpass upsampling by L followed by an integer delay of c_i base samples.

    The whole record is processed as one circular block: each stream is
    zero-stuffed by L, masked to F_0 in the DFT domain with gain L, and
    circularly shifted by c_i, which realises z_i(k) = y_i((k - c_i)/L).
    ``guard`` base-rate samples at each end are excluded from ``valid_range``.
    """
    cfg = streams.config
    big_l = cfg.period
    q, m = streams.streams.shape
    if m < MIN_STREAM_LENGTH:
        raise InvalidArgumentError(
            f"coset streams need at least {MIN_STREAM_LENGTH} samples, got {m}")
    n = m * big_l
    if guard < 0 or 2 * guard >= n:
        raise InvalidArgumentError(f"guard {guard} leaves no valid samples in length {n}")
    if big_l == 1:
        z = streams.streams.astype(np.complex128, copy=True)
    else:
        # DFT of the zero-stuffed stream is the stream DFT tiled L times
        y_dft = np.fft.fft(streams.streams, axis=1)
        up = np.tile(y_dft, (1, big_l)) * big_l
        up[:, ~baseband_mask(n, big_l)] = 0.0
        v = np.fft.ifft(up, axis=1)
        z = np.empty_like(v)
        for i, c in enumerate(cfg.pattern):
            z[i] = np.roll(v[i], c)
    return AlignedStreams(z, cfg, (int(guard), int(n - guard)), streams.origin_time)


def segment(aligned: AlignedStreams, r: int):
    """Non-overlapping width-r windows over the valid range; the remainder is kept."""
    if int(r) != r or r < 1:
        raise InvalidArgumentError("segment size r must be a positive integer")
    r = int(r)
    start, stop = aligned.valid_range
    out = []
    for j, k0 in enumerate(range(start, stop, r)):
        k1 = min(k0 + r, stop)
        out.append(SegmentMatrix(aligned.streams[:, k0:k1], j, k0, aligned.config))
    return out


def slice_decompose(x, period):
    """Exact circular spectral-slice decomposition of a dense record.

    Returns an (L, n) array whose row l is x_{l,bb}: the DFT bins of slice l
    shifted to baseband. ``sum_l x_bb[l] * exp(j 2 pi l k / L) == x`` exactly.
    ``n`` is truncated to a multiple of L.
    """
    samples = x.samples if isinstance(x, ComplexSignal) else np.asarray(x, dtype=np.complex128)
    n = (samples.size // period) * period
    if n == 0:
        raise InvalidArgumentError("record shorter than one period")
    spec = np.fft.fft(samples[:n])
    m = n // period
    keep = baseband_mask(n, period)
    out = np.empty((period, n), dtype=np.complex128)
    for l in range(period):
        # slice l sits at bins l*m + k, k in [-m/2, m/2)
        shifted = np.roll(spec, -l * m)
        shifted[~keep] = 0.0
        out[l] = np.fft.ifft(shifted)
    return out


def dtlms_residual(x_bb_truth, z: SegmentMatrix, a: MeasurementMatrix) -> float:
    """Relative mismatch ``||Z - A X_bb||_F / ||A X_bb||_F`` (0 when both vanish)."""
    x_bb = np.asarray(x_bb_truth)
    zz = z.entries if isinstance(z, SegmentMatrix) else np.asarray(z)
    q, big_l = a.entries.shape
    if x_bb.ndim != 2 or x_bb.shape[0] != big_l or zz.shape != (q, x_bb.shape[1]):
        raise InvalidArgumentError(
            f"shape mismatch: A {a.entries.shape}, X_bb {x_bb.shape}, Z {zz.shape}")
    ax = a.entries @ x_bb
    denom = np.linalg.norm(ax)
    diff = np.linalg.norm(zz - ax)
    if denom == 0:
        return 0.0 if diff == 0 else np.inf
    return float(diff / denom)
