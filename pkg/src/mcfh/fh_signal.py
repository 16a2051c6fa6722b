"""Blind frequency-hopping and stationary multiband signal synthesis.

Signals are generated directly at complex baseband: an RF band
``[f_min, f_max]`` is represented by shifting ``f_min`` to 0 Hz, so the whole
hopping band fits in a sample rate of ``f_max - f_min + B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ComplexSignal, InvalidArgumentError

RC_SPAN_SYMBOLS = 6
DEFAULT_EPSILON = 1e-3

_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2.0)


@dataclass(frozen=True)
class RadioConfig:
    hop_count: int
    hri_seconds: float
    delay_seconds: float
    freq_range: tuple
    symbol_rate: float
    excess_bandwidth: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.hop_count < 1:
            raise InvalidArgumentError("hop_count must be positive")
        if not self.hri_seconds > 0:
            raise InvalidArgumentError("hri_seconds must be positive")
        if not 0 <= self.delay_seconds <= self.hri_seconds:
            raise InvalidArgumentError("delay_seconds must lie in [0, hri_seconds]")
        f_min, f_max = self.freq_range
        if not f_min < f_max:
            raise InvalidArgumentError("freq_range must satisfy f_min < f_max")
        if not self.symbol_rate > 0:
            raise InvalidArgumentError("symbol_rate must be positive")
        if not 0 <= self.excess_bandwidth <= 1:
            raise InvalidArgumentError("excess_bandwidth must lie in [0, 1]")
        object.__setattr__(self, "freq_range", (float(f_min), float(f_max)))

    @property
    def hop_duration(self):
        return 0.95 * self.hri_seconds

    @property
    def hop_bandwidth(self):
        """Two-sided bandwidth of the raised-cosine pulse train."""
        return self.symbol_rate * (1.0 + self.excess_bandwidth)


@dataclass(frozen=True)
class FhClassParams:
    radio_count: int
    max_hop_bandwidth_hz: float
    min_hri_seconds: float
    essential_band_threshold: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.radio_count < 0:
            raise InvalidArgumentError("radio_count must be nonnegative")
        if not self.max_hop_bandwidth_hz > 0 or not self.min_hri_seconds > 0:
            raise InvalidArgumentError("B and T must be positive")
        if not self.essential_band_threshold > 0:
            raise InvalidArgumentError("essential_band_threshold must be positive")


@dataclass(frozen=True)
class HopRecord:
    radio_index: int
    hop_index: int
    carrier_hz: float
    phase_rad: float
    start_seconds: float
    duration_seconds: float


def hop_window(t_rel, hop_duration):
    """Trapezoidal hop envelope: 5% linear ramp up, flat, 5% linear ramp down.

    Accepts scalars or arrays; returns the same shape.
    """
    if not hop_duration > 0:
        raise InvalidArgumentError("hop_duration must be positive")
    t = np.asarray(t_rel, dtype=float)
    th = float(hop_duration)
    out = np.zeros_like(t)
    up = (t >= 0) & (t < 0.05 * th)
    flat = (t >= 0.05 * th) & (t < 0.95 * th)
    down = (t >= 0.95 * th) & (t < th)
    out[up] = 20.0 / th * t[up]
    out[flat] = 1.0
    out[down] = 20.0 / th * (th - t[down])
    if np.ndim(t_rel) == 0:
        return float(out)
    return out


def raised_cosine(t, symbol_period, beta, span=RC_SPAN_SYMBOLS):
    """Raised-cosine pulse p(t) with unit peak, truncated to ``|t| <= span*Ts``."""
    x = np.asarray(t, dtype=float) / symbol_period
    p = np.sinc(x)
    if beta > 0:
        denom = 1.0 - (2.0 * beta * x) ** 2
        singular = np.abs(denom) < 1e-10
        safe = np.where(singular, 1.0, denom)
        p = np.where(singular, np.pi / 4 * np.sinc(1.0 / (2.0 * beta)),
                     p * np.cos(np.pi * beta * x) / safe)
    return np.where(np.abs(x) <= span, p, 0.0)


def hop_symbols(config: RadioConfig, hop: HopRecord):
    """Gray-mapped 4PSK symbols for one hop and their times relative to hop start."""
    ts = 1.0 / config.symbol_rate
    first = -RC_SPAN_SYMBOLS
    last = int(math.ceil(hop.duration_seconds / ts)) + RC_SPAN_SYMBOLS
    k = np.arange(first, last + 1)
    rng = np.random.default_rng([config.seed, hop.radio_index, hop.hop_index, 0])
    bits = rng.integers(0, 4, size=k.size)
    return _QPSK[bits], k * ts


def baseband_hop_waveform(config: RadioConfig, hop: HopRecord, t_rel):
    """Evaluate g(t) = r(t) m(t) at arbitrary times relative to the hop start."""
    t_rel = np.asarray(t_rel, dtype=float)
    symbols, times = hop_symbols(config, hop)
    ts = 1.0 / config.symbol_rate
    m = np.zeros(t_rel.shape, dtype=np.complex128)
    # chunked to bound the (samples x symbols) pulse matrix
    flat_t = t_rel.reshape(-1)
    flat_m = m.reshape(-1)
    for lo in range(0, flat_t.size, 8192):
        tt = flat_t[lo:lo + 8192, None] - times[None, :]
        flat_m[lo:lo + 8192] = raised_cosine(tt, ts, config.excess_bandwidth) @ symbols
    return hop_window(t_rel, hop.duration_seconds) * m


def _hop_grid(hop: HopRecord, sample_interval):
    n0 = int(math.ceil(hop.start_seconds / sample_interval - 1e-9))
    n1 = int(math.ceil((hop.start_seconds + hop.duration_seconds) / sample_interval - 1e-9))
    return n0, n1


def synthesize_baseband_hop(config: RadioConfig, hop: HopRecord, sample_interval):
    """Sample g_ik(t - start) on the global grid ``n * sample_interval`` over the hop support.

    The returned signal starts at the first grid point at or after the hop start.
    """
    if not sample_interval > 0:
        raise InvalidArgumentError("sample_interval must be positive")
    if sample_interval > 1.0 / (2.0 * config.hop_bandwidth):
        raise InvalidArgumentError(
            f"sample interval {sample_interval:g} s does not resolve hop bandwidth "
            f"{config.hop_bandwidth:g} Hz")
    n0, n1 = _hop_grid(hop, sample_interval)
    if n1 <= n0:
        raise InvalidArgumentError("hop is shorter than one sample interval")
    t_rel = np.arange(n0, n1) * sample_interval - hop.start_seconds
    g = baseband_hop_waveform(config, hop, t_rel)
    return ComplexSignal(g, sample_interval, n0 * sample_interval)


def draw_hops(config: RadioConfig, radio_index, duration=None):
    """Ground-truth hop records for one radio: off-grid uniform carriers, uniform phases."""
    rng = np.random.default_rng([config.seed, radio_index, 1 << 20])
    f_min, f_max = config.freq_range
    carriers = rng.uniform(f_min, f_max, size=config.hop_count)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.hop_count)
    hops = []
    for k in range(config.hop_count):
        start = k * config.hri_seconds + config.delay_seconds
        if duration is not None and start >= duration:
            break
        hops.append(HopRecord(radio_index, k, float(carriers[k]), float(phases[k]),
                              start, config.hop_duration))
    return hops


def _reference_frequency(radios):
    return min(r.freq_range[0] for r in radios)


def synthesize_fh_signal(class_params: FhClassParams, radios, duration, sample_interval,
                         reference_hz=None):
    """Synthesize a member of A_FH(N, B, T) at complex baseband.

    Carrier frequencies in the output are ``carrier_hz - reference_hz``; the
    reference defaults to the smallest ``f_min`` over the radios.

    Returns
    -------
    signal : ComplexSignal
    hops : list of HopRecord
        Ground truth for every hop that starts inside ``[0, duration)``.
    """
    radios = list(radios)
    if len(radios) != class_params.radio_count:
        raise InvalidArgumentError(
            f"expected {class_params.radio_count} radios, got {len(radios)}")
    if not duration > 0 or not sample_interval > 0:
        raise InvalidArgumentError("duration and sample_interval must be positive")
    n = int(round(duration / sample_interval))
    if n < 1:
        raise InvalidArgumentError("duration shorter than one sample")
    x = np.zeros(n, dtype=np.complex128)
    if not radios:
        return ComplexSignal(x, sample_interval, 0.0), []

    big_b = class_params.max_hop_bandwidth_hz
    f_lo = _reference_frequency(radios) if reference_hz is None else float(reference_hz)
    f_hi = max(r.freq_range[1] for r in radios)
    if sample_interval > 1.0 / (f_hi - f_lo + big_b) * (1 + 1e-12):
        raise InvalidArgumentError(
            "sample interval too coarse for the hopping band: need "
            f"<= {1.0 / (f_hi - f_lo + big_b):g} s")
    for radio in radios:
        if radio.hop_bandwidth > big_b * (1 + 1e-12):
            raise InvalidArgumentError("radio hop bandwidth exceeds class bandwidth B")
        if radio.hri_seconds < class_params.min_hri_seconds * (1 - 1e-12):
            raise InvalidArgumentError("radio HRI below class minimum T")
        if radio.freq_range[0] < f_lo:
            raise InvalidArgumentError("radio band starts below the reference frequency")

    hops_out = []
    for i, radio in enumerate(radios):
        for hop in draw_hops(radio, i, duration):
            g = synthesize_baseband_hop(radio, hop, sample_interval)
            n0 = int(round(g.start_time_seconds / sample_interval))
            n1 = min(n0 + len(g), n)
            if n1 <= n0:
                continue
            t = np.arange(n0, n1) * sample_interval
            carrier = np.exp(1j * (2 * np.pi * (hop.carrier_hz - f_lo) * t + hop.phase_rad))
            x[n0:n1] += g.samples[: n1 - n0] * carrier
            hops_out.append(hop)
    return ComplexSignal(x, sample_interval, 0.0), hops_out


def make_radios(class_params: FhClassParams, duration, freq_range, seed,
                excess_bandwidth=0.3, synchronous=False):
    """Radios for an experiment: equal HRIs ``T``, random delays, bandwidth exactly B.

    The symbol rate is set so that ``symbol_rate * (1 + beta) == B``.
    """
    rng = np.random.default_rng([seed, 7])
    t = class_params.min_hri_seconds
    symbol_rate = class_params.max_hop_bandwidth_hz / (1.0 + excess_bandwidth)
    radios = []
    shared_delay = rng.uniform(0.0, t)
    for i in range(class_params.radio_count):
        delay = shared_delay if synchronous else rng.uniform(0.0, t)
        hop_count = max(1, int(math.ceil((duration - delay) / t)))
        radio_seed = int(rng.integers(0, 2**31 - 1))
        radios.append(RadioConfig(hop_count, t, delay, tuple(freq_range), symbol_rate,
                                  excess_bandwidth, radio_seed))
    return radios


def _band_mask(n, sample_interval, center, width):
    fs = 1.0 / sample_interval
    f = np.arange(n) * fs / n
    offset = (f - center + fs / 2) % fs - fs / 2
    # half-open [c - w/2, c + w/2) in bin units with a tolerance for rounding
    tol = 1e-9 * fs / n
    return (offset >= -width / 2 - tol) & (offset < width / 2 - tol)


def synthesize_multiband_signal(band_centers, band_width, duration, sample_interval, seed):
    """Sum of independent band-limited complex Gaussian processes, one per band.

    Each band is generated on the DFT grid of the full record, so the
    spectrum is exactly zero outside ``[center - width/2, center + width/2)``
    (frequencies taken modulo the sample rate).
    """
    if not duration > 0 or not sample_interval > 0 or not band_width > 0:
        raise InvalidArgumentError("duration, sample_interval and band_width must be positive")
    fs = 1.0 / sample_interval
    centers = [float(c) for c in band_centers]
    if len(centers) * band_width > fs * (1 + 1e-12):
        raise InvalidArgumentError("bands do not fit in the representable range")
    wrapped = sorted(c % fs for c in centers)
    for a, b in zip(wrapped, wrapped[1:] + [wrapped[0] + fs] if wrapped else []):
        if len(wrapped) > 1 and b - a < band_width * (1 - 1e-12):
            raise InvalidArgumentError("bands overlap")
    n = int(round(duration / sample_interval))
    spectrum = np.zeros(n, dtype=np.complex128)
    rng = np.random.default_rng(seed)
    for c in centers:
        mask = _band_mask(n, sample_interval, c, band_width)
        k = int(mask.sum())
        if k == 0:
            continue
        coeffs = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)
        spectrum[mask] = coeffs * np.sqrt(n / k) * np.sqrt(n)
    x = np.fft.ifft(spectrum)
    return ComplexSignal(x, sample_interval, 0.0)


def band_energy_fraction(samples, sample_interval, center, half_width, pad_factor=8):
    """Fraction of energy of ``samples`` within ``|f - center| <= half_width``.

    Computed on a zero-padded DFT so that the DTFT is densely sampled.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    total = np.vdot(samples, samples).real
    if total == 0:
        return 1.0
    nfft = int(2 ** math.ceil(math.log2(max(samples.size * pad_factor, 16))))
    spec = np.abs(np.fft.fft(samples, nfft)) ** 2
    fs = 1.0 / sample_interval
    f = np.arange(nfft) * fs / nfft
    offset = (f - center + fs / 2) % fs - fs / 2
    inside = np.abs(offset) <= half_width
    return float(spec[inside].sum() / spec.sum())
