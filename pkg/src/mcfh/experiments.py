"""Experiment harness: NMSE versus segment size, channel count and dictionary.

All randomness descends from one master seed through named substreams, so
a configuration fully determines every CSV apart from the wall-time columns.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dpss
from .core import ComplexSignal, InvalidArgumentError, UndefinedMetricError
from .fh_signal import DEFAULT_EPSILON, FhClassParams, make_radios, synthesize_fh_signal
from .mc_sampler import McConfig, build_measurement_matrix, random_pattern, sample
from .preprocessing import DEFAULT_GUARD, interpolate_and_align, segment, slice_decompose
from .recovery import reassemble, recover_segments, row_support

SOLVERS = ("somp", "music")
DB_FLOOR = -300.0


@dataclass(frozen=True)
class ExperimentConfig:
    radio_count: int = 2
    bandwidth_hz: float = 25000.0
    min_hri_seconds: float = 2e-4
    base_interval_seconds: float = 4e-7
    period: int = 32
    channel_counts: tuple = (10,)
    segment_sizes: tuple = ()  # empty: round(T / (2 T_c))
    solvers: tuple = ("somp",)
    max_sparsity: int = 0  # 0: 4N, clipped to q
    residual_tol: float = 1e-6
    kd_factors: tuple = (1.0, 2.0)
    duration_seconds: float = 10e-3
    trials: int = 5
    master_seed: int = 0
    guard: int = DEFAULT_GUARD
    support_threshold: float = DEFAULT_EPSILON
    snr_db: float = math.inf
    workers: int = 1
    output_dir: str = ""

    def __post_init__(self):
        for name in ("channel_counts", "segment_sizes", "solvers", "kd_factors"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.radio_count < 1:
            raise InvalidArgumentError("radio_count must be positive")
        if not (self.bandwidth_hz > 0 and self.min_hri_seconds > 0
                and self.base_interval_seconds > 0):
            raise InvalidArgumentError("B, T and T_c must be positive")
        if self.period < 1:
            raise InvalidArgumentError("L must be positive")
        if self.bandwidth_hz >= 1.0 / self.base_interval_seconds:
            raise InvalidArgumentError("B must be below the base rate 1/T_c")
        if not self.channel_counts:
            raise InvalidArgumentError("at least one q is required")
        for q in self.channel_counts:
            if int(q) != q or not 1 <= q <= self.period:
                raise InvalidArgumentError(f"q = {q} outside [1, L={self.period}]")
        for r in self.segment_sizes:
            if int(r) != r or r < 1:
                raise InvalidArgumentError(f"segment size {r} must be a positive integer")
        for s in self.solvers:
            if s not in SOLVERS:
                raise InvalidArgumentError(f"unknown solver {s!r}")
        if any(k <= 0 for k in self.kd_factors):
            raise InvalidArgumentError("kd factors must be positive")
        if self.max_sparsity < 0:
            raise InvalidArgumentError("max_sparsity must be nonnegative")
        if self.residual_tol < 0:
            raise InvalidArgumentError("residual_tol must be nonnegative")
        if self.duration_seconds < 10 * self.min_hri_seconds * (1 - 1e-12):
            raise InvalidArgumentError("duration must cover at least 10 T")
        if self.trials < 1 or self.workers < 1:
            raise InvalidArgumentError("trials and workers must be positive")
        if not self.support_threshold > 0:
            raise InvalidArgumentError("support_threshold must be positive")
        n = int(round(self.duration_seconds / self.base_interval_seconds))
        if n // self.period < 32 or 2 * self.guard >= n:
            raise InvalidArgumentError("duration too short for the sampler and guards")

    @property
    def class_params(self):
        return FhClassParams(self.radio_count, self.bandwidth_hz, self.min_hri_seconds,
                             self.support_threshold)

    @property
    def freq_range(self):
        return (0.0, 1.0 / self.base_interval_seconds - self.bandwidth_hz)

    @property
    def default_segment_size(self):
        return max(1, round(self.min_hri_seconds / (2 * self.base_interval_seconds)))

    @property
    def segment_list(self):
        return self.segment_sizes or (self.default_segment_size,)

    def sparsity_for(self, q):
        cap = self.max_sparsity or 4 * self.radio_count
        return min(cap, q)


@dataclass(frozen=True)
class NmseRecord:
    experiment: str
    radio_count: int
    hri_seconds: float
    q: int
    r: int
    solver: str
    dictionary: str
    kd_factor: float
    trial: int
    nmse: float
    mean_support_size: float
    mean_rank_z: float
    wall_time_s: float = field(compare=False)
    failed_segments: int = 0  # segments with a rank-deficient support, scored as zero


def substream_seed(master_seed, name, *index):
    """Integer seed for the named substream ``name`` at ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode()), *map(int, index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def nmse(x_hat: ComplexSignal, x: ComplexSignal):
    """``||x_hat - x||^2 / ||x||^2`` over the time span both signals cover.

    Raises
    ------
    InvalidArgumentError
        Different sample intervals, misaligned grids or no common span.
    UndefinedMetricError
        The reference is zero over the common span.
    """
    dt = x.sample_interval_seconds
    if not math.isclose(x_hat.sample_interval_seconds, dt, rel_tol=1e-9):
        raise InvalidArgumentError("signals have different sample intervals")
    offset = (x_hat.start_time_seconds - x.start_time_seconds) / dt
    shift = int(round(offset))
    if abs(offset - shift) > 1e-6:
        raise InvalidArgumentError("signals are not on a common sample grid")
    lo = max(0, shift)
    hi = min(len(x), shift + len(x_hat))
    if hi <= lo:
        raise InvalidArgumentError("signals do not overlap in time")
    ref = x.samples[lo:hi]
    est = x_hat.samples[lo - shift:hi - shift]
    den = np.vdot(ref, ref).real
    if den == 0:
        raise UndefinedMetricError("NMSE undefined for a zero reference")
    diff = est - ref
    return float(np.vdot(diff, diff).real / den)


def to_db(value):
    return DB_FLOOR if value <= 0 else max(DB_FLOOR, 10.0 * math.log10(value))


def segment_switches(hops, k0, k1, sample_interval):
    """True when some hop starts or ends strictly inside base-rate samples [k0, k1)."""
    t0, t1 = k0 * sample_interval, (k1 - 1) * sample_interval
    for h in hops:
        for edge in (h.start_seconds, h.start_seconds + h.duration_seconds):
            if t0 < edge <= t1:
                return True
    return False


def segment_true_supports(x: ComplexSignal, period, valid_range, r, radio_count,
                          threshold=DEFAULT_EPSILON):
    """Row supports of the exact slice decomposition over each width-r segment.

    A row counts as occupied when its segment energy exceeds ``threshold``
    times the energy one radio contributes over the segment on average
    (total signal power / N, times the width).
    """
    x_bb = slice_decompose(x, period)
    n = x_bb.shape[1]
    p_radio = np.vdot(x.samples[:n], x.samples[:n]).real / n / max(radio_count, 1)
    out = []
    start, stop = valid_range
    for k0 in range(start, stop, r):
        k1 = min(k0 + r, stop)
        ref = p_radio * (k1 - k0)
        out.append((k0, k1, row_support(x_bb[:, k0:k1], threshold, ref)))
    return out


class _Trial:
    """Signal and per-q aligned streams for one trial, built on first use."""

    def __init__(self, cfg: ExperimentConfig, trial):
        self.cfg = cfg
        self.trial = trial
        radios = make_radios(cfg.class_params, cfg.duration_seconds, cfg.freq_range,
                             seed=substream_seed(cfg.master_seed, "radios", trial))
        self.x, self.hops = synthesize_fh_signal(cfg.class_params, radios,
                                                 cfg.duration_seconds,
                                                 cfg.base_interval_seconds)
        self.observed = self.x
        if math.isfinite(cfg.snr_db):
            rng = np.random.default_rng(substream_seed(cfg.master_seed, "noise", trial))
            p = np.mean(np.abs(self.x.samples) ** 2) / 10 ** (cfg.snr_db / 10)
            noise = rng.normal(size=(2, len(self.x))) * math.sqrt(p / 2)
            self.observed = ComplexSignal(self.x.samples + noise[0] + 1j * noise[1],
                                          self.x.sample_interval_seconds)
        self._aligned = {}
        self._supports = {}

    def aligned(self, q):
        if q not in self._aligned:
            pattern = random_pattern(self.cfg.period, q,
                                     substream_seed(self.cfg.master_seed, "pattern", self.trial))
            mc = McConfig(self.cfg.base_interval_seconds, self.cfg.period, pattern)
            al = interpolate_and_align(sample(self.observed, mc), self.cfg.guard)
            self._aligned[q] = (al, build_measurement_matrix(mc))
        return self._aligned[q]

    def mean_true_support(self, valid_range, r):
        key = (valid_range, r)
        if key not in self._supports:
            segs = segment_true_supports(self.x, self.cfg.period, valid_range, r,
                                         self.cfg.radio_count, self.cfg.support_threshold)
            self._supports[key] = float(np.mean([len(s) for _, _, s in segs]))
        return self._supports[key]


def _run_point(cfg, trial_data: _Trial, experiment, q, r, solver, kd_factor):
    al, a = trial_data.aligned(q)
    segs = segment(al, r)
    factory = None
    if kd_factor:
        factory = dpss.dictionary_factory(cfg.period, kd_factor)
    sols = recover_segments(segs, a, solver, cfg.sparsity_for(q), cfg.residual_tol,
                            dictionary=factory, on_rank_error="zero")
    x_hat = reassemble(sols, al.config, al.origin_time)
    score = nmse(x_hat, trial_data.x)
    return NmseRecord(
        experiment, cfg.radio_count, cfg.min_hri_seconds, q, r, solver,
        "dpss" if kd_factor else "none", float(kd_factor or 0.0), trial_data.trial, score,
        trial_data.mean_true_support(al.valid_range, r),
        float(np.mean([s.rank_z for s in sols])),
        float(sum(s.wall_time_seconds for s in sols)),
        sum(s.failed for s in sols))


def _sort_key(rec: NmseRecord):
    return (rec.experiment, rec.solver, rec.dictionary, rec.kd_factor, rec.q, rec.r, rec.trial)


def _run_grid(cfg: ExperimentConfig, experiment, points):
    """Run ``points`` = [(q, r, solver, kd_factor)] for every trial."""

    def run_trial(trial):
        data = _Trial(cfg, trial)
        return [_run_point(cfg, data, experiment, *p) for p in points]

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(run_trial, range(cfg.trials)))
    else:
        chunks = [run_trial(t) for t in range(cfg.trials)]
    return sorted((rec for chunk in chunks for rec in chunk), key=_sort_key)


def run_nmse_vs_r(cfg: ExperimentConfig):
    """NMSE and mean true support size for every (q, r), first configured solver."""
    solver = cfg.solvers[0]
    points = [(q, r, solver, 0.0) for q in cfg.channel_counts for r in cfg.segment_list]
    return _run_grid(cfg, "nmse_vs_r", points)


def run_nmse_vs_q(cfg: ExperimentConfig):
    """NMSE per q and solver at r = round(T / (2 T_c)) unless r is configured."""
    r = cfg.segment_list[0]
    points = [(q, r, s, 0.0) for s in cfg.solvers for q in cfg.channel_counts]
    return _run_grid(cfg, "nmse_vs_q", points)


def run_dpss_comparison(cfg: ExperimentConfig):
    """S-OMP without a dictionary and with DPSS dictionaries for each kd factor."""
    r = cfg.segment_list[0]
    points = [(q, r, "somp", kd) for kd in (0.0,) + cfg.kd_factors for q in cfg.channel_counts]
    return _run_grid(cfg, "dpss", points)


def aggregate(records):
    """Mean over trials for each parameter combination, in sorted order."""
    groups = {}
    for rec in records:
        key = (rec.experiment, rec.radio_count, rec.hri_seconds, rec.q, rec.r, rec.solver,
               rec.dictionary, rec.kd_factor)
        groups.setdefault(key, []).append(rec)
    out = []
    for key in sorted(groups, key=lambda k: (k[0], k[5], k[6], k[7], k[3], k[4])):
        g = groups[key]
        out.append(dict(
            experiment=key[0], radio_count=key[1], hri_seconds=key[2], q=key[3], r=key[4],
            solver=key[5], dictionary=key[6], kd_factor=key[7], trials=len(g),
            nmse=float(np.mean([x.nmse for x in g])),
            mean_support_size=float(np.mean([x.mean_support_size for x in g])),
            mean_rank_z=float(np.mean([x.mean_rank_z for x in g])),
            wall_time_s=float(np.mean([x.wall_time_s for x in g])),
            failed_segments=int(sum(x.failed_segments for x in g))))
    return out


_FIGURES = {
    "fig5a": ("q", "r", "solver", "trials", "nmse", "nmse_db", "failed_segments"),
    "fig5b": ("r", "trials", "mean_support_size", "mean_rank_z"),
    "fig6": ("solver", "q", "r", "trials", "nmse", "nmse_db", "failed_segments"),
    "fig7": ("dictionary", "kd_factor", "q", "r", "trials", "nmse", "nmse_db",
             "failed_segments"),
    "fig8": ("dictionary", "kd_factor", "q", "r", "trials", "wall_time_s"),
}


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.12e}"
    return str(value)


def write_figure_csv(path, figure, rows):
    cols = _FIGURES[figure]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        seen = set()
        for row in rows:
            row = dict(row, nmse_db=to_db(row["nmse"]))
            line = tuple(_fmt(row[c]) for c in cols)
            if line not in seen:  # fig5b repeats support rows for every q
                seen.add(line)
                w.writerow(line)


def config_text(cfg: ExperimentConfig):
    items = asdict(cfg)
    items.pop("output_dir")
    items.pop("workers")
    return "".join(f"{k}={items[k]!r}\n" for k in sorted(items))


def content_hash(text):
    """Git blob hash of ``text``."""
    data = text.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(out_dir, cfg: ExperimentConfig, experiments):
    text = config_text(cfg)
    seeds = {f"seed.{name}.{t}": substream_seed(cfg.master_seed, name, t)
             for name in ("radios", "pattern") for t in range(cfg.trials)}
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write(text)
        for k, v in seeds.items():
            fh.write(f"{k}={v}\n")
        fh.write(f"experiments={','.join(experiments)}\n")
        fh.write(f"config_hash={content_hash(text)}\n")


def emit(cfg: ExperimentConfig, experiment, records, out_dir=None):
    """Write the figure CSVs for one experiment plus the run manifest."""
    out_dir = out_dir or cfg.output_dir
    if not out_dir:
        raise InvalidArgumentError("no output directory configured")
    os.makedirs(out_dir, exist_ok=True)
    rows = aggregate(records)
    figures = {"nmse_vs_r": ("fig5a", "fig5b"), "nmse_vs_q": ("fig6",),
               "dpss": ("fig7", "fig8")}[experiment]
    for fig in figures:
        write_figure_csv(os.path.join(out_dir, f"{fig}.csv"), fig, rows)
    write_manifest(out_dir, cfg, figures)
    return [os.path.join(out_dir, f"{f}.csv") for f in figures]


def spectrogram_data(x: ComplexSignal, window, hop):
    """Power in dB of a Hann-windowed short-time FFT.

    Returns
    -------
    freqs : ndarray
        Bin frequencies in Hz over ``[0, 1/dt)``.
    times : ndarray
        Frame centre times in seconds.
    power_db : ndarray
        ``(window, frames)`` grid, floored at -300 dB.
    """
    if int(window) != window or window < 16:
        raise InvalidArgumentError("window must be an integer >= 16")
    if int(hop) != hop or hop < 1:
        raise InvalidArgumentError("hop must be a positive integer")
    if len(x) < window:
        raise InvalidArgumentError("signal shorter than one window")
    window, hop = int(window), int(hop)
    starts = np.arange(0, len(x) - window + 1, hop)
    frames = x.samples[starts[:, None] + np.arange(window)[None, :]]
    spec = np.fft.fft(frames * np.hanning(window)[None, :], axis=1).T
    power = np.abs(spec) ** 2
    with np.errstate(divide="ignore"):
        db = np.maximum(10.0 * np.log10(power), DB_FLOOR)
    dt = x.sample_interval_seconds
    freqs = np.arange(window) / (window * dt)
    times = x.start_time_seconds + (starts + window / 2) * dt
    return freqs, times, db


def write_spectrogram_csv(path, freqs, times, power_db):
    """Rows are frequency bins; the header row lists frame times."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_hz"] + [_fmt(float(t)) for t in times])
        for f, row in zip(freqs, power_db):
            w.writerow([_fmt(float(f))] + [f"{v:.6f}" for v in row])
