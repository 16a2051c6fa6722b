"""Multi-coset MC(T_c, L, q, C) sampler and its measurement matrix."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ComplexSignal, InvalidArgumentError, UnsupportedError

SPARK_MAX_L = 20
RANK_RTOL = 1e-9


@dataclass(frozen=True)
class McConfig:
    base_interval_seconds: float
    period: int
    pattern: tuple

    def __post_init__(self):
        pattern = tuple(int(c) for c in self.pattern)
        if not self.base_interval_seconds > 0:
            raise InvalidArgumentError("base interval T_c must be positive")
        if int(self.period) != self.period or self.period < 1:
            raise InvalidArgumentError("period L must be a positive integer")
        if not pattern:
            raise InvalidArgumentError("pattern must contain at least one coset")
        if len(set(pattern)) != len(pattern):
            raise InvalidArgumentError("pattern entries must be distinct")
        if min(pattern) < 0 or max(pattern) >= self.period:
            raise InvalidArgumentError("pattern entries must lie in [0, L-1]")
        object.__setattr__(self, "period", int(self.period))
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "base_interval_seconds", float(self.base_interval_seconds))

    @property
    def channel_count(self):
        return len(self.pattern)

    @property
    def average_rate(self):
        return self.channel_count / (self.period * self.base_interval_seconds)

    @property
    def slice_width_hz(self):
        return 1.0 / (self.period * self.base_interval_seconds)


@dataclass(frozen=True)
class CosetStreams:
    streams: np.ndarray  # (q, M)
    config: McConfig
    origin_time: float = 0.0

    @property
    def length(self):
        return self.streams.shape[1]

    def sample_times(self, i):
        cfg = self.config
        k = np.arange(self.length)
        return self.origin_time + (k * cfg.period + cfg.pattern[i]) * cfg.base_interval_seconds


@dataclass(frozen=True)
class MeasurementMatrix:
    entries: np.ndarray  # (q, L)
    config: McConfig

    @property
    def shape(self):
        return self.entries.shape


def sample(x: ComplexSignal, config: McConfig) -> CosetStreams:
    """Decimate a dense T_c-rate stream into the q coset streams y_i(k) = x((kL + c_i) T_c).

    The input is truncated to a whole number of periods so that every stream
    has the same length.
    """
    tc = config.base_interval_seconds
    if not math.isclose(x.sample_interval_seconds, tc, rel_tol=1e-9):
        raise InvalidArgumentError(
            f"input interval {x.sample_interval_seconds:g} s != base interval {tc:g} s")
    m = len(x) // config.period
    if m < 1:
        raise InvalidArgumentError("input shorter than one sampling period")
    frames = x.samples[: m * config.period].reshape(m, config.period)
    streams = np.ascontiguousarray(frames[:, list(config.pattern)].T)
    return CosetStreams(streams, config, x.start_time_seconds)


def build_measurement_matrix(config: McConfig) -> MeasurementMatrix:
    c = np.asarray(config.pattern)[:, None]
    l = np.arange(config.period)[None, :]
    # integer product mod L keeps the phases exact for large c*l
    entries = np.exp(2j * np.pi * ((c * l) % config.period) / config.period)
    return MeasurementMatrix(entries, config)


def random_pattern(period, count, seed):
    """q distinct coset offsets drawn uniformly without replacement, sorted.

    The draw is the first q entries of a seeded permutation of {0..L-1}, so
    for a fixed seed the pattern for q is contained in the pattern for q + 1.
    """
    if count < 1 or period < 1:
        raise InvalidArgumentError("L and q must be positive")
    if count > period:
        raise InvalidArgumentError(f"q = {count} exceeds L = {period}")
    rng = np.random.default_rng(seed)
    return tuple(sorted(int(c) for c in rng.permutation(period)[:count]))


def _batched_rank_deficient(entries, subsets):
    sub = entries[:, subsets]  # (q, batch, k)
    sub = np.moveaxis(sub, 1, 0)
    s = np.linalg.svd(sub, compute_uv=False)
    return s[:, -1] <= RANK_RTOL * s[:, 0]


def spark(matrix: MeasurementMatrix) -> int:
    """Exact spark by exhaustive search over column subsets (L <= 20)."""
    entries = matrix.entries
    q, big_l = entries.shape
    if big_l > SPARK_MAX_L:
        raise UnsupportedError(
            f"exhaustive spark limited to L <= {SPARK_MAX_L}; use coherence_bound")
    for k in range(1, min(q, big_l) + 1):
        combos = itertools.combinations(range(big_l), k)
        while True:
            chunk = list(itertools.islice(combos, 20000))
            if not chunk:
                break
            if np.any(_batched_rank_deficient(entries, np.asarray(chunk))):
                return k
    # every q columns are independent; any q+1 are dependent when L > q
    return q + 1 if big_l > q else big_l + 1


def mutual_coherence(matrix: MeasurementMatrix) -> float:
    a = matrix.entries
    a = a / np.linalg.norm(a, axis=0, keepdims=True)
    gram = np.abs(a.conj().T @ a)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max()) if gram.size > 1 else 0.0


def coherence_bound(matrix: MeasurementMatrix) -> float:
    """Lower bound spark(A) >= 1 + 1/mu(A)."""
    mu = mutual_coherence(matrix)
    return math.inf if mu == 0 else 1.0 + 1.0 / mu


def spark_or_bound(matrix: MeasurementMatrix):
    """Exact spark for small L, otherwise a coherence lower bound with a warning.

    Returns ``(value, exact)``.
    """
    try:
        return spark(matrix), True
    except UnsupportedError:
        warnings.warn("L too large for exact spark; reporting coherence lower bound",
                      RuntimeWarning, stacklevel=2)
        return coherence_bound(matrix), False


def signed_bins(m):
    """DFT bin indices of a length-m transform in [-m/2, m/2) order-preserving."""
    k = np.arange(m)
    return np.where(k < m - m // 2, k, k - m)


def frequency_domain_residual(x: ComplexSignal, streams: CosetStreams) -> float:
    """Check y(f) = A x(f) on the DFT grid of the record.

    ``y_i(f) = L T_c exp(-j 2 pi f c_i T_c) Y_i(f)`` from the coset stream DFTs
    and ``X_l(f) = T_c X(f + l/(L T_c))`` from the dense-record DFT, on the
    common grid ``f_m = m / (M L T_c)``, ``m`` in ``[-M/2, M/2)``. Returns
    ``||y - A x||_F / ||A x||_F`` (0 for zero input).
    """
    cfg = streams.config
    big_l, m = cfg.period, streams.length
    n = m * big_l
    if len(x) < n:
        raise InvalidArgumentError("dense record shorter than the coset streams")
    if not math.isclose(x.sample_interval_seconds, cfg.base_interval_seconds, rel_tol=1e-9):
        raise InvalidArgumentError("dense record interval differs from T_c")
    tc = cfg.base_interval_seconds
    mk = signed_bins(m)
    c = np.asarray(cfg.pattern)[:, None]
    y_dft = np.fft.fft(streams.streams, axis=1)
    y = big_l * tc * np.exp(-2j * np.pi * mk[None, :] * c / n) * y_dft
    x_dft = tc * np.fft.fft(x.samples[:n])
    idx = (mk[None, :] + m * np.arange(big_l)[:, None]) % n
    slices = x_dft[idx]  # (L, M)
    a = build_measurement_matrix(cfg).entries
    ax = a @ slices
    denom = np.linalg.norm(ax)
    if denom == 0:
        return 0.0 if np.linalg.norm(y) == 0 else math.inf
    return float(np.linalg.norm(y - ax) / denom)
