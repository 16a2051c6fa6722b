"""Shared data carrier and exception types."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidArgumentError(ValueError):
    """A precondition on an argument was violated."""


class UnsupportedError(ValueError):
    """The request is valid in principle but outside what is implemented."""


class UndefinedMetricError(ValueError):
    """A metric has no defined value for the given inputs."""


class NumericalRankError(np.linalg.LinAlgError):
    """A restricted measurement matrix is numerically rank deficient.

    Attributes
    ----------
    support : tuple of int
        The column indices that produced the deficient submatrix.
    """

    def __init__(self, message, support=()):
        super().__init__(message)
        self.support = tuple(int(s) for s in support)


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband stream.

    ``samples[n]`` is the value at ``start_time_seconds + n * sample_interval_seconds``.
    """

    samples: np.ndarray
    sample_interval_seconds: float
    start_time_seconds: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidArgumentError("samples must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise InvalidArgumentError("samples must be finite")
        if not self.sample_interval_seconds > 0:
            raise InvalidArgumentError("sample_interval_seconds must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_interval_seconds", float(self.sample_interval_seconds))
        object.__setattr__(self, "start_time_seconds", float(self.start_time_seconds))

    def __len__(self):
        return self.samples.size

    @property
    def times(self):
        n = np.arange(self.samples.size)
        return self.start_time_seconds + n * self.sample_interval_seconds

    @property
    def duration_seconds(self):
        return self.samples.size * self.sample_interval_seconds

    def energy(self):
        return float(np.vdot(self.samples, self.samples).real)
