"""Multi-coset sub-Nyquist acquisition and segment-based recovery of frequency-hopping signals."""

from .core import (ComplexSignal, InvalidArgumentError, NumericalRankError, UndefinedMetricError,
                   UnsupportedError)
from .dpss import DpssDictionary, approximation_error, compute_dpss, lift, reduce
from .experiments import ExperimentConfig, NmseRecord, nmse
from .fh_signal import (FhClassParams, HopRecord, RadioConfig, synthesize_fh_signal,
                        synthesize_multiband_signal)
from .mc_sampler import CosetStreams, McConfig, MeasurementMatrix, build_measurement_matrix, sample
from .preprocessing import AlignedStreams, SegmentMatrix, interpolate_and_align, segment
from .recovery import (SegmentSolution, SupportSet, UniquenessReport, least_squares_on_support,
                       music_support, reassemble, recover_segments, somp_solve,
                       uniqueness_report)

__version__ = "0.1.0"
