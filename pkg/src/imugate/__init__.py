"""Streaming activity-change gate for 6-axis IMU data, with its evaluation harness."""

from .calibration import CalibrationResult, LabeledNccSeries, calibrate, collect, fit_threshold
from .cusum import Cusum, CusumConfig, run_cusum
from .datasets import LabeledStream, Segment, SynthSpec, load_uca_ehar, load_wisdm, synth, synthetic_suite
from .dispersion import DispersionAccumulator, rank_features
from .errors import (
    DataFormatError,
    DegenerateInputError,
    DegenerateTemplateError,
    EmptyStreamError,
    EmptyWindowError,
    ImuGateError,
    InsufficientDataError,
    ProtocolError,
)
from .evaluation import ConfusionCounts, CostReport, WindowTruth, cost_model, metrics, relaxed_match
from .features import FEATURE_NAMES, FeatureExtractor, FeatureVector, Sample
from .gate import Gate, GateConfig, WindowVerdict, flops_per_step, run_gate, state_size_bytes
from .template import Template, build, ncc, similarity

__version__ = "0.1.0"
