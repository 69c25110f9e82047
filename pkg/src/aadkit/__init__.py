"""Auditory attention decoding toolkit.

Pipeline: audio -> feature representation (envelope / mel spectrogram /
PCA-reduced deep embeddings), EEG -> preprocessing at 64 Hz, then a
time-delayed ridge decoder reconstructs the stimulus features from EEG and
windowed correlations classify the attended vs unattended stream.
"""

from .core import EMBEDDING_MODELS, FeatureSpec, TimeSeries
from .decoder import (CovarianceAccumulator, Decoder, LagConfig, accumulate,
                      build_lagged_design, loo_cv_lambda, reconstruct,
                      solve_ridge, weight_energy_profile)
from .dsp import FilterConfig, NormStats, zscore_apply, zscore_fit
from .errors import (AadkitError, ConfigurationError, CorruptionError,
                     DegenerateRankError, FormatError, NumericalError,
                     ResolutionError, ValidationError)
from .evaluate import (EvaluationReport, chance_level, decide_window,
                       evaluate_subject, window_correlation)
from .features import (PcaModel, assemble_layers, extract_envelope,
                       extract_melspec, pca_apply, pca_fit)
from .manifest import DatasetManifest, TrialRef, load_manifest
from .matio import read_matrix, write_matrix, write_matrix_atomic
from .synth import SynthConfig, generate_dataset, oracle_least_squares

__version__ = "0.1.0"
