"""Sapinet: event-driven spiking network for one-shot online odor learning.

Glomerular data regularization feeds a gamma-discretized spike-precedence
code into a recurrent mitral/granule attractor with STDP-learned receptive
fields, inhibitory-drive pattern completion and use-dependent neurogenesis.
"""

from .core import ApicalDendrite, CellParams, GammaClock, GranuleCell, MitralSoma
from .datagen import NoiseSpec, OdorSeriesSpec, add_gaussian_noise, add_impulse_noise, generate_series
from .epl import EplConfig, EplState, StdpConfig, build_network, run_sniff, train_one_shot, tunable_sigmoid
from .estimator import SapinetClassifier, load_pipeline, save_pipeline
from .glomerular import GlomerularPreprocessor, PreprocessConfig, normalize_intensity, scale
from .readout import (
    NONE_OF_THE_ABOVE,
    ClassifierConfig,
    Prediction,
    classify,
    cluster_distances,
    goodness_of_preprocessing,
    interneuron_overlap,
    jaccard_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "ApicalDendrite", "CellParams", "GammaClock", "GranuleCell", "MitralSoma",
    "NoiseSpec", "OdorSeriesSpec", "add_gaussian_noise", "add_impulse_noise", "generate_series",
    "EplConfig", "EplState", "StdpConfig", "build_network", "run_sniff", "train_one_shot",
    "tunable_sigmoid", "SapinetClassifier", "load_pipeline", "save_pipeline",
    "GlomerularPreprocessor", "PreprocessConfig", "normalize_intensity", "scale",
    "NONE_OF_THE_ABOVE", "ClassifierConfig", "Prediction", "classify", "cluster_distances",
    "goodness_of_preprocessing", "interneuron_overlap", "jaccard_similarity",
    "__version__",
]
