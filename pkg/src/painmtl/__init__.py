"""Personalized pain recognition from skin conductance and ECG windows.

Raw 5.5 s windows are reduced to 17 hand-crafted features (12 skin
conductance, 5 heart rate variability) and classified by population
baselines or by a multi-task network with a shared hidden layer and one
person-specific hidden layer per subject.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .baselines import LinearModel, predict_linear, train_linear_svm, train_logistic
from .data import (
    ClassLabel,
    Dataset,
    Sample,
    SynthConfig,
    binary_view,
    kfold_split,
    load_csv,
    save_csv,
    synthesize_dataset,
    synthesize_ecg,
)
from .errors import *  # noqa: F401,F403
from .evaluation import CvReport, ExperimentSettings, ExperimentSpec, report_table, run_experiment
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    apply_standardization,
    extract_features,
    fit_standardization,
    hrv_features,
    sc_features,
)
from .nn import NetworkParams, NetworkSpec, TrainConfig, backward, forward, init_params, train
from .signal import BandpassSpec, SampledSignal, bandpass_filter, detect_r_peaks, ibi_series
