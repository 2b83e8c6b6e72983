"""Unsupervised fault diagnostics for rotating machinery.

Vibration windows are reduced to a 37-feature vector (nine statistics per
axis in time and frequency domains, plus ambient temperature), clustered
with a Gaussian mixture fitted by EM (cluster count chosen by silhouette
with a WSS curve for elbow confirmation), diagnosed by codified spectrum
rules, and explained with random-forest permutation importance per
machine state.
"""

__version__ = "0.1.0"

from .clustering import GmmModel, em_fit, hard_assign, select_k, silhouette, wss
from .diagnosis import DiagnosisThresholds, classify_state, indicators, map_clusters
from .errors import VibrodiagError
from .features import (
    FEATURE_NAMES,
    FeatureMatrix,
    FeatureVector,
    Standardizer,
    apply_standardizer,
    extract,
    extract_matrix,
    fit_standardizer,
    freq_band_stats,
    summary_stats,
)
from .forest import (
    ImportanceReport,
    RandomForest,
    TuningReport,
    fit_forest,
    kappa,
    oob_error,
    permutation_importance,
    predict,
    predict_batch,
    sample_per_cluster,
    stratified_split,
    tune_mtry,
)
from .signals import (
    MachineState,
    ScenarioSegment,
    SignalWindow,
    Spectrum,
    SyntheticScenario,
    fft_magnitude,
    generate_scenario,
    generate_window,
)

__all__ = [
    "__version__",
    "VibrodiagError",
    "MachineState",
    "SignalWindow",
    "Spectrum",
    "ScenarioSegment",
    "SyntheticScenario",
    "fft_magnitude",
    "generate_window",
    "generate_scenario",
    "FEATURE_NAMES",
    "FeatureVector",
    "FeatureMatrix",
    "Standardizer",
    "summary_stats",
    "freq_band_stats",
    "extract",
    "extract_matrix",
    "fit_standardizer",
    "apply_standardizer",
    "GmmModel",
    "em_fit",
    "hard_assign",
    "select_k",
    "silhouette",
    "wss",
    "RandomForest",
    "TuningReport",
    "ImportanceReport",
    "fit_forest",
    "predict",
    "predict_batch",
    "oob_error",
    "kappa",
    "tune_mtry",
    "permutation_importance",
    "stratified_split",
    "sample_per_cluster",
    "DiagnosisThresholds",
    "indicators",
    "classify_state",
    "map_clusters",
]
