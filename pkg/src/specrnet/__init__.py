"""Spectrogram-based audio deepfake detection toolkit."""

from .audio import AudioClip, load_wav, normalize_length, preprocess, resample, trim_silence
from .lfcc import LfccConfig, lfcc
from .manifest import (
    DatasetManifest,
    ManifestRecord,
    build_manifest,
    oversample_balance,
    read_manifest,
    split_manifest,
    write_manifest,
)
from .metrics import EvalReport, auc, eer, evaluate_scores, roc_curve
from .model import (
    DEFAULT_CONFIG,
    EXPECTED_PARAM_COUNT,
    SpecRNet,
    SpecRNetConfig,
    build,
    count_parameters,
    load_weights,
    save_weights,
)
from .training import TrainConfig, TrainResult, evaluate, extract_features, train

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "DatasetManifest", "DEFAULT_CONFIG", "EXPECTED_PARAM_COUNT",
    "EvalReport", "LfccConfig", "ManifestRecord", "SpecRNet", "SpecRNetConfig",
    "TrainConfig", "TrainResult", "auc", "build", "build_manifest",
    "count_parameters", "eer", "evaluate", "evaluate_scores",
    "extract_features", "lfcc", "load_wav", "load_weights",
    "normalize_length", "oversample_balance", "preprocess", "read_manifest",
    "resample", "roc_curve", "save_weights", "split_manifest", "train",
    "trim_silence", "write_manifest",
]
