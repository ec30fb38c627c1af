"""EEG mental-fatigue pipeline bindings."""

from ._core import (
    CHANNELS,
    CUBE_SIZE,
    CnnModel,
    FatigueError,
    FlatClassifier,
    build_cube,
    combination_channels,
    confusion,
    design_bandpass,
    extract_features,
    filter_gain,
    kfold,
    make_split,
    metrics,
    periodogram,
    resolve_config,
    run,
    shannon_entropy,
    synth_session,
    time_stats,
    train_cnn,
    train_flat,
)

__all__ = [
    "CHANNELS",
    "CUBE_SIZE",
    "CnnModel",
    "FatigueError",
    "FlatClassifier",
    "build_cube",
    "combination_channels",
    "confusion",
    "design_bandpass",
    "extract_features",
    "filter_gain",
    "kfold",
    "make_split",
    "metrics",
    "periodogram",
    "resolve_config",
    "run",
    "shannon_entropy",
    "synth_session",
    "time_stats",
    "train_cnn",
    "train_flat",
]
