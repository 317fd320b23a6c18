"""Dual-layer GAN for multivariate time-series synthesis."""

from ._dlgan import (
    Ablation,
    DlganError,
    LossRecord,
    Trainer,
    TrainingConfig,
    discriminative_score,
    load_csv,
    make_sine,
    predictive_scores,
    synthesize_from_checkpoint,
    tsne,
)

__all__ = [
    "Ablation",
    "DlganError",
    "LossRecord",
    "Trainer",
    "TrainingConfig",
    "discriminative_score",
    "load_csv",
    "make_sine",
    "predictive_scores",
    "synthesize_from_checkpoint",
    "tsne",
]
__version__ = "0.1.0"
