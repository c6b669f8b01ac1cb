"""Training harness: optimizer, corpus, checkpoints, loop, probe."""

from .checkpoint import CheckpointState, load_checkpoint, save_checkpoint
from .corpus import CorpusConfig, CorpusItem, SyntheticCorpus, make_synthetic_corpus
from .loop import (
    CHECKPOINT_NAME,
    DIVERGENCE_LIMIT,
    METRICS_NAME,
    TrainConfig,
    TrainResult,
    train,
)
from .optim import AdamState, LrSchedule, adam_step, lr_at
from .probe import ProbeConfig, ProbeResult, encoder_features, probe_singer_accuracy

__all__ = [
    "AdamState", "LrSchedule", "adam_step", "lr_at",
    "CorpusConfig", "CorpusItem", "SyntheticCorpus", "make_synthetic_corpus",
    "CheckpointState", "load_checkpoint", "save_checkpoint",
    "TrainConfig", "TrainResult", "train",
    "CHECKPOINT_NAME", "DIVERGENCE_LIMIT", "METRICS_NAME",
    "ProbeConfig", "ProbeResult", "encoder_features", "probe_singer_accuracy",
]
