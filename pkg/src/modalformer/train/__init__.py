from .config import LOSS_TERMS, ConfigError, TrainConfig
from .data import Sample, crop_and_augment, dihedral, dihedral_inverse, sample_batch
from .evaluate import EvalResult, enhance_full, evaluate, pad_to_multiple
from .loop import (
    TrainingDiverged,
    TrainState,
    init_state,
    load_checkpoint,
    resolve_checkpoint,
    save_checkpoint,
    train,
    train_step,
)
from .optim import Adam, adam_step, clip_by_global_norm, cosine_lr, global_norm

__all__ = [
    "LOSS_TERMS",
    "Adam",
    "ConfigError",
    "EvalResult",
    "Sample",
    "TrainConfig",
    "TrainState",
    "TrainingDiverged",
    "adam_step",
    "clip_by_global_norm",
    "cosine_lr",
    "crop_and_augment",
    "dihedral",
    "dihedral_inverse",
    "enhance_full",
    "evaluate",
    "global_norm",
    "init_state",
    "load_checkpoint",
    "pad_to_multiple",
    "resolve_checkpoint",
    "sample_batch",
    "save_checkpoint",
    "train",
    "train_step",
]
