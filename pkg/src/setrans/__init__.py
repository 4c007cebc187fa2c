"""setrans: squeeze-excitation + Transformer toolkit for environmental sound tasks."""

from .augment import FMixConfig, fmix, fmix_batch, mixup, mixup_batch, spec_augment
from .data_io import (
    LabeledClip,
    load_checkpoint,
    load_manifest,
    read_wav,
    save_checkpoint,
    save_manifest,
    synth_asc,
    synth_asd,
    synth_ust,
    write_dataset,
    write_wav,
)
from .errors import (
    ConfigError,
    CorruptionError,
    FormatError,
    InputError,
    SetransError,
    ShapeError,
)
from .features import TASK_CONFIGS, AudioClip, FeatureConfig, context_windows, log_mel
from .model import ModelConfig, SETrans, config_for_task
from .objectives import (
    EvalReport,
    anomaly_score,
    auprc,
    bce_loss,
    ce_loss,
    macro_acc,
    macro_auprc,
    micro_auprc,
    micro_f1,
    pauc,
    pr_curve,
    roc_auc,
    roc_curve,
)
from .tensor import Tensor, no_grad
from .training import (
    AdamState,
    TaskData,
    TrainConfig,
    adam_step,
    build_task_data,
    evaluate,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "no_grad",
    "SetransError",
    "ShapeError",
    "InputError",
    "ConfigError",
    "FormatError",
    "CorruptionError",
    "AudioClip",
    "FeatureConfig",
    "TASK_CONFIGS",
    "log_mel",
    "context_windows",
    "FMixConfig",
    "fmix",
    "fmix_batch",
    "mixup",
    "mixup_batch",
    "spec_augment",
    "ModelConfig",
    "SETrans",
    "config_for_task",
    "EvalReport",
    "ce_loss",
    "bce_loss",
    "macro_acc",
    "micro_f1",
    "pr_curve",
    "auprc",
    "macro_auprc",
    "micro_auprc",
    "anomaly_score",
    "roc_auc",
    "roc_curve",
    "pauc",
    "TrainConfig",
    "AdamState",
    "adam_step",
    "TaskData",
    "train",
    "evaluate",
    "build_task_data",
    "LabeledClip",
    "read_wav",
    "write_wav",
    "load_manifest",
    "save_manifest",
    "write_dataset",
    "save_checkpoint",
    "load_checkpoint",
    "synth_asc",
    "synth_ust",
    "synth_asd",
    "__version__",
]
