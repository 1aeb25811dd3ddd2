"""Knowledge distillation: losses, presets, configuration and distillers."""

from distillation.losses import (
    IGNORE_INDEX,
    FeaturePair,
    Projection,
    SoftLabelInputs,
    attention_loss,
    cos_loss,
    fsp_loss,
    hard_label_loss,
    hidden_mse_loss,
    kd_ce_loss,
    kd_mse_loss,
    nst_loss,
    pkd_loss,
    probability_shift,
    softmax_with_temperature,
)
from distillation.presets import (
    LossKind,
    LossRegistry,
    SchedulerKind,
    default_registry,
    evaluate_temperature_scheduler,
    evaluate_weight_scheduler,
    register_loss,
    register_scheduler,
)
from distillation.config import (
    DistillationConfig,
    IntermediateMatch,
    TrainingConfig,
    parse_distillation_config,
    parse_training_config,
    serialize_config,
    validate_against_specs,
)
from distillation.adaptors import AdaptorOutput, default_adaptor, minimal_adaptor, run_adaptor
from distillation.audit import LOSS_LOG_NAME, LossLog, TrainingAuditLogger, loss_summary, read_loss_log, smoothed_trend
from distillation.checkpoints import compute_checkpoint_steps
from distillation.optimizer import Adam, LinearWarmupSchedule, OptimizerState, adam_step, clip_grad_norm
from distillation.trainer import BaseTrainer, BasicTrainer
from distillation.distillers import (
    BasicDistiller,
    GeneralDistiller,
    MultiTaskDistiller,
    MultiTeacherDistiller,
    TaskSpec,
    sample_task_order,
)

__all__ = [
    "IGNORE_INDEX",
    "FeaturePair",
    "Projection",
    "SoftLabelInputs",
    "attention_loss",
    "cos_loss",
    "fsp_loss",
    "hard_label_loss",
    "hidden_mse_loss",
    "kd_ce_loss",
    "kd_mse_loss",
    "nst_loss",
    "pkd_loss",
    "probability_shift",
    "softmax_with_temperature",
    "LossKind",
    "LossRegistry",
    "SchedulerKind",
    "default_registry",
    "evaluate_temperature_scheduler",
    "evaluate_weight_scheduler",
    "register_loss",
    "register_scheduler",
    "DistillationConfig",
    "IntermediateMatch",
    "TrainingConfig",
    "parse_distillation_config",
    "parse_training_config",
    "serialize_config",
    "validate_against_specs",
    "AdaptorOutput",
    "default_adaptor",
    "minimal_adaptor",
    "run_adaptor",
    "LOSS_LOG_NAME",
    "LossLog",
    "TrainingAuditLogger",
    "loss_summary",
    "read_loss_log",
    "smoothed_trend",
    "compute_checkpoint_steps",
    "Adam",
    "LinearWarmupSchedule",
    "OptimizerState",
    "adam_step",
    "clip_grad_norm",
    "BaseTrainer",
    "BasicTrainer",
    "BasicDistiller",
    "GeneralDistiller",
    "MultiTaskDistiller",
    "MultiTeacherDistiller",
    "TaskSpec",
    "sample_task_order",
]
