"""Checkpoint placement and student saving."""

import logging
from pathlib import Path
from typing import List, Union

from engine import ValidationError
from models.weights import save_weights
from models.zoo import Model


logger = logging.getLogger(__name__)


def compute_checkpoint_steps(
    steps_per_epoch: int,
    num_epochs: int,
    ckpt_frequency: int,
    epoch_frequency: int = 1,
) -> List[int]:
    """
    Global steps (1-based) at which the student is saved and the callback runs.

    Within each epoch e whose number is divisible by `epoch_frequency`,
    checkpoints fall at (e-1)·S + ⌊S·j/f⌋ for j = 1..f. The last step of
    training is always a checkpoint.

    Args:
        steps_per_epoch: S, batches per epoch
        num_epochs: E
        ckpt_frequency: f, checkpoints per epoch
        epoch_frequency: Keep checkpoints only in every k-th epoch

    Returns:
        Sorted, duplicate-free step list

    Raises:
        ValidationError: If any argument is < 1, or f > S

    Examples:
        >>> compute_checkpoint_steps(100, 2, 2)
        [50, 100, 150, 200]
        >>> compute_checkpoint_steps(10, 1, 3)
        [3, 6, 10]
    """
    errors = []
    for name, value in (
        ("steps_per_epoch", steps_per_epoch),
        ("num_epochs", num_epochs),
        ("ckpt_frequency", ckpt_frequency),
        ("ckpt_epoch_frequency", epoch_frequency),
    ):
        if value < 1:
            errors.append(f"{name}: must be >= 1, got {value}")
    if not errors and ckpt_frequency > steps_per_epoch:
        errors.append(
            f"ckpt_frequency: {ckpt_frequency} checkpoints per epoch exceed {steps_per_epoch} steps per epoch"
        )
    if errors:
        raise ValidationError(errors)

    steps = set()
    for epoch in range(1, num_epochs + 1):
        if epoch % epoch_frequency:
            continue
        offset = (epoch - 1) * steps_per_epoch
        for j in range(1, ckpt_frequency + 1):
            steps.add(offset + (steps_per_epoch * j) // ckpt_frequency)
    steps.add(num_epochs * steps_per_epoch)
    return sorted(steps)


def checkpoint_path(output_dir: Union[str, Path], global_step: int) -> Path:
    return Path(output_dir) / f"gs{global_step}"


def save_checkpoint(model: Model, output_dir: Union[str, Path], global_step: int) -> Path:
    """Write the student's weights to `output_dir/gs{global_step}`."""
    path = save_weights(model, checkpoint_path(output_dir, global_step))
    logger.info(f"Saved checkpoint {path}")
    return path
