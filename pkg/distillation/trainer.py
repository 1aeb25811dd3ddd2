"""
Shared training loop and the supervised BasicTrainer.

Every trainer and distiller runs the same loop: for each batch, compute a
scalar loss, back-propagate, optionally clip, take an optimizer step, log
the loss terms, and at checkpoint steps save the student then call the
callback. Subclasses only decide how a batch becomes a loss.
"""

import logging
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence

from tqdm import tqdm

from distillation.adaptors import AdaptorOutput, run_adaptor
from distillation.audit import LOSS_LOG_NAME, LossLog, TrainingAuditLogger
from distillation.checkpoints import compute_checkpoint_steps, save_checkpoint
from distillation.config import TrainingConfig
from distillation.events import Adaptor, Callback
from distillation.losses import hard_label_loss
from distillation.optimizer import Adam, clip_grad_norm
from engine import ConfigurationError, ContractError, Tensor
from models.zoo import Model


logger = logging.getLogger(__name__)


@dataclass
class LossTerms:
    """
    Loss of one batch.

    Attributes:
        total: Scalar tensor that is back-propagated
        logged: Name -> value pairs written to the loss log, in order
    """

    total: Tensor
    logged: "OrderedDict[str, float]" = field(default_factory=OrderedDict)


def sum_terms(terms: Sequence[Tensor]) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


class BaseTrainer(ABC):
    """
    Training loop shared by every trainer and distiller.

    Attributes:
        train_config: Logging, checkpoint, clipping and seed settings
        model: The model being trained (the student for distillers)
    """

    def __init__(
        self,
        train_config: TrainingConfig,
        model: Model,
        audit: Optional[TrainingAuditLogger] = None,
        show_progress: bool = False,
    ):
        self.train_config = train_config
        self.model = model
        self.audit = audit or TrainingAuditLogger()
        self.show_progress = show_progress
        self.global_step = 0

    @property
    def name(self) -> str:
        return type(self).__name__

    @abstractmethod
    def compute_loss(self, batch: Any, progress: float) -> LossTerms:
        """
        Loss of one batch at a point of training.

        Args:
            batch: One item of the epoch's batch stream
            progress: global_step / total_steps, in (0, 1]
        """

    def teachers(self) -> List[Model]:
        return []

    def prepare_optimizer(self, optimizer: Adam) -> None:
        """Hook for registering extra trainable tensors (projections)."""

    def steps_per_epoch(self, dataloader: Any) -> int:
        return len(dataloader)

    def epoch_batches(self, dataloader: Any, epoch: int) -> Iterable[Any]:
        return dataloader

    def before_optimizer_step(self, optimizer: Adam) -> None:
        """Hook run after backward and before clipping."""

    def describe(self) -> Dict[str, Any]:
        return {"seed": self.train_config.seed}

    def train(
        self,
        optimizer: Adam,
        dataloader: Any,
        num_epochs: int,
        callback: Optional[Callback] = None,
        lr_schedule: Optional[Callable[[int], float]] = None,
    ) -> Model:
        """
        Run the training loop.

        Args:
            optimizer: Adam over the model's trainable parameters
            dataloader: Sized iterable of batches, re-iterated every epoch
            num_epochs: Number of passes over the dataloader
            callback: Called as callback(model, global_step) at every
                checkpoint, after the checkpoint file was written
            lr_schedule: Maps a 1-based step to a learning-rate multiplier

        Returns:
            The trained model (the same object, updated in place)

        Raises:
            ValidationError: If the checkpoint schedule is impossible
            ContractError: If a teacher changed during the run or an adaptor
                broke its contract
        """
        if num_epochs < 1:
            raise ConfigurationError(f"num_epochs must be >= 1, got {num_epochs}")
        cfg = self.train_config
        steps_per_epoch = self.steps_per_epoch(dataloader)
        checkpoint_steps = compute_checkpoint_steps(
            steps_per_epoch, num_epochs, cfg.ckpt_frequency, cfg.ckpt_epoch_frequency
        )
        checkpoint_set = set(checkpoint_steps)
        total_steps = steps_per_epoch * num_epochs
        teacher_checksums = [t.checksum() for t in self.teachers()]

        self.prepare_optimizer(optimizer)
        cfg.ensure_dirs()
        self.audit.log_training_started(self.name, total_steps, checkpoint_steps, self.describe())
        logger.info(f"{self.name}: {num_epochs} epochs x {steps_per_epoch} steps, {len(checkpoint_steps)} checkpoints")

        self.global_step = 0
        last_loss: Optional[float] = None
        progress_bar = tqdm(total=total_steps, disable=not self.show_progress, desc=self.name)
        with LossLog(Path(cfg.log_dir) / LOSS_LOG_NAME) as loss_log:
            for epoch in range(1, num_epochs + 1):
                epoch_losses: List[float] = []
                for batch in self._take(self.epoch_batches(dataloader, epoch), steps_per_epoch, epoch):
                    self.global_step += 1
                    step = self.global_step
                    progress = step / total_steps

                    self.model.zero_grad()
                    optimizer.zero_grad()
                    terms = self.compute_loss(batch, progress)
                    terms.total.backward()
                    self.before_optimizer_step(optimizer)
                    if cfg.max_grad_norm is not None:
                        norm = clip_grad_norm([p for _, p in optimizer.parameters()], cfg.max_grad_norm)
                        if norm > cfg.max_grad_norm:
                            logger.debug(f"Step {step}: clipped gradient norm {norm:.4g}")
                    optimizer.step(lr_schedule(step) if lr_schedule is not None else 1.0)

                    last_loss = terms.total.item()
                    epoch_losses.append(last_loss)
                    for loss_name, value in terms.logged.items():
                        loss_log.write(step, loss_name, value)
                    loss_log.write(step, "total", last_loss)
                    progress_bar.update(1)

                    if step in checkpoint_set:
                        loss_log.flush()
                        path = save_checkpoint(self.model, cfg.output_dir, step)
                        self.audit.log_checkpoint_saved(self.name, step, path)
                        if callback is not None:
                            callback(self.model, step)
                            self.audit.log_callback_invoked(self.name, step)
                mean_loss = sum(epoch_losses) / len(epoch_losses)
                self.audit.log_epoch_finished(self.name, epoch, self.global_step, mean_loss)
        progress_bar.close()

        self._check_teachers(teacher_checksums)
        self.audit.log_training_finished(self.name, self.global_step, last_loss)
        return self.model

    def _take(self, batches: Iterable[Any], count: int, epoch: int) -> Iterator[Any]:
        produced = 0
        for batch in batches:
            if produced == count:
                break
            produced += 1
            yield batch
        if produced < count:
            raise ContractError(f"epoch {epoch}: dataloader produced {produced} batches, expected {count}")

    def _check_teachers(self, before: Sequence[str]) -> None:
        for index, (teacher, checksum) in enumerate(zip(self.teachers(), before)):
            after = teacher.checksum()
            self.audit.log_teacher_integrity(self.name, index, after == checksum, after)
            if after != checksum:
                raise ContractError(f"teacher {index} parameters changed during {self.name} training")


def task_loss(output: AdaptorOutput, what: str) -> Tensor:
    """
    Supervised loss of an adaptor output.

    Precomputed `losses` are summed; otherwise the hard-label loss of every
    logits entry against its labels is summed.

    Raises:
        ContractError: If the output has neither losses nor labels
    """
    if output.losses:
        return sum_terms(output.losses)
    if not output.labels or not output.logits:
        raise ContractError(f"{what}: the adaptor returned neither losses nor logits with labels")
    return sum_terms(
        [hard_label_loss(z, y, m) for z, y, m in zip(output.logits, output.labels, output.logits_mask)]
    )


class BasicTrainer(BaseTrainer):
    """
    Supervised training on labeled data, used to train teachers.

    Examples:
        >>> trainer = BasicTrainer(TrainingConfig(), model, default_adaptor)
        >>> trainer.train(Adam(model.trainable_parameters(), 1e-3), loader, num_epochs=3)
    """

    def __init__(
        self,
        train_config: TrainingConfig,
        model: Model,
        adaptor: Adaptor,
        head: Optional[str] = None,
        audit: Optional[TrainingAuditLogger] = None,
        show_progress: bool = False,
    ):
        super().__init__(train_config, model, audit, show_progress)
        self.adaptor = adaptor
        self.head = head

    def compute_loss(self, batch: Mapping[str, Any], progress: float) -> LossTerms:
        output = run_adaptor(self.adaptor, batch, self.model(batch, head=self.head), spec=self.model.spec)
        return LossTerms(total=task_loss(output, self.name))
