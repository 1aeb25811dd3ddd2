"""
Distillers: teacher-to-student training engines.

All distillers share `BaseTrainer.train(optimizer, dataloader, num_epochs,
callback, lr_schedule)` and differ only in how one batch becomes a loss:

- BasicDistiller: soft-label loss plus optional hard-label loss
- GeneralDistiller: adds intermediate feature matches with projections
- MultiTeacherDistiller: soft targets from the mean of several teachers' logits
- MultiTaskDistiller: one teacher per task, one shared multi-head student
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from distillation.adaptors import AdaptorOutput, default_adaptor, run_adaptor
from distillation.audit import TrainingAuditLogger
from distillation.config import DistillationConfig, TrainingConfig, validate_against_specs
from distillation.events import Adaptor
from distillation.losses import FeaturePair, Projection, SoftLabelInputs, probability_shift
from distillation.optimizer import Adam
from distillation.presets import (
    LossKind,
    LossRegistry,
    default_registry,
    evaluate_temperature_scheduler,
    evaluate_weight_scheduler,
)
from distillation.trainer import BaseTrainer, LossTerms, sum_terms, task_loss
from engine import ConfigurationError, ContractError, Tensor, no_grad
from models.zoo import Model


logger = logging.getLogger(__name__)

TeacherLogits = Tuple[np.ndarray, ...]


class BasicDistiller(BaseTrainer):
    """
    Single-teacher, single-task distillation on final outputs.

    Per batch the loss is
    w_kd(progress) · kd_loss(z_t, z_s, T) + w_hl(progress) · hard_label_loss,
    where each term is computed only when its base weight is positive.

    Attributes:
        distill_config: Objective settings
        teacher: Frozen teacher model
        adaptor_T: Teacher adaptor
        adaptor_S: Student adaptor
        registry: Loss and scheduler registry names resolve against
    """

    def __init__(
        self,
        train_config: TrainingConfig,
        distill_config: DistillationConfig,
        model_T: Model,
        model_S: Model,
        adaptor_T: Adaptor,
        adaptor_S: Adaptor,
        registry: Optional[LossRegistry] = None,
        audit: Optional[TrainingAuditLogger] = None,
        show_progress: bool = False,
    ):
        super().__init__(train_config, model_S, audit, show_progress)
        self.registry = registry or default_registry()
        distill_config.validate(self.registry)
        self.distill_config = distill_config
        self.teacher = self._freeze_teacher(model_T)
        self.adaptor_T = adaptor_T
        self.adaptor_S = adaptor_S
        self._check_matches()

    def _freeze_teacher(self, teacher: Model) -> Model:
        if teacher is self.model:
            raise ContractError("the teacher and the student must be distinct model objects")
        if not teacher.frozen:
            logger.info(f"{self.name}: freezing teacher {teacher!r}")
            teacher.freeze()
        return teacher

    def _check_matches(self) -> None:
        if self.distill_config.intermediate_matches:
            logger.warning(
                f"{self.name} ignores {len(self.distill_config.intermediate_matches)} intermediate matches; "
                f"use GeneralDistiller for feature matching"
            )

    def teachers(self) -> List[Model]:
        return [self.teacher]

    def describe(self) -> Dict[str, Any]:
        cfg = self.distill_config
        return {
            "seed": self.train_config.seed,
            "kd_loss_type": cfg.kd_loss_type,
            "temperature": cfg.temperature,
            "temperature_scheduler": cfg.temperature_scheduler,
            "kd_loss_weight": cfg.kd_loss_weight,
            "hard_label_weight": cfg.hard_label_weight,
            "intermediate_matches": len(cfg.intermediate_matches),
        }

    # Adaptor plumbing

    def student_requirements(self) -> Dict[str, str]:
        required = {}
        if self.distill_config.kd_loss_weight > 0:
            required["logits"] = "the soft-label loss (kd_loss_weight > 0)"
        return required

    def teacher_requirements(self) -> Dict[str, str]:
        return {"logits": "the soft-label loss"} if self.distill_config.kd_loss_weight > 0 else {}

    def run_teacher(
        self, teacher: Model, adaptor: Adaptor, batch: Mapping[str, Any], head: Optional[str] = None
    ) -> AdaptorOutput:
        with no_grad():
            outputs = teacher(batch, head=head)
            return run_adaptor(adaptor, batch, outputs, self.teacher_requirements(), teacher.spec)

    def run_student(
        self, adaptor: Adaptor, batch: Mapping[str, Any], head: Optional[str] = None
    ) -> AdaptorOutput:
        outputs = self.model(batch, head=head)
        return run_adaptor(adaptor, batch, outputs, self.student_requirements(), self.model.spec)

    # Loss terms

    def teacher_logits(self, batch: Mapping[str, Any]) -> Tuple[TeacherLogits, AdaptorOutput]:
        output = self.run_teacher(self.teacher, self.adaptor_T, batch)
        return tuple(z.data for z in output.logits), output

    def final_terms(
        self,
        teacher_logits: TeacherLogits,
        student: AdaptorOutput,
        progress: float,
        teacher_labels: Sequence[np.ndarray] = (),
    ) -> Tuple[List[Tensor], "OrderedDict[str, float]"]:
        """
        Weighted soft-label and hard-label terms of one batch.

        Returns:
            (weighted terms to add into the total, logged values)

        Raises:
            ContractError: If labels are needed but absent, or the teacher and
                student produce different numbers of logits
        """
        cfg = self.distill_config
        terms: List[Tensor] = []
        logged: "OrderedDict[str, float]" = OrderedDict()
        kd_weight = evaluate_weight_scheduler(
            cfg.kd_loss_weight_scheduler, cfg.kd_loss_weight, progress, self.registry
        )
        hl_weight = evaluate_weight_scheduler(
            cfg.hard_label_weight_scheduler, cfg.hard_label_weight, progress, self.registry
        )
        labels = student.labels or tuple(teacher_labels)

        if cfg.kd_loss_weight > 0:
            if len(teacher_logits) != len(student.logits):
                raise ContractError(
                    f"teacher adaptor returned {len(teacher_logits)} logits, student adaptor {len(student.logits)}"
                )
            kd_entry = self.registry.loss(cfg.kd_loss_name, LossKind.FINAL)
            kd_terms = []
            for i, (z_t, z_s) in enumerate(zip(teacher_logits, student.logits)):
                y = labels[i] if labels else None
                if cfg.probability_shift:
                    if y is None:
                        raise ContractError("probability_shift needs gold labels but the adaptors returned none")
                    z_t = probability_shift(z_t, y)
                temperature = evaluate_temperature_scheduler(
                    cfg.temperature_scheduler, cfg.temperature, z_t, z_s.data, cfg.temperature_beta, self.registry
                )
                inputs = SoftLabelInputs(z_t, z_s, temperature, labels=y, logits_mask=student.logits_mask[i])
                kd_terms.append(kd_entry.fn(inputs))
            kd = sum_terms(kd_terms)
            logged["kd"] = kd.item()
            terms.append(kd * kd_weight)

        if cfg.hard_label_weight > 0:
            if not student.losses and not student.labels:
                raise ContractError(
                    "hard_label_weight > 0 but the student adaptor returned neither labels nor losses"
                )
            hard = task_loss(student, self.name)
            logged["hard_label"] = hard.item()
            terms.append(hard * hl_weight)

        logged["kd_loss_weight"] = kd_weight
        logged["hard_label_weight"] = hl_weight
        return terms, logged

    def compute_loss(self, batch: Mapping[str, Any], progress: float) -> LossTerms:
        teacher_logits, teacher_output = self.teacher_logits(batch)
        student = self.run_student(self.adaptor_S, batch)
        terms, logged = self.final_terms(teacher_logits, student, progress, teacher_output.labels)
        return LossTerms(total=sum_terms(terms), logged=logged)


class GeneralDistiller(BasicDistiller):
    """
    BasicDistiller plus intermediate feature matches.

    Each match with a `proj` gets a `Projection` initialized from the
    training seed; projections are added to the optimizer as their own
    parameter group when training starts and are trained with the student.

    Attributes:
        projections: Match index -> projection
    """

    def __init__(
        self,
        train_config: TrainingConfig,
        distill_config: DistillationConfig,
        model_T: Model,
        model_S: Model,
        adaptor_T: Adaptor,
        adaptor_S: Adaptor,
        registry: Optional[LossRegistry] = None,
        audit: Optional[TrainingAuditLogger] = None,
        show_progress: bool = False,
    ):
        super().__init__(
            train_config, distill_config, model_T, model_S, adaptor_T, adaptor_S, registry, audit, show_progress
        )
        validate_against_specs(distill_config, model_T.spec, model_S.spec, self.registry)
        rng = np.random.default_rng(train_config.seed)
        self.projections: Dict[int, Projection] = {}
        for index, match in enumerate(distill_config.intermediate_matches):
            if match.proj is not None:
                _, in_dim, out_dim = match.proj
                self.projections[index] = Projection(in_dim, out_dim, rng)
        self._registered_with: Optional[int] = None

    def _check_matches(self) -> None:
        pass

    def projection_parameters(self) -> "OrderedDict[str, Tensor]":
        named: "OrderedDict[str, Tensor]" = OrderedDict()
        for index, projection in self.projections.items():
            named.update(projection.named_parameters(f"proj.{index}"))
        return named

    def num_projection_parameters(self) -> int:
        return sum(p.num_parameters() for p in self.projections.values())

    def prepare_optimizer(self, optimizer: Adam) -> None:
        if not self.projections or self._registered_with == id(optimizer):
            return
        optimizer.add_param_group(self.projection_parameters())
        self._registered_with = id(optimizer)
        logger.info(f"{self.name}: training {self.num_projection_parameters()} projection parameters")

    def _feature_requirements(self) -> Dict[str, str]:
        required: Dict[str, str] = {}
        for index, match in enumerate(self.distill_config.intermediate_matches):
            required.setdefault(match.feature, f"intermediate_matches[{index}] ({match.loss})")
        return required

    def student_requirements(self) -> Dict[str, str]:
        return {**super().student_requirements(), **self._feature_requirements()}

    def teacher_requirements(self) -> Dict[str, str]:
        return {**super().teacher_requirements(), **self._feature_requirements()}

    def intermediate_terms(
        self, teacher: AdaptorOutput, student: AdaptorOutput
    ) -> Tuple[List[Tensor], "OrderedDict[str, float]"]:
        """
        Weighted intermediate losses of one batch.

        Raises:
            ContractError: If an adaptor lacks a layer a match refers to
        """
        terms: List[Tensor] = []
        logged: "OrderedDict[str, float]" = OrderedDict()
        mask = student.inputs_mask if student.inputs_mask is not None else teacher.inputs_mask
        for index, match in enumerate(self.distill_config.intermediate_matches):
            entry = self.registry.loss(match.loss, LossKind.INTERMEDIATE)
            teacher_features = getattr(teacher, match.feature)
            student_features = getattr(student, match.feature)
            pairs = []
            for layer_t, layer_s in zip(match.teacher_layers, match.student_layers):
                if layer_t >= len(teacher_features) or layer_s >= len(student_features):
                    raise ContractError(
                        f"intermediate_matches[{index}] ({match.loss}) needs {match.feature} layers "
                        f"T{layer_t}/S{layer_s}; adaptors returned {len(teacher_features)} and "
                        f"{len(student_features)}"
                    )
                pairs.append(
                    FeaturePair(
                        teacher=teacher_features[layer_t],
                        student=student_features[layer_s],
                        inputs_mask=mask,
                        projection=self.projections.get(index),
                        proj_side=match.proj_side,
                    )
                )
            loss = entry.fn(*pairs)
            logged[f"intermediate.{index}.{match.loss}"] = loss.item()
            terms.append(loss * match.weight)
        return terms, logged

    def compute_loss(self, batch: Mapping[str, Any], progress: float) -> LossTerms:
        teacher_logits, teacher_output = self.teacher_logits(batch)
        student = self.run_student(self.adaptor_S, batch)
        terms, logged = self.final_terms(teacher_logits, student, progress, teacher_output.labels)
        match_terms, match_logged = self.intermediate_terms(teacher_output, student)
        logged.update(match_logged)
        return LossTerms(total=sum_terms(terms + match_terms), logged=logged)


class MultiTeacherDistiller(BasicDistiller):
    """
    Distill an ensemble of teachers into one student.

    Soft targets come from the mean of the teachers' logits, taken before
    temperature softening. Intermediate matches are not supported.
    """

    def __init__(
        self,
        train_config: TrainingConfig,
        distill_config: DistillationConfig,
        model_T: Sequence[Model],
        model_S: Model,
        adaptor_T: Union[Adaptor, Sequence[Adaptor]],
        adaptor_S: Adaptor,
        registry: Optional[LossRegistry] = None,
        audit: Optional[TrainingAuditLogger] = None,
        show_progress: bool = False,
    ):
        teachers = list(model_T)
        if not teachers:
            raise ConfigurationError("MultiTeacherDistiller needs at least one teacher")
        adaptors = list(adaptor_T) if isinstance(adaptor_T, (list, tuple)) else [adaptor_T] * len(teachers)
        if len(adaptors) != len(teachers):
            raise ConfigurationError(f"{len(adaptors)} teacher adaptors for {len(teachers)} teachers")
        super().__init__(
            train_config,
            distill_config,
            teachers[0],
            model_S,
            adaptors[0],
            adaptor_S,
            registry,
            audit,
            show_progress,
        )
        self.teacher_models = [self._freeze_teacher(t) for t in teachers]
        self.teacher_adaptors = adaptors

    def _check_matches(self) -> None:
        if self.distill_config.intermediate_matches:
            raise ConfigurationError("MultiTeacherDistiller does not support intermediate_matches")

    def teachers(self) -> List[Model]:
        return list(self.teacher_models)

    def teacher_logits(self, batch: Mapping[str, Any]) -> Tuple[TeacherLogits, AdaptorOutput]:
        """
        Mean of the teachers' logits, entry by entry.

        Raises:
            ContractError: If teachers disagree on logits count or shape
        """
        outputs = [self.run_teacher(t, a, batch) for t, a in zip(self.teacher_models, self.teacher_adaptors)]
        reference = outputs[0]
        for k, output in enumerate(outputs[1:], start=1):
            if len(output.logits) != len(reference.logits):
                raise ContractError(
                    f"teacher {k} returned {len(output.logits)} logits, teacher 0 {len(reference.logits)}"
                )
            for z, z_ref in zip(output.logits, reference.logits):
                if z.shape != z_ref.shape:
                    raise ContractError(
                        f"teacher {k} logits have shape {list(z.shape)}, teacher 0 {list(z_ref.shape)}; "
                        f"class counts must match"
                    )
        averaged = tuple(
            np.mean(np.stack([o.logits[i].data for o in outputs]), axis=0) for i in range(len(reference.logits))
        )
        return averaged, reference

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "teachers": len(self.teacher_models)}


@dataclass(frozen=True)
class TaskSpec:
    """
    One task of a multi-task run.

    Attributes:
        head_id: Student head the task trains
        teacher: The task's teacher
        adaptor_T: Teacher adaptor
        dataloader: The task's sized, re-iterable batch source
        adaptor_S: Student adaptor (default: `default_adaptor`)
    """

    head_id: str
    teacher: Model
    adaptor_T: Adaptor
    dataloader: Any
    adaptor_S: Optional[Adaptor] = None


def sample_task_order(
    sizes: Sequence[int], num_steps: int, rng: np.random.Generator, mode: str = "proportional"
) -> np.ndarray:
    """
    Task index for each step of an epoch.

    `proportional` draws tasks with probability size_k / Σ sizes;
    `round_robin` cycles through the tasks.

    Raises:
        ConfigurationError: On an unknown mode or non-positive sizes
    """
    if any(s < 1 for s in sizes):
        raise ConfigurationError(f"task sizes must be >= 1, got {list(sizes)}")
    if mode == "proportional":
        weights = np.asarray(sizes, dtype=np.float64)
        return rng.choice(len(sizes), size=num_steps, p=weights / weights.sum())
    if mode == "round_robin":
        return np.arange(num_steps) % len(sizes)
    raise ConfigurationError(f"unknown task sampling mode {mode!r} (proportional or round_robin)")


class MultiTaskDistiller(BasicDistiller):
    """
    Distill several single-task teachers into one multi-head student.

    An epoch has as many steps as all task loaders have batches together.
    Each step draws a task, takes the next batch from that task's loader
    (restarting it when exhausted) and trains the task's head and the shared
    encoder on that task's kd and optional hard-label loss.
    """

    def __init__(
        self,
        train_config: TrainingConfig,
        distill_config: DistillationConfig,
        tasks: Sequence[TaskSpec],
        model_S: Model,
        sampling: str = "proportional",
        registry: Optional[LossRegistry] = None,
        audit: Optional[TrainingAuditLogger] = None,
        show_progress: bool = False,
    ):
        tasks = list(tasks)
        if len(tasks) < 2:
            raise ConfigurationError(f"MultiTaskDistiller needs at least 2 tasks, got {len(tasks)}")
        seen = set()
        for task in tasks:
            if task.head_id in seen:
                raise ConfigurationError(f"head_id {task.head_id!r} is used by more than one task")
            seen.add(task.head_id)
            model_S.spec.get_head(task.head_id)
        if sampling not in ("proportional", "round_robin"):
            raise ConfigurationError(f"unknown task sampling mode {sampling!r} (proportional or round_robin)")
        super().__init__(
            train_config,
            distill_config,
            tasks[0].teacher,
            model_S,
            tasks[0].adaptor_T,
            tasks[0].adaptor_S or default_adaptor,
            registry,
            audit,
            show_progress,
        )
        self.tasks = tasks
        self.task_teachers = [self._freeze_teacher(t.teacher) for t in tasks]
        self.sampling = sampling
        self._rng = np.random.default_rng(train_config.seed)

    def _check_matches(self) -> None:
        if self.distill_config.intermediate_matches:
            raise ConfigurationError("MultiTaskDistiller does not support intermediate_matches")

    def teachers(self) -> List[Model]:
        unique: Dict[int, Model] = {}
        for teacher in self.task_teachers:
            unique.setdefault(id(teacher), teacher)
        return list(unique.values())

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "tasks": [t.head_id for t in self.tasks], "sampling": self.sampling}

    def steps_per_epoch(self, dataloader: Any) -> int:
        return sum(len(t.dataloader) for t in self.tasks)

    def epoch_batches(self, dataloader: Any, epoch: int) -> Iterator[Tuple[int, Mapping[str, Any]]]:
        sizes = [len(t.dataloader) for t in self.tasks]
        order = sample_task_order(sizes, sum(sizes), self._rng, self.sampling)
        iterators = [iter(t.dataloader) for t in self.tasks]
        for index in order:
            index = int(index)
            try:
                batch = next(iterators[index])
            except StopIteration:
                iterators[index] = iter(self.tasks[index].dataloader)
                batch = next(iterators[index])
            yield index, batch

    def train(
        self,
        optimizer: Adam,
        dataloader: Any = None,
        num_epochs: int = 1,
        callback: Any = None,
        lr_schedule: Any = None,
    ) -> Model:
        """Train on the tasks' own loaders; `dataloader` is ignored."""
        self._rng = np.random.default_rng(self.train_config.seed)
        return super().train(optimizer, dataloader, num_epochs, callback, lr_schedule)

    def compute_loss(self, batch: Tuple[int, Mapping[str, Any]], progress: float) -> LossTerms:
        index, data = batch
        task = self.tasks[index]
        teacher_output = self.run_teacher(task.teacher, task.adaptor_T, data)
        student = self.run_student(task.adaptor_S or default_adaptor, data, head=task.head_id)
        teacher_logits = tuple(z.data for z in teacher_output.logits)
        terms, logged = self.final_terms(teacher_logits, student, progress, teacher_output.labels)
        logged["task"] = float(index)
        logged.move_to_end("task", last=False)
        return LossTerms(total=sum_terms(terms), logged=logged)

    def before_optimizer_step(self, optimizer: Adam) -> None:
        """Give parameters the batch did not reach (other heads) a zero gradient."""
        for _, p in optimizer.parameters():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)

