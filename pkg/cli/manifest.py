"""
Experiment manifests.

A manifest binds specs, task, configs and distiller choice into one JSON
file. Everything is resolved and cross-validated by `load_manifest` before
any compute starts; all problems are reported together.
"""

import difflib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from distillation.config import DistillationConfig, TrainingConfig, validate_against_specs
from engine import ConfigurationError, ValidationError
from models.spec import HeadSpec, ModelSpec, named_spec, parse_json, spec_names
from tasks.dataset import TaskKind
from tasks.synthetic import GENERATORS


logger = logging.getLogger(__name__)

DISTILLERS = ("basic_trainer", "basic", "general", "multi_teacher", "multi_task")

MANIFEST_KEYS = (
    "teacher_spec",
    "student_spec",
    "teacher_weights",
    "task",
    "tasks",
    "training",
    "distillation",
    "distiller",
    "optimizer",
    "num_teachers",
    "augmentation",
)
TASK_KEYS = ("generator", "params", "n_train", "n_dev", "head_id")
OPTIMIZER_KEYS = (
    "learning_rate",
    "batch_size",
    "num_epochs",
    "warmup_proportion",
    "weight_decay",
    "teacher_learning_rate",
    "teacher_epochs",
)
AUGMENTATION_KEYS = ("n", "mix_ratio")

GENERATOR_TASKS = {
    "classification": TaskKind.CLASSIFICATION,
    "tagging": TaskKind.TAGGING,
    "span": TaskKind.SPAN,
}
REQUIRED_PARAMS = {
    "classification": ("num_classes", "length"),
    "tagging": ("num_tags", "length"),
    "span": ("length",),
}


@dataclass(frozen=True)
class TaskSettings:
    """
    One synthetic task.

    Attributes:
        generator: classification, tagging or span
        params: Generator parameters (vocab_size defaults to the student's)
        n_train: Training examples
        n_dev: Dev examples
        head_id: Student head trained on this task
    """

    generator: str
    params: Dict[str, Any] = field(default_factory=dict)
    n_train: int = 2000
    n_dev: int = 500
    head_id: str = "main"

    @property
    def task_kind(self) -> TaskKind:
        return GENERATOR_TASKS[self.generator]

    @property
    def num_labels(self) -> int:
        if self.generator == "classification":
            return int(self.params.get("num_classes", 2))
        if self.generator == "tagging":
            return int(self.params.get("num_tags", 2))
        return 2

    def head(self) -> HeadSpec:
        return HeadSpec(self.task_kind.head_kind, self.num_labels, self.head_id)

    def generator_params(self, vocab_size: int) -> Dict[str, Any]:
        """Generator keyword arguments; vocab_size defaults to the models'."""
        return {"vocab_size": vocab_size, **self.params}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "generator": self.generator,
            "params": dict(self.params),
            "n_train": self.n_train,
            "n_dev": self.n_dev,
            "head_id": self.head_id,
        }


@dataclass(frozen=True)
class OptimizerSettings:
    """
    Optimization of the student and of teachers trained in the run.

    Attributes:
        learning_rate: Student Adam learning rate
        batch_size: Examples per batch for every loader
        num_epochs: Distillation epochs
        warmup_proportion: Share of steps with linear warmup
        weight_decay: Decoupled weight decay of the student
        teacher_learning_rate: Adam learning rate for teacher training
        teacher_epochs: Teacher training epochs
    """

    learning_rate: float = 1e-4
    batch_size: int = 32
    num_epochs: int = 3
    warmup_proportion: float = 0.0
    weight_decay: float = 0.0
    teacher_learning_rate: float = 1e-3
    teacher_epochs: int = 5

    def problems(self) -> List[str]:
        errors = []
        for name in ("batch_size", "num_epochs", "teacher_epochs"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                errors.append(f"manifest.optimizer.{name}: must be an integer >= 1, got {value!r}")
        for name in ("learning_rate", "teacher_learning_rate"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value <= 0:
                errors.append(f"manifest.optimizer.{name}: must be > 0, got {value!r}")
        if not isinstance(self.warmup_proportion, (int, float)) or not 0 <= self.warmup_proportion <= 1:
            errors.append(f"manifest.optimizer.warmup_proportion: must be in [0, 1], got {self.warmup_proportion!r}")
        if not isinstance(self.weight_decay, (int, float)) or self.weight_decay < 0:
            errors.append(f"manifest.optimizer.weight_decay: must be >= 0, got {self.weight_decay!r}")
        return errors


@dataclass(frozen=True)
class AugmentationSettings:
    """Unlabeled examples (n) mixed in at mix_ratio times the train set size."""

    n: int = 500
    mix_ratio: float = 1.0

    def problems(self) -> List[str]:
        errors = []
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 1:
            errors.append(f"manifest.augmentation.n: must be an integer >= 1, got {self.n!r}")
        if not isinstance(self.mix_ratio, (int, float)) or self.mix_ratio < 0:
            errors.append(f"manifest.augmentation.mix_ratio: must be >= 0, got {self.mix_ratio!r}")
        return errors


@dataclass(frozen=True)
class ExperimentManifest:
    """
    A resolved, validated experiment.

    Specs already carry the heads their tasks need: the teacher has one
    "main" head per task, and the student has one head per task (named by
    head_id).
    """

    teacher_spec: ModelSpec
    student_spec: ModelSpec
    tasks: Tuple[TaskSettings, ...]
    training: TrainingConfig
    distillation: DistillationConfig
    distiller: str
    optimizer: OptimizerSettings
    teacher_weights: Optional[Path] = None
    num_teachers: int = 1
    augmentation: Optional[AugmentationSettings] = None

    @property
    def task(self) -> TaskSettings:
        return self.tasks[0]

    def teacher_spec_for(self, task: TaskSettings) -> ModelSpec:
        return self.teacher_spec.with_heads(replace(task.head(), name="main"))

    def to_dict(self) -> Dict[str, Any]:
        """Resolved configuration as recorded in the report."""
        return {
            "teacher_spec": self.teacher_spec.to_dict(),
            "student_spec": self.student_spec.to_dict(),
            "tasks": [t.to_dict() for t in self.tasks],
            "training": {k: v for k, v in self.training.to_dict().items() if k not in ("log_dir", "output_dir")},
            "distillation": self.distillation.to_dict(),
            "distiller": self.distiller,
            "optimizer": dict(vars(self.optimizer)),
            "teacher_weights": self.teacher_weights.name if self.teacher_weights else None,
            "num_teachers": self.num_teachers,
            "augmentation": dict(vars(self.augmentation)) if self.augmentation else None,
        }


def _unknown(data: Mapping[str, Any], allowed: Tuple[str, ...], where: str) -> List[str]:
    errors = []
    for key in data:
        if key not in allowed:
            hint = difflib.get_close_matches(key, list(allowed), n=1)
            suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
            errors.append(f"{where}: unknown key {key!r}{suggestion}")
    return errors


def _load_object(value: Any, base: Path, what: str) -> Dict[str, Any]:
    """An inline object, or a JSON file path relative to the manifest."""
    if isinstance(value, Mapping):
        return dict(value)
    if isinstance(value, str):
        path = base / value
        if not path.is_file():
            raise ValidationError([f"{what}: file {value!r} not found"])
        return parse_json(path.read_text(encoding="utf-8"), f"{what} ({value})")
    raise ValidationError([f"{what}: expected an object or a file path, got {type(value).__name__}"])


def _resolve_spec(value: Any, base: Path, what: str) -> ModelSpec:
    if isinstance(value, str) and not value.endswith(".json") and value in spec_names():
        return named_spec(value)
    return ModelSpec.from_dict(_load_object(value, base, what))


def _parse_task(data: Any, where: str, errors: List[str]) -> Optional[TaskSettings]:
    if not isinstance(data, Mapping):
        errors.append(f"{where}: expected an object")
        return None
    errors.extend(_unknown(data, TASK_KEYS, where))
    generator = data.get("generator")
    if generator not in GENERATORS:
        errors.append(f"{where}.generator: unknown generator {generator!r}; available: {', '.join(GENERATORS)}")
        return None
    params = data.get("params", {})
    if not isinstance(params, Mapping):
        errors.append(f"{where}.params: expected an object")
        return None
    missing = [k for k in REQUIRED_PARAMS[generator] if k not in params]
    if missing:
        errors.append(f"{where}.params: the {generator} generator needs {missing}")
        return None
    try:
        settings = TaskSettings(
            generator=generator,
            params=dict(params),
            n_train=int(data.get("n_train", 2000)),
            n_dev=int(data.get("n_dev", 500)),
            head_id=str(data.get("head_id", "main")),
        )
    except (TypeError, ValueError) as e:
        errors.append(f"{where}: {e}")
        return None
    if settings.n_train < 1 or settings.n_dev < 1:
        errors.append(f"{where}: n_train and n_dev must be >= 1")
    return settings


def _parse_settings(cls: type, data: Any, allowed: Tuple[str, ...], where: str, errors: List[str]) -> Any:
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        errors.append(f"{where}: expected an object")
        return cls()
    unknown = _unknown(data, allowed, where)
    errors.extend(unknown)
    if unknown:
        return cls()
    settings = cls(**data)
    errors.extend(settings.problems())
    return settings


def _check_task_fits(task: TaskSettings, spec: ModelSpec, role: str, errors: List[str]) -> None:
    vocab = task.params.get("vocab_size", spec.vocab_size)
    if vocab != spec.vocab_size:
        errors.append(f"task {task.head_id!r}: vocab_size {vocab} differs from the {role} spec's {spec.vocab_size}")
    length = task.params.get("length")
    if isinstance(length, int) and length > spec.max_positions:
        errors.append(f"task {task.head_id!r}: length {length} exceeds the {role}'s max_positions {spec.max_positions}")


def parse_manifest(data: Mapping[str, Any], base: Path) -> ExperimentManifest:
    """
    Resolve and validate a manifest object.

    Args:
        data: Parsed manifest JSON
        base: Directory relative paths resolve against

    Raises:
        ValidationError: Listing every problem found
        ConfigurationError: For spec problems
    """
    errors = _unknown(data, MANIFEST_KEYS, "manifest")
    distiller = data.get("distiller", "general")
    if distiller not in DISTILLERS:
        errors.append(f"manifest.distiller: unknown distiller {distiller!r}; one of {', '.join(DISTILLERS)}")

    for key in ("teacher_spec", "student_spec"):
        if key not in data and not (key == "teacher_spec" and distiller == "basic_trainer"):
            errors.append(f"manifest.{key}: required")
    if errors:
        raise ValidationError(errors)

    student_spec = _resolve_spec(data["student_spec"], base, "student_spec")
    teacher_spec = _resolve_spec(data.get("teacher_spec", data["student_spec"]), base, "teacher_spec")

    tasks: List[TaskSettings] = []
    if distiller == "multi_task":
        raw_tasks = data.get("tasks")
        if not isinstance(raw_tasks, list) or len(raw_tasks) < 2:
            errors.append("manifest.tasks: multi_task needs a list of at least 2 tasks")
            raw_tasks = []
        for index, raw in enumerate(raw_tasks):
            task = _parse_task(raw, f"manifest.tasks[{index}]", errors)
            if task is not None:
                tasks.append(task)
        head_ids = [t.head_id for t in tasks]
        if len(set(head_ids)) != len(head_ids):
            errors.append(f"manifest.tasks: head_id values must be unique, got {head_ids}")
    else:
        if "tasks" in data:
            errors.append("manifest.tasks: only the multi_task distiller takes a task list; use 'task'")
        task = _parse_task(data.get("task"), "manifest.task", errors)
        if task is not None:
            tasks.append(replace(task, head_id="main"))

    training = TrainingConfig()
    distillation = DistillationConfig()
    try:
        training = TrainingConfig.from_dict(_load_object(data.get("training", {}), base, "training"))
    except ValidationError as e:
        errors.extend(e.errors)
    try:
        distillation = DistillationConfig.from_dict(_load_object(data.get("distillation", {}), base, "distillation"))
    except ValidationError as e:
        errors.extend(e.errors)

    optimizer = _parse_settings(OptimizerSettings, data.get("optimizer"), OPTIMIZER_KEYS, "manifest.optimizer", errors)
    augmentation = None
    if data.get("augmentation") is not None:
        augmentation = _parse_settings(
            AugmentationSettings, data["augmentation"], AUGMENTATION_KEYS, "manifest.augmentation", errors
        )
    num_teachers = data.get("num_teachers", 1)
    if not isinstance(num_teachers, int) or num_teachers < 1:
        errors.append(f"manifest.num_teachers: must be an integer >= 1, got {num_teachers!r}")
        num_teachers = 1
    if num_teachers > 1 and distiller != "multi_teacher":
        errors.append("manifest.num_teachers: only the multi_teacher distiller uses more than one teacher")

    teacher_weights = None
    if data.get("teacher_weights") is not None:
        teacher_weights = base / str(data["teacher_weights"])
        if not teacher_weights.is_file():
            errors.append(f"manifest.teacher_weights: file {data['teacher_weights']!r} not found")
        if distiller in ("multi_teacher", "multi_task"):
            errors.append(f"manifest.teacher_weights: not supported by the {distiller} distiller")

    for task in tasks:
        _check_task_fits(task, student_spec, "student", errors)
        if distiller != "basic_trainer":
            _check_task_fits(task, teacher_spec, "teacher", errors)
    if errors:
        raise ValidationError(errors)

    student_spec = student_spec.with_heads(*(t.head() for t in tasks))
    teacher_spec = teacher_spec.with_heads(replace(tasks[0].head(), name="main"))
    for spec, role in ((teacher_spec, "teacher_spec"), (student_spec, "student_spec")):
        try:
            spec.validate(for_training=True)
        except ConfigurationError as e:
            errors.append(f"{role}: {e}")
    if distiller == "general" and not errors:
        try:
            validate_against_specs(distillation, teacher_spec, student_spec)
        except ValidationError as e:
            errors.extend(e.errors)
    elif distillation.intermediate_matches and distiller in ("multi_teacher", "multi_task"):
        errors.append(f"distillation.intermediate_matches: not supported by the {distiller} distiller")
    if errors:
        raise ValidationError(errors)

    return ExperimentManifest(
        teacher_spec=teacher_spec,
        student_spec=student_spec,
        tasks=tuple(tasks),
        training=training,
        distillation=distillation,
        distiller=distiller,
        optimizer=optimizer,
        teacher_weights=teacher_weights,
        num_teachers=num_teachers,
        augmentation=augmentation,
    )


def load_manifest(path: Union[str, Path]) -> ExperimentManifest:
    """
    Read, resolve and validate a manifest file.

    Raises:
        ConfigParseError: On malformed JSON
        ValidationError: Listing every validation problem
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError([f"manifest {str(path)!r} not found"])
    data = parse_json(path.read_text(encoding="utf-8"), f"manifest {path.name}")
    return parse_manifest(data, path.parent)
