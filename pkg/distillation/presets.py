"""
Name-indexed registries of losses and schedulers.

Configuration refers to every loss and scheduler by name. Built-in entries
are present at import time; custom entries registered with `register_loss`
or `register_scheduler` become selectable from a DistillationConfig at once.

Examples:
    >>> def l1(pair):
    ...     teacher, student = pair.aligned()
    ...     diff = student - teacher
    ...     return (diff * diff).sqrt().mean()
    >>> register_loss("my_l1", l1, kind="intermediate", feature="hidden")
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from distillation import losses, schedulers
from distillation.losses import SoftLabelInputs, require_labels
from engine import ConfigurationError, RegistrationError, Tensor


logger = logging.getLogger(__name__)


class LossKind(str, Enum):
    """Where a loss applies."""

    FINAL = "final"
    INTERMEDIATE = "intermediate"


class SchedulerKind(str, Enum):
    """What a scheduler produces."""

    WEIGHT = "weight"
    TEMPERATURE = "temperature"


@dataclass(frozen=True)
class LossEntry:
    """
    A registered loss.

    Attributes:
        name: Config name
        fn: fn(SoftLabelInputs) for final losses, fn(*FeaturePair) otherwise
        kind: Final or intermediate
        arity: Feature pairs per call (2 for fsp-style losses)
        feature: "hidden", "attention", or None for any feature
        requires_equal_dims: Whether widths must agree after projection
    """

    name: str
    fn: Callable[..., Tensor]
    kind: LossKind
    arity: int = 1
    feature: Optional[str] = None
    requires_equal_dims: bool = True


@dataclass(frozen=True)
class SchedulerEntry:
    name: str
    fn: Callable[..., Union[float, np.ndarray]]
    kind: SchedulerKind


FEATURES = ("hidden", "attention")


class LossRegistry:
    """Losses and schedulers by name; written during setup, read while training."""

    def __init__(self) -> None:
        self._losses: Dict[str, LossEntry] = {}
        self._schedulers: Dict[str, SchedulerEntry] = {}

    def register_loss(
        self,
        name: str,
        fn: Callable[..., Tensor],
        kind: Union[str, LossKind] = LossKind.INTERMEDIATE,
        arity: int = 1,
        feature: Optional[str] = None,
        requires_equal_dims: bool = True,
    ) -> LossEntry:
        """
        Add a loss under a new name.

        Raises:
            RegistrationError: If the name is taken, fn is not callable, or the
                kind, arity or feature is invalid
        """
        if not name or not isinstance(name, str):
            raise RegistrationError(f"loss name must be a non-empty string, got {name!r}")
        if name in self._losses:
            raise RegistrationError(f"loss {name!r} is already registered")
        if not callable(fn):
            raise RegistrationError(f"loss {name!r}: fn must be callable")
        try:
            kind = LossKind(kind)
        except ValueError:
            raise RegistrationError(f"loss {name!r}: kind must be 'final' or 'intermediate', got {kind!r}")
        if arity not in (1, 2):
            raise RegistrationError(f"loss {name!r}: arity must be 1 or 2, got {arity}")
        if feature is not None and feature not in FEATURES:
            raise RegistrationError(f"loss {name!r}: feature must be one of {FEATURES} or None")
        entry = LossEntry(name, fn, kind, arity, feature, requires_equal_dims)
        self._losses[name] = entry
        logger.debug(f"Registered {kind.value} loss {name!r}")
        return entry

    def register_scheduler(
        self,
        name: str,
        fn: Callable[..., Union[float, np.ndarray]],
        kind: Union[str, SchedulerKind] = SchedulerKind.WEIGHT,
    ) -> SchedulerEntry:
        """
        Add a scheduler under a new name.

        Raises:
            RegistrationError: If the name is taken or fn is not callable
        """
        if not name or not isinstance(name, str):
            raise RegistrationError(f"scheduler name must be a non-empty string, got {name!r}")
        if name in self._schedulers:
            raise RegistrationError(f"scheduler {name!r} is already registered")
        if not callable(fn):
            raise RegistrationError(f"scheduler {name!r}: fn must be callable")
        try:
            kind = SchedulerKind(kind)
        except ValueError:
            raise RegistrationError(f"scheduler {name!r}: kind must be 'weight' or 'temperature'")
        entry = SchedulerEntry(name, fn, kind)
        self._schedulers[name] = entry
        return entry

    def loss(self, name: str, kind: Optional[LossKind] = None) -> LossEntry:
        """
        Look up a loss.

        Raises:
            ConfigurationError: Listing the registered names of that kind
        """
        entry = self._losses.get(name)
        if entry is None or (kind is not None and entry.kind != kind):
            label = f"{kind.value} losses" if kind is not None else "losses"
            raise ConfigurationError(
                f"unknown loss {name!r}; registered {label}: {', '.join(self.loss_names(kind))}"
            )
        return entry

    def scheduler(self, name: str, kind: Optional[SchedulerKind] = None) -> SchedulerEntry:
        entry = self._schedulers.get(name)
        if entry is None or (kind is not None and entry.kind != kind):
            label = f"{kind.value} schedulers" if kind is not None else "schedulers"
            raise ConfigurationError(
                f"unknown scheduler {name!r}; registered {label}: {', '.join(self.scheduler_names(kind))}"
            )
        return entry

    def loss_names(self, kind: Optional[LossKind] = None) -> List[str]:
        return sorted(n for n, e in self._losses.items() if kind is None or e.kind == kind)

    def scheduler_names(self, kind: Optional[SchedulerKind] = None) -> List[str]:
        return sorted(n for n, e in self._schedulers.items() if kind is None or e.kind == kind)

    def copy(self) -> "LossRegistry":
        clone = LossRegistry()
        clone._losses = dict(self._losses)
        clone._schedulers = dict(self._schedulers)
        return clone

    @classmethod
    def with_builtins(cls) -> "LossRegistry":
        registry = cls()
        _register_builtins(registry)
        return registry


def _hard_label_final(inputs: SoftLabelInputs) -> Tensor:
    labels = require_labels(inputs.labels, "hard_label")
    return losses.hard_label_loss(inputs.student_logits, labels, inputs.logits_mask)


def _register_builtins(registry: LossRegistry) -> None:
    registry.register_loss("kd_ce", losses.kd_ce_loss, LossKind.FINAL)
    registry.register_loss("kd_mse", losses.kd_mse_loss, LossKind.FINAL)
    registry.register_loss("hard_label", _hard_label_final, LossKind.FINAL)

    registry.register_loss("hidden_mse", losses.hidden_mse_loss, feature="hidden")
    registry.register_loss("cos", losses.cos_loss, feature="hidden")
    registry.register_loss("pkd", losses.pkd_loss, feature="hidden")
    registry.register_loss(
        "attention_mse", losses.attention_mse_loss, feature="attention", requires_equal_dims=False
    )
    registry.register_loss(
        "attention_ce", losses.attention_ce_loss, feature="attention", requires_equal_dims=False
    )
    registry.register_loss("fsp", losses.fsp_loss, arity=2, feature="hidden")
    registry.register_loss("nst", losses.nst_loss, feature="hidden", requires_equal_dims=False)

    registry.register_scheduler("constant", schedulers.constant)
    registry.register_scheduler("linear_decay", schedulers.linear_decay)
    registry.register_scheduler("linear_growth", schedulers.linear_growth)
    registry.register_scheduler(
        "constant_temperature", schedulers.constant_temperature, SchedulerKind.TEMPERATURE
    )
    registry.register_scheduler("flsw_temperature", schedulers.flsw_temperature, SchedulerKind.TEMPERATURE)


_DEFAULT = LossRegistry.with_builtins()


def default_registry() -> LossRegistry:
    """The process-wide registry that configs resolve names against."""
    return _DEFAULT


def register_loss(
    name: str,
    fn: Callable[..., Tensor],
    kind: Union[str, LossKind] = LossKind.INTERMEDIATE,
    arity: int = 1,
    feature: Optional[str] = None,
    requires_equal_dims: bool = True,
) -> LossEntry:
    """Register a custom loss in the default registry."""
    return default_registry().register_loss(name, fn, kind, arity, feature, requires_equal_dims)


def register_scheduler(
    name: str,
    fn: Callable[..., Union[float, np.ndarray]],
    kind: Union[str, SchedulerKind] = SchedulerKind.WEIGHT,
) -> SchedulerEntry:
    """Register a custom scheduler in the default registry."""
    return default_registry().register_scheduler(name, fn, kind)


def evaluate_weight_scheduler(
    name: str,
    base_weight: float,
    progress: float,
    registry: Optional[LossRegistry] = None,
) -> float:
    """
    Weight at a point of training.

    Raises:
        ConfigurationError: On an unknown scheduler or progress outside [0, 1]

    Examples:
        >>> evaluate_weight_scheduler("linear_decay", 1.0, 0.5)
        0.5
    """
    if not 0.0 <= progress <= 1.0:
        raise ConfigurationError(f"progress must lie in [0, 1], got {progress}")
    entry = (registry or default_registry()).scheduler(name, SchedulerKind.WEIGHT)
    return float(entry.fn(base_weight, progress))


def evaluate_temperature_scheduler(
    name: str,
    base_temperature: float,
    teacher_logits: np.ndarray,
    student_logits: np.ndarray,
    beta: float = 1.0,
    registry: Optional[LossRegistry] = None,
) -> np.ndarray:
    """
    Per-sample temperatures for one batch.

    Raises:
        ConfigurationError: On an unknown scheduler, base_T <= 0, or a
            scheduler producing non-positive temperatures
    """
    if base_temperature <= 0:
        raise ConfigurationError(f"temperature must be > 0, got {base_temperature}")
    entry = (registry or default_registry()).scheduler(name, SchedulerKind.TEMPERATURE)
    teacher = teacher_logits.data if isinstance(teacher_logits, Tensor) else np.asarray(teacher_logits)
    student = student_logits.data if isinstance(student_logits, Tensor) else np.asarray(student_logits)
    temperatures = np.asarray(entry.fn(base_temperature, teacher, student, beta), dtype=np.float64)
    if temperatures.shape != (teacher.shape[0],) or np.any(temperatures <= 0):
        raise ConfigurationError(
            f"temperature scheduler {name!r} must return {teacher.shape[0]} positive values"
        )
    return temperatures
