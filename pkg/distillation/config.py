"""
Training and distillation configuration.

Both configs are frozen dataclasses loaded from JSON objects. Defaults live
in the field declarations and nowhere else; `distillation/README.md`
documents the schema. Unknown keys are rejected with the closest valid
name, and every value error names its field.
"""

import difflib
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from distillation.presets import LossKind, LossRegistry, SchedulerKind, default_registry
from engine import ValidationError
from models.spec import ModelKind, ModelSpec, parse_json


logger = logging.getLogger(__name__)

LayerRef = Union[int, Tuple[int, int]]

# kd_loss_type shorthands
KD_LOSS_ALIASES = {"ce": "kd_ce", "mse": "kd_mse"}


def _unknown_key_errors(data: Mapping[str, Any], allowed: Sequence[str], where: str) -> List[str]:
    errors = []
    for key in data:
        if key not in allowed:
            hint = difflib.get_close_matches(key, list(allowed), n=1)
            suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
            errors.append(f"{where}unknown key {key!r}{suggestion}")
    return errors


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class TrainingConfig:
    """
    Settings shared by every trainer and distiller.

    Attributes:
        log_dir: Directory of the loss log (`train.log`)
        output_dir: Directory of checkpoint files (`gs{step}`)
        device: Informational device tag
        ckpt_frequency: Checkpoints per epoch, >= 1
        ckpt_epoch_frequency: Only epochs divisible by this get checkpoints
            (the last step is always one), >= 1
        max_grad_norm: Global gradient-norm clip, > 0, or None
        seed: Seed for data order and projection initialization

    Examples:
        >>> parse_training_config('{"ckpt_frequency": 2}').ckpt_frequency
        2
    """

    log_dir: str = "logs"
    output_dir: str = "saved_models"
    device: str = "cpu"
    ckpt_frequency: int = 1
    ckpt_epoch_frequency: int = 1
    max_grad_norm: Optional[float] = None
    seed: int = 42

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainingConfig":
        """
        Build and validate a config; missing keys take defaults.

        Raises:
            ValidationError: Listing unknown keys and bad values by field
        """
        names = [f.name for f in fields(cls)]
        errors = _unknown_key_errors(data, names, "training config: ")
        values = {k: v for k, v in data.items() if k in names}

        for key in ("log_dir", "output_dir", "device"):
            if key in values and not isinstance(values[key], str):
                errors.append(f"{key}: must be a string, got {values[key]!r}")
        for key in ("ckpt_frequency", "ckpt_epoch_frequency"):
            if key in values and not (_is_int(values[key]) and values[key] >= 1):
                errors.append(f"{key}: must be an integer >= 1, got {values[key]!r}")
        if "max_grad_norm" in values and values["max_grad_norm"] is not None:
            if not (_is_number(values["max_grad_norm"]) and values["max_grad_norm"] > 0):
                errors.append(f"max_grad_norm: must be > 0 or null, got {values['max_grad_norm']!r}")
            else:
                values["max_grad_norm"] = float(values["max_grad_norm"])
        if "seed" in values and not _is_int(values["seed"]):
            errors.append(f"seed: must be an integer, got {values['seed']!r}")
        if errors:
            raise ValidationError(errors)
        return cls(**values)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def ensure_dirs(self) -> None:
        Path(self.log_dir).mkdir(parents=True, exist_ok=True)
        Path(self.output_dir).mkdir(parents=True, exist_ok=True)


MATCH_KEYS = ("layer_T", "layer_S", "feature", "loss", "weight", "proj", "proj_side")


@dataclass(frozen=True)
class IntermediateMatch:
    """
    One teacher-layer to student-layer pairing.

    Hidden index 0 is the embedding output and k the output of layer k;
    attention index k belongs to layer k+1. FSP-style losses take index
    pairs on both sides.

    Attributes:
        layer_T: Teacher index, or (first, second) pair
        layer_S: Student index, or pair
        feature: "hidden" or "attention"
        loss: Registered intermediate loss name
        weight: Non-negative weight
        proj: Optional ("linear", in_dim, out_dim)
        proj_side: Side the projection applies to, "student" or "teacher"
    """

    layer_T: LayerRef
    layer_S: LayerRef
    feature: str = "hidden"
    loss: str = "hidden_mse"
    weight: float = 1.0
    proj: Optional[Tuple[str, int, int]] = None
    proj_side: str = "student"

    @property
    def teacher_layers(self) -> Tuple[int, ...]:
        return self.layer_T if isinstance(self.layer_T, tuple) else (self.layer_T,)

    @property
    def student_layers(self) -> Tuple[int, ...]:
        return self.layer_S if isinstance(self.layer_S, tuple) else (self.layer_S,)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], index: int) -> Tuple[Optional["IntermediateMatch"], List[str]]:
        """Parse one match; returns (match or None, errors prefixed by the index)."""
        where = f"intermediate_matches[{index}]"
        if not isinstance(data, Mapping):
            return None, [f"{where}: expected an object, got {type(data).__name__}"]
        errors = _unknown_key_errors(data, MATCH_KEYS, f"{where}: ")
        for key in ("layer_T", "layer_S"):
            if key not in data:
                errors.append(f"{where}.{key}: required")

        def layer(key: str) -> Optional[LayerRef]:
            value = data.get(key)
            if _is_int(value) and value >= 0:
                return value
            if isinstance(value, (list, tuple)) and len(value) == 2 and all(_is_int(v) and v >= 0 for v in value):
                return (value[0], value[1])
            if key in data:
                errors.append(f"{where}.{key}: must be a non-negative integer or a pair of them, got {value!r}")
            return None

        layer_t, layer_s = layer("layer_T"), layer("layer_S")
        feature = data.get("feature", "hidden")
        if feature not in ("hidden", "attention"):
            errors.append(f"{where}.feature: must be 'hidden' or 'attention', got {feature!r}")
        loss = data.get("loss", "hidden_mse")
        if not isinstance(loss, str):
            errors.append(f"{where}.loss: must be a string, got {loss!r}")
        weight = data.get("weight", 1.0)
        if not (_is_number(weight) and weight >= 0):
            errors.append(f"{where}.weight: must be a number >= 0, got {weight!r}")
        proj = data.get("proj")
        parsed_proj = None
        if proj is not None:
            if (
                isinstance(proj, (list, tuple))
                and len(proj) == 3
                and proj[0] == "linear"
                and _is_int(proj[1])
                and _is_int(proj[2])
                and proj[1] >= 1
                and proj[2] >= 1
            ):
                parsed_proj = ("linear", proj[1], proj[2])
            else:
                errors.append(f"{where}.proj: must be [\"linear\", in_dim, out_dim], got {proj!r}")
        proj_side = data.get("proj_side", "student")
        if proj_side not in ("student", "teacher"):
            errors.append(f"{where}.proj_side: must be 'student' or 'teacher', got {proj_side!r}")
        if errors:
            return None, errors
        return (
            cls(
                layer_T=layer_t,  # type: ignore[arg-type]
                layer_S=layer_s,  # type: ignore[arg-type]
                feature=feature,
                loss=loss,
                weight=float(weight),
                proj=parsed_proj,
                proj_side=proj_side,
            ),
            [],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer_T": list(self.layer_T) if isinstance(self.layer_T, tuple) else self.layer_T,
            "layer_S": list(self.layer_S) if isinstance(self.layer_S, tuple) else self.layer_S,
            "feature": self.feature,
            "loss": self.loss,
            "weight": self.weight,
            "proj": list(self.proj) if self.proj is not None else None,
            "proj_side": self.proj_side,
        }


@dataclass(frozen=True)
class DistillationConfig:
    """
    Settings of the distillation objective.

    Attributes:
        kd_loss_type: "ce", "mse", or any registered final-loss name
        temperature: Base temperature, > 0
        temperature_scheduler: Registered temperature scheduler
        temperature_beta: Scheduler sensitivity, >= 0
        kd_loss_weight: Base weight of the soft-label loss, >= 0
        hard_label_weight: Base weight of the gold-label loss, >= 0
        kd_loss_weight_scheduler: Registered weight scheduler
        hard_label_weight_scheduler: Registered weight scheduler
        probability_shift: Swap the teacher's top class with the gold class
        intermediate_matches: Feature matches for the general distiller

    Temperature never applies to the hard-label loss.
    """

    kd_loss_type: str = "ce"
    temperature: float = 8.0
    temperature_scheduler: str = "constant_temperature"
    temperature_beta: float = 1.0
    kd_loss_weight: float = 1.0
    hard_label_weight: float = 0.0
    kd_loss_weight_scheduler: str = "constant"
    hard_label_weight_scheduler: str = "constant"
    probability_shift: bool = False
    intermediate_matches: Tuple[IntermediateMatch, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "intermediate_matches", tuple(self.intermediate_matches))

    @property
    def kd_loss_name(self) -> str:
        """Registry name of the soft-label loss."""
        return KD_LOSS_ALIASES.get(self.kd_loss_type, self.kd_loss_type)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], registry: Optional[LossRegistry] = None) -> "DistillationConfig":
        """
        Build and validate a config; missing keys take defaults.

        Raises:
            ValidationError: Listing unknown keys, bad values and unregistered
                names, each by field
        """
        names = [f.name for f in fields(cls)]
        errors = _unknown_key_errors(data, names, "distillation config: ")
        values = {k: v for k, v in data.items() if k in names and k != "intermediate_matches"}

        for key in ("kd_loss_type", "temperature_scheduler", "kd_loss_weight_scheduler", "hard_label_weight_scheduler"):
            if key in values and not isinstance(values[key], str):
                errors.append(f"{key}: must be a string, got {values[key]!r}")
        for key in ("temperature", "temperature_beta", "kd_loss_weight", "hard_label_weight"):
            if key in values:
                if not _is_number(values[key]):
                    errors.append(f"{key}: must be a number, got {values[key]!r}")
                else:
                    values[key] = float(values[key])
        if "probability_shift" in values and not isinstance(values["probability_shift"], bool):
            errors.append(f"probability_shift: must be true or false, got {values['probability_shift']!r}")

        matches = []
        raw_matches = data.get("intermediate_matches", [])
        if not isinstance(raw_matches, list):
            errors.append(f"intermediate_matches: must be a list, got {type(raw_matches).__name__}")
            raw_matches = []
        for index, raw in enumerate(raw_matches):
            match, match_errors = IntermediateMatch.from_dict(raw, index)
            errors.extend(match_errors)
            if match is not None:
                matches.append(match)
        if errors:
            raise ValidationError(errors)

        config = cls(**values, intermediate_matches=tuple(matches))
        config.validate(registry)
        return config

    def validate(self, registry: Optional[LossRegistry] = None) -> None:
        """
        Check ranges and that every referenced name is registered.

        Raises:
            ValidationError: Listing every violation
        """
        registry = registry or default_registry()
        errors: List[str] = []
        if not self.temperature > 0:
            errors.append(f"temperature: must be > 0, got {self.temperature}")
        if self.temperature_beta < 0:
            errors.append(f"temperature_beta: must be >= 0, got {self.temperature_beta}")
        for key in ("kd_loss_weight", "hard_label_weight"):
            if getattr(self, key) < 0:
                errors.append(f"{key}: must be >= 0, got {getattr(self, key)}")
        if self.kd_loss_weight + self.hard_label_weight <= 0:
            errors.append("kd_loss_weight + hard_label_weight: must be > 0")

        final = registry.loss_names(LossKind.FINAL)
        if self.kd_loss_name not in final:
            errors.append(
                f"kd_loss_type: unknown loss {self.kd_loss_type!r}; use 'ce', 'mse' or one of: {', '.join(final)}"
            )
        for key, kind in (
            ("temperature_scheduler", SchedulerKind.TEMPERATURE),
            ("kd_loss_weight_scheduler", SchedulerKind.WEIGHT),
            ("hard_label_weight_scheduler", SchedulerKind.WEIGHT),
        ):
            name = getattr(self, key)
            if name not in registry.scheduler_names(kind):
                errors.append(
                    f"{key}: unknown scheduler {name!r}; registered {kind.value} schedulers: "
                    f"{', '.join(registry.scheduler_names(kind))}"
                )

        intermediate = registry.loss_names(LossKind.INTERMEDIATE)
        for index, match in enumerate(self.intermediate_matches):
            where = f"intermediate_matches[{index}]"
            if match.loss not in intermediate:
                errors.append(
                    f"{where}.loss: unknown loss {match.loss!r}; registered intermediate losses: "
                    f"{', '.join(intermediate)}"
                )
                continue
            entry = registry.loss(match.loss)
            if entry.feature is not None and entry.feature != match.feature:
                errors.append(f"{where}: loss {match.loss!r} applies to {entry.feature} features, not {match.feature}")
            expected = 2 if entry.arity == 2 else 1
            for side, layers in (("layer_T", match.teacher_layers), ("layer_S", match.student_layers)):
                if len(layers) != expected:
                    shape = "a pair of indices" if expected == 2 else "a single index"
                    errors.append(f"{where}.{side}: loss {match.loss!r} needs {shape}")
            if match.proj is not None and match.feature == "attention":
                errors.append(f"{where}.proj: projections apply to hidden features only")
        if errors:
            raise ValidationError(errors)

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "intermediate_matches"}
        data["intermediate_matches"] = [m.to_dict() for m in self.intermediate_matches]
        return data


def parse_training_config(text: str) -> TrainingConfig:
    """
    Parse a TrainingConfig from JSON text.

    Examples:
        >>> parse_training_config("{}").seed
        42
    """
    return TrainingConfig.from_dict(parse_json(text, "training config"))


def parse_distillation_config(text: str, registry: Optional[LossRegistry] = None) -> DistillationConfig:
    """
    Parse a DistillationConfig from JSON text.

    Examples:
        >>> parse_distillation_config('{"temperature": 8}').temperature
        8.0
    """
    return DistillationConfig.from_dict(parse_json(text, "distillation config"), registry)


def serialize_config(config: Union[TrainingConfig, DistillationConfig]) -> str:
    """Deterministic JSON text (sorted keys) that parses back to an equal config."""
    return json.dumps(config.to_dict(), sort_keys=True, indent=2)


def _hidden_count(spec: ModelSpec) -> int:
    return spec.num_layers + 1


def validate_against_specs(
    config: DistillationConfig,
    teacher_spec: ModelSpec,
    student_spec: ModelSpec,
    registry: Optional[LossRegistry] = None,
) -> None:
    """
    Check every match against the two architectures.

    Layer indices must exist (hidden: 0..num_layers, attention:
    0..num_layers-1) and widths must agree after the optional projection for
    losses that require equal widths.

    Raises:
        ValidationError: Each violation names its match index and reason
    """
    registry = registry or default_registry()
    errors: List[str] = []
    for index, match in enumerate(config.intermediate_matches):
        where = f"intermediate_matches[{index}]"
        entry = registry.loss(match.loss, LossKind.INTERMEDIATE)
        range_ok = True
        for side, spec, layers in (
            ("layer_T", teacher_spec, match.teacher_layers),
            ("layer_S", student_spec, match.student_layers),
        ):
            if match.feature == "attention":
                if spec.kind != ModelKind.TRANSFORMER_ENCODER:
                    errors.append(f"{where}.{side}: a {spec.kind.value} model exposes no attention")
                    range_ok = False
                    continue
                limit = spec.num_layers
            else:
                limit = _hidden_count(spec)
            for layer in layers:
                if not 0 <= layer < limit:
                    errors.append(
                        f"{where}.{side}: {match.feature} index {layer} out of range 0..{limit - 1}"
                    )
                    range_ok = False
        if not range_ok or match.feature != "hidden":
            continue

        teacher_widths = [teacher_spec.hidden_width(i) for i in match.teacher_layers]
        student_widths = [student_spec.hidden_width(i) for i in match.student_layers]
        if match.proj is not None:
            _, in_dim, out_dim = match.proj
            source, target = (
                (student_widths, teacher_widths) if match.proj_side == "student" else (teacher_widths, student_widths)
            )
            if any(w != in_dim for w in source):
                errors.append(
                    f"{where}.proj: input width {in_dim} does not match {match.proj_side} width {source[0]}"
                )
                continue
            if match.proj_side == "student":
                student_widths = [out_dim] * len(student_widths)
            else:
                teacher_widths = [out_dim] * len(teacher_widths)
        if entry.requires_equal_dims and teacher_widths != student_widths:
            if match.proj is None:
                errors.append(
                    f"{where}: {match.loss} between teacher width {teacher_widths[0]} and student width "
                    f"{student_widths[0]} needs proj: [\"linear\", {student_widths[0]}, {teacher_widths[0]}]"
                )
            else:
                errors.append(
                    f"{where}.proj: output width {match.proj[2]} does not match the other side's width"
                )
    if errors:
        raise ValidationError(errors)
