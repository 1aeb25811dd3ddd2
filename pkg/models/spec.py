"""
Architecture descriptions and closed-form parameter accounting.

A `ModelSpec` fully determines a model's parameter set: `parameter_shapes`
lists every parameter name with its shape in the canonical order used for
initialization and for the weight file, and `count_parameters` derives the
size figures from the same formulas without instantiating
anything.
"""

import difflib
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Tuple

from engine.errors import ConfigParseError, ConfigurationError, ValidationError


logger = logging.getLogger(__name__)

Shape = Tuple[int, ...]


def parse_json(text: str, what: str) -> Dict[str, Any]:
    """
    Parse a JSON object.

    Raises:
        ConfigParseError: If the text is not well-formed JSON (with location)
        ValidationError: If the top level is not an object
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigParseError(f"{what}: malformed JSON: {e.msg}", line=e.lineno, column=e.colno) from e
    if not isinstance(data, dict):
        raise ValidationError([f"{what}: expected a JSON object, got {type(data).__name__}"])
    return data


class ModelKind(str, Enum):
    """Encoder family enumeration."""

    TRANSFORMER_ENCODER = "transformer_encoder"
    BIGRU = "bigru"


class HeadKind(str, Enum):
    """Task head enumeration."""

    CLASSIFICATION = "classification"
    TAGGING = "tagging"
    SPAN_EXTRACTION = "span_extraction"


@dataclass(frozen=True)
class HeadSpec:
    """
    Task head on top of an encoder.

    Attributes:
        kind: Head family
        num_labels: Classes (classification) or tags (tagging); span heads
            always emit two logits per position and ignore this field
        name: Head identifier, unique within a model ("main" by default)
    """

    kind: HeadKind
    num_labels: int = 2
    name: str = "main"

    def __post_init__(self) -> None:
        if not isinstance(self.kind, HeadKind):
            object.__setattr__(self, "kind", HeadKind(self.kind))

    @property
    def output_size(self) -> int:
        return 2 if self.kind == HeadKind.SPAN_EXTRACTION else self.num_labels

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "num_labels": self.num_labels, "name": self.name}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "HeadSpec":
        _reject_unknown(data, {"kind", "num_labels", "name"}, "head")
        try:
            kind = HeadKind(data.get("kind", "classification"))
        except ValueError:
            choices = ", ".join(k.value for k in HeadKind)
            raise ConfigurationError(f"head.kind: unknown head {data.get('kind')!r} (one of {choices})")
        return cls(kind=kind, num_labels=int(data.get("num_labels", 2)), name=str(data.get("name", "main")))


@dataclass(frozen=True)
class ModelSpec:
    """
    Architecture description of a teacher or student encoder with its heads.

    Attributes:
        kind: Encoder family
        num_layers: Encoder layers; 0 is allowed for size analysis only
        hidden_size: Model width (per-direction width for bigru)
        feed_forward_size: Inner width of the feed-forward block (transformer)
        num_heads: Attention heads, must divide hidden_size (transformer)
        vocab_size: Token vocabulary size, >= 2
        max_positions: Longest supported sequence
        num_segment_types: Segment embedding rows (transformer)
        heads: Task heads; the first is the default head
        freeze_embeddings: Exclude embedding tables from training

    Examples:
        >>> spec = ModelSpec(kind=ModelKind.TRANSFORMER_ENCODER, num_layers=2,
        ...                  hidden_size=8, feed_forward_size=16, num_heads=2,
        ...                  vocab_size=11, max_positions=16)
        >>> count_parameters(spec).total
        1448
    """

    kind: ModelKind
    num_layers: int
    hidden_size: int
    vocab_size: int
    max_positions: int
    feed_forward_size: int = 0
    num_heads: int = 1
    num_segment_types: int = 2
    heads: Tuple[HeadSpec, ...] = field(default_factory=lambda: (HeadSpec(HeadKind.CLASSIFICATION, 2),))
    freeze_embeddings: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.kind, ModelKind):
            object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "heads", tuple(self.heads))

    @property
    def head(self) -> HeadSpec:
        """The default (first) head."""
        return self.heads[0]

    @property
    def output_width(self) -> int:
        """Width of hidden states after the encoder (2·hidden_size for bigru)."""
        return 2 * self.hidden_size if self.kind == ModelKind.BIGRU else self.hidden_size

    def hidden_width(self, index: int) -> int:
        """Width of hidden state `index` (0 = embeddings output)."""
        return self.hidden_size if index == 0 else self.output_width

    def get_head(self, name: Optional[str]) -> HeadSpec:
        if name is None:
            return self.head
        for head in self.heads:
            if head.name == name:
                return head
        known = ", ".join(h.name for h in self.heads)
        raise ConfigurationError(f"unknown head {name!r}; model heads: {known}")

    def validate(self, for_training: bool = True) -> None:
        """
        Check every structural constraint.

        Args:
            for_training: When True, num_layers must be >= 1

        Raises:
            ConfigurationError: Listing every violated constraint
        """
        problems = []
        minimum_layers = 1 if for_training else 0
        if self.num_layers < minimum_layers:
            problems.append(f"num_layers must be >= {minimum_layers}, got {self.num_layers}")
        if self.hidden_size < 1:
            problems.append(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.vocab_size < 2:
            problems.append(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.max_positions < 1:
            problems.append(f"max_positions must be >= 1, got {self.max_positions}")
        if self.kind == ModelKind.TRANSFORMER_ENCODER:
            if self.feed_forward_size < 1:
                problems.append(f"feed_forward_size must be >= 1, got {self.feed_forward_size}")
            if self.num_heads < 1:
                problems.append(f"num_heads must be >= 1, got {self.num_heads}")
            elif self.hidden_size % self.num_heads != 0:
                problems.append(
                    f"hidden_size ({self.hidden_size}) must be divisible by num_heads ({self.num_heads})"
                )
            if self.num_segment_types < 1:
                problems.append(f"num_segment_types must be >= 1, got {self.num_segment_types}")
        if not self.heads:
            problems.append("at least one head is required")
        names = [h.name for h in self.heads]
        if len(set(names)) != len(names):
            problems.append(f"head names must be unique, got {names}")
        for head in self.heads:
            if head.kind != HeadKind.SPAN_EXTRACTION and head.num_labels < 2:
                problems.append(f"head {head.name!r}: num_labels must be >= 2, got {head.num_labels}")
        if problems:
            raise ConfigurationError(f"invalid model spec: {'; '.join(problems)}")

    def with_heads(self, *heads: HeadSpec) -> "ModelSpec":
        return replace(self, heads=tuple(heads))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "num_layers": self.num_layers,
            "hidden_size": self.hidden_size,
            "feed_forward_size": self.feed_forward_size,
            "num_heads": self.num_heads,
            "vocab_size": self.vocab_size,
            "max_positions": self.max_positions,
            "num_segment_types": self.num_segment_types,
            "heads": [h.to_dict() for h in self.heads],
            "freeze_embeddings": self.freeze_embeddings,
        }

    def canonical_json(self) -> str:
        """Sorted-key compact JSON; the form stored in weight files."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        """
        Parse a spec from its JSON object form.

        Either `head` (one object) or `heads` (a list) may describe the heads.

        Raises:
            ConfigurationError: On unknown keys, missing keys or bad values
        """
        _reject_unknown(data, _SPEC_KEYS, "model spec")
        missing = [k for k in ("kind", "num_layers", "hidden_size", "vocab_size", "max_positions") if k not in data]
        if missing:
            raise ConfigurationError(f"model spec: missing required keys {missing}")
        if "head" in data and "heads" in data:
            raise ConfigurationError("model spec: give either 'head' or 'heads', not both")
        if "heads" in data:
            heads = tuple(HeadSpec.from_dict(h) for h in data["heads"])
        elif "head" in data:
            heads = (HeadSpec.from_dict(data["head"]),)
        else:
            heads = (HeadSpec(HeadKind.CLASSIFICATION, 2),)
        try:
            kind = ModelKind(data["kind"])
        except ValueError:
            choices = ", ".join(k.value for k in ModelKind)
            raise ConfigurationError(f"kind: unknown model kind {data['kind']!r} (one of {choices})")
        return cls(
            kind=kind,
            num_layers=int(data["num_layers"]),
            hidden_size=int(data["hidden_size"]),
            feed_forward_size=int(data.get("feed_forward_size", 0)),
            num_heads=int(data.get("num_heads", 1)),
            vocab_size=int(data["vocab_size"]),
            max_positions=int(data["max_positions"]),
            num_segment_types=int(data.get("num_segment_types", 2)),
            heads=heads,
            freeze_embeddings=bool(data.get("freeze_embeddings", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(parse_json(text, "model spec"))


_SPEC_KEYS = {
    "kind",
    "num_layers",
    "hidden_size",
    "feed_forward_size",
    "num_heads",
    "vocab_size",
    "max_positions",
    "num_segment_types",
    "head",
    "heads",
    "freeze_embeddings",
}


def _reject_unknown(data: Mapping[str, Any], allowed: set, where: str) -> None:
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"{where}: expected a JSON object, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            hint = difflib.get_close_matches(key, sorted(allowed), n=1)
            suggestion = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigurationError(f"{where}: unknown key {key!r}{suggestion}")


@dataclass(frozen=True)
class ParameterCount:
    """
    Encoder size figures (task heads excluded).

    Attributes:
        total: All encoder parameters including embedding tables
        embedding: Embedding tables plus the embedding layer norm
        non_embedding: total - embedding
    """

    total: int
    embedding: int
    non_embedding: int


def embedding_shapes(spec: ModelSpec) -> "OrderedDict[str, Shape]":
    d = spec.hidden_size
    shapes: "OrderedDict[str, Shape]" = OrderedDict()
    shapes["embeddings.token"] = (spec.vocab_size, d)
    if spec.kind == ModelKind.TRANSFORMER_ENCODER:
        shapes["embeddings.position"] = (spec.max_positions, d)
        shapes["embeddings.segment"] = (spec.num_segment_types, d)
        shapes["embeddings.layer_norm.gain"] = (d,)
        shapes["embeddings.layer_norm.bias"] = (d,)
    return shapes


def layer_shapes(spec: ModelSpec, index: int) -> "OrderedDict[str, Shape]":
    """Parameter shapes of encoder layer `index` (0-based)."""
    d, ff = spec.hidden_size, spec.feed_forward_size
    prefix = f"layer.{index}"
    shapes: "OrderedDict[str, Shape]" = OrderedDict()
    if spec.kind == ModelKind.TRANSFORMER_ENCODER:
        for name in ("query", "key", "value", "output"):
            shapes[f"{prefix}.attention.{name}.weight"] = (d, d)
            shapes[f"{prefix}.attention.{name}.bias"] = (d,)
        shapes[f"{prefix}.attention.layer_norm.gain"] = (d,)
        shapes[f"{prefix}.attention.layer_norm.bias"] = (d,)
        shapes[f"{prefix}.ffn.intermediate.weight"] = (d, ff)
        shapes[f"{prefix}.ffn.intermediate.bias"] = (ff,)
        shapes[f"{prefix}.ffn.output.weight"] = (ff, d)
        shapes[f"{prefix}.ffn.output.bias"] = (d,)
        shapes[f"{prefix}.ffn.layer_norm.gain"] = (d,)
        shapes[f"{prefix}.ffn.layer_norm.bias"] = (d,)
    else:
        d_in = d if index == 0 else 2 * d
        for direction in ("forward", "backward"):
            # gates stacked as [reset | update | candidate]
            shapes[f"{prefix}.{direction}.input.weight"] = (d_in, 3 * d)
            shapes[f"{prefix}.{direction}.input.bias"] = (3 * d,)
            shapes[f"{prefix}.{direction}.recurrent.weight"] = (d, 3 * d)
            shapes[f"{prefix}.{direction}.recurrent.bias"] = (3 * d,)
    return shapes


def head_shapes(spec: ModelSpec, head: HeadSpec) -> "OrderedDict[str, Shape]":
    width = spec.output_width
    prefix = f"head.{head.name}"
    shapes: "OrderedDict[str, Shape]" = OrderedDict()
    if head.kind == HeadKind.CLASSIFICATION:
        shapes[f"{prefix}.pooler.weight"] = (width, spec.hidden_size)
        shapes[f"{prefix}.pooler.bias"] = (spec.hidden_size,)
        shapes[f"{prefix}.classifier.weight"] = (spec.hidden_size, head.output_size)
    else:
        shapes[f"{prefix}.classifier.weight"] = (width, head.output_size)
    shapes[f"{prefix}.classifier.bias"] = (head.output_size,)
    return shapes


def parameter_shapes(spec: ModelSpec) -> "OrderedDict[str, Shape]":
    """
    Every parameter of a model built from `spec`, in canonical order.

    The order is embeddings, layers 0..L-1, then heads in declaration order.
    It is the initialization order and the weight-file order.
    """
    shapes = embedding_shapes(spec)
    for index in range(spec.num_layers):
        shapes.update(layer_shapes(spec, index))
    for head in spec.heads:
        shapes.update(head_shapes(spec, head))
    return shapes


def _numel(shape: Shape) -> int:
    n = 1
    for extent in shape:
        n *= extent
    return n


def count_parameters(spec: ModelSpec) -> ParameterCount:
    """
    Closed-form encoder size, embeddings included and task heads excluded.

    For a transformer with vocabulary V, positions P, segment types S, width d,
    feed-forward width f and L layers:

        embedding = (V + P + S)·d + 2d
        per layer = 4(d² + d) + 2d + (d·f + f) + (f·d + d) + 2d

    A bigru has token embeddings V·d only, and per layer and direction
    3h·d_in + 3h·h + 6h, where d_in is d for the first layer and 2h above it.

    Raises:
        ConfigurationError: If the spec is structurally invalid
    """
    spec.validate(for_training=False)
    embedding = sum(_numel(s) for s in embedding_shapes(spec).values())
    layers = sum(
        _numel(s) for index in range(spec.num_layers) for s in layer_shapes(spec, index).values()
    )
    return ParameterCount(total=embedding + layers, embedding=embedding, non_embedding=layers)


def _transformer(layers: int, hidden: int, ff: int, heads: int, **overrides: Any) -> ModelSpec:
    params: Dict[str, Any] = dict(
        kind=ModelKind.TRANSFORMER_ENCODER,
        num_layers=layers,
        hidden_size=hidden,
        feed_forward_size=ff,
        num_heads=heads,
        vocab_size=30522,
        max_positions=512,
    )
    params.update(overrides)
    return ModelSpec(**params)


# Full-size specs exist for size analysis; the desk specs train in seconds.
NAMED_SPECS: Dict[str, ModelSpec] = {
    "bert_base": _transformer(12, 768, 3072, 12),
    "t6": _transformer(6, 768, 3072, 12),
    "t3": _transformer(3, 768, 3072, 12),
    "t3_small": _transformer(3, 384, 1536, 12),
    "t4_tiny": _transformer(4, 312, 1200, 12),
    "bigru": ModelSpec(
        kind=ModelKind.BIGRU, num_layers=1, hidden_size=768, vocab_size=30522, max_positions=512
    ),
    "teacher_desk": _transformer(4, 32, 64, 4, vocab_size=64, max_positions=32),
    "t2_micro": _transformer(2, 24, 48, 2, vocab_size=64, max_positions=32),
    "t1_nano": _transformer(1, 16, 32, 2, vocab_size=64, max_positions=32),
    "bigru_desk": ModelSpec(
        kind=ModelKind.BIGRU, num_layers=1, hidden_size=16, vocab_size=64, max_positions=32
    ),
}


def named_spec(name: str) -> ModelSpec:
    try:
        return NAMED_SPECS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model spec {name!r}; named specs: {', '.join(sorted(NAMED_SPECS))}"
        )


def spec_names() -> List[str]:
    return list(NAMED_SPECS)
