"""
Model instantiation and forward passes.

`build_model` turns a `ModelSpec` into a `Model` whose named parameters are
exactly `parameter_shapes(spec)`. A forward pass returns logits for one head
together with every hidden state and attention matrix, which is what the
distillation adaptors consume.
"""

import hashlib
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from engine import ContractError, Init, InputError, ShapeError, Tensor, create, linear
from engine.functional import masked_mean
from models import bigru, transformer
from models.spec import HeadKind, HeadSpec, ModelKind, ModelSpec, parameter_shapes


logger = logging.getLogger(__name__)

INIT_STD = 0.02
# Added to span logits at padded positions.
MASKED_LOGIT = -1e4

Logits = Union[Tensor, Tuple[Tensor, Tensor]]


@dataclass(frozen=True)
class ForwardOutput:
    """
    Result of one forward pass.

    Attributes:
        logits: (B, C) for classification, (B, L, C) for tagging, or a
            (start, end) pair of (B, L) tensors for span extraction
        hidden: num_layers + 1 tensors of shape (B, L, width); entry 0 is the
            embedding output
        attention: num_layers tensors of shape (B, H, L, L) (empty for bigru)
    """

    logits: Logits
    hidden: Tuple[Tensor, ...]
    attention: Tuple[Tensor, ...]


class Model:
    """
    Named parameter table plus the spec that shaped it.

    Attributes:
        spec: Architecture description
        parameters: Ordered name -> Tensor map in canonical order
    """

    def __init__(self, spec: ModelSpec, parameters: "OrderedDict[str, Tensor]"):
        expected = parameter_shapes(spec)
        if list(parameters) != list(expected):
            missing = sorted(set(expected) - set(parameters))
            extra = sorted(set(parameters) - set(expected))
            raise ContractError(f"parameter names do not match spec: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if parameters[name].shape != shape:
                raise ShapeError(
                    f"parameter {name}: shape {list(parameters[name].shape)} but spec implies {list(shape)}"
                )
        self.spec = spec
        self.parameters = parameters

    def __call__(self, batch: Mapping[str, Any], head: Optional[str] = None) -> ForwardOutput:
        """
        Forward a loader batch (keys `input_ids`, `inputs_mask`, optional
        `segment_ids`; other keys are ignored).
        """
        return forward(
            self,
            batch["input_ids"],
            batch["inputs_mask"],
            segment_ids=batch.get("segment_ids"),
            head=head,
        )

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        return list(self.parameters.items())

    def trainable_parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict((n, p) for n, p in self.parameters.items() if p.requires_grad)

    def zero_grad(self) -> None:
        for p in self.parameters.values():
            p.grad = None

    def freeze(self) -> "Model":
        """Stop gradients into every parameter (used for teachers)."""
        for p in self.parameters.values():
            p.requires_grad = False
            p.grad = None
        return self

    @property
    def frozen(self) -> bool:
        return not any(p.requires_grad for p in self.parameters.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters.values())

    def checksum(self) -> str:
        """SHA-256 over parameter names and values; detects any weight change."""
        digest = hashlib.sha256()
        for name, p in self.parameters.items():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
        return digest.hexdigest()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.numpy() for name, p in self.parameters.items()}

    def __repr__(self) -> str:
        return (
            f"Model(kind={self.spec.kind.value}, layers={self.spec.num_layers}, "
            f"hidden={self.spec.hidden_size}, parameters={self.num_parameters()})"
        )


def _initializer(name: str) -> Init:
    if name.endswith(".bias"):
        return Init.zeros()
    if name.endswith(".gain"):
        return Init.constant(1.0)
    return Init.normal(0.0, INIT_STD)


def build_model(spec: ModelSpec, seed: int) -> Model:
    """
    Instantiate a trainable model.

    Weights are drawn from N(0, 0.02) by one generator seeded with `seed`,
    walking parameters in canonical order; biases start at 0 and layer-norm
    gains at 1. Embedding tables do not require grad when the spec freezes
    embeddings.

    Raises:
        ConfigurationError: If the spec is invalid (including num_layers = 0)

    Examples:
        >>> model = build_model(named_spec("t1_nano"), seed=7)
        >>> model.checksum() == build_model(named_spec("t1_nano"), seed=7).checksum()
        True
    """
    spec.validate(for_training=True)
    rng = np.random.default_rng(seed)
    parameters: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, shape in parameter_shapes(spec).items():
        trainable = not (spec.freeze_embeddings and name.startswith("embeddings."))
        parameters[name] = create(shape, _initializer(name), requires_grad=trainable, rng=rng)
    model = Model(spec, parameters)
    logger.debug(f"Built {model!r} with seed {seed}")
    return model


def _check_inputs(
    spec: ModelSpec,
    token_ids: Any,
    inputs_mask: Any,
    segment_ids: Any,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    ids = np.asarray(token_ids)
    if ids.ndim != 2:
        raise ShapeError(f"forward: token_ids must be (batch, positions), got {list(ids.shape)}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise InputError(f"forward: token_ids must be integers, got dtype {ids.dtype}")
    mask = np.asarray(inputs_mask)
    if mask.shape != ids.shape:
        raise ShapeError(
            f"forward: inputs_mask shape {list(mask.shape)} does not match token_ids {list(ids.shape)}"
        )
    if not np.all((mask == 0) | (mask == 1)):
        raise InputError("forward: inputs_mask must contain only 0 and 1")
    if ids.shape[1] > spec.max_positions:
        raise InputError(f"forward: {ids.shape[1]} positions exceed max_positions {spec.max_positions}")
    bad = np.argwhere((ids < 0) | (ids >= spec.vocab_size))
    if bad.size:
        b, pos = (int(v) for v in bad[0])
        raise InputError(
            f"forward: token id {int(ids[b, pos])} out of vocabulary [0, {spec.vocab_size}) "
            f"at batch {b}, position {pos}"
        )
    if segment_ids is None:
        segments = np.zeros_like(ids)
    else:
        segments = np.asarray(segment_ids)
        if segments.shape != ids.shape:
            raise ShapeError(
                f"forward: segment_ids shape {list(segments.shape)} does not match {list(ids.shape)}"
            )
        if np.any((segments < 0) | (segments >= spec.num_segment_types)):
            raise InputError(f"forward: segment ids must lie in [0, {spec.num_segment_types})")
    return ids.astype(np.int64), mask.astype(np.float64), segments.astype(np.int64)


def apply_head(
    model: Model, head: HeadSpec, final_hidden: Tensor, inputs_mask: np.ndarray
) -> Logits:
    """
    Task head over the last hidden state.

    Classification pools with a masked mean followed by a tanh dense layer;
    tagging and span heads are per-position linear maps. Span start/end
    logits of padded positions are pushed down by 1e4.
    """
    p = model.parameters
    prefix = f"head.{head.name}"
    if head.kind == HeadKind.CLASSIFICATION:
        pooled = masked_mean(final_hidden, inputs_mask)
        pooled = linear(pooled, p[f"{prefix}.pooler.weight"], p[f"{prefix}.pooler.bias"]).tanh()
        return linear(pooled, p[f"{prefix}.classifier.weight"], p[f"{prefix}.classifier.bias"])
    scores = linear(final_hidden, p[f"{prefix}.classifier.weight"], p[f"{prefix}.classifier.bias"])
    if head.kind == HeadKind.TAGGING:
        return scores
    penalty = (1.0 - inputs_mask) * MASKED_LOGIT
    return scores[:, :, 0] + penalty, scores[:, :, 1] + penalty


def forward(
    model: Model,
    token_ids: Any,
    inputs_mask: Any,
    segment_ids: Any = None,
    head: Optional[str] = None,
) -> ForwardOutput:
    """
    Run the encoder and one task head.

    Args:
        model: Model to run
        token_ids: Integer array of shape (B, L)
        inputs_mask: 0/1 array of shape (B, L); 0 marks padding
        segment_ids: Optional integer array of shape (B, L) (transformer only)
        head: Head name (default: the spec's first head)

    Returns:
        ForwardOutput with logits, hidden states and attention matrices

    Raises:
        InputError: If a token id is outside the vocabulary (names batch and
            position) or the mask is not 0/1
        ShapeError: If the mask or segment shape differs from token_ids
    """
    spec = model.spec
    head_spec = spec.get_head(head)
    ids, mask, segments = _check_inputs(spec, token_ids, inputs_mask, segment_ids)
    if spec.kind == ModelKind.TRANSFORMER_ENCODER:
        hidden, attention = transformer.encode(spec, model.parameters, ids, mask, segments)
    else:
        hidden, attention = bigru.encode(spec, model.parameters, ids, mask)
    logits = apply_head(model, head_spec, hidden[-1], mask)
    return ForwardOutput(logits=logits, hidden=tuple(hidden), attention=tuple(attention))
