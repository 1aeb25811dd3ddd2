"""
Adaptor runtime.

An adaptor explains a model's batch and forward result to a distiller by
returning a mapping with some of the keys in `ADAPTOR_KEYS`. `run_adaptor`
normalizes that mapping into an `AdaptorOutput` and enforces the contract:
unknown keys are rejected, single tensors become one-element lists, and
keys the active configuration needs must be present.
"""

import logging
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence, Tuple

import numpy as np

from engine import ContractError, ShapeError, Tensor, as_tensor
from models.spec import ModelKind, ModelSpec
from models.zoo import ForwardOutput


logger = logging.getLogger(__name__)

ADAPTOR_KEYS = ("logits", "logits_mask", "losses", "hidden", "attention", "inputs_mask", "labels")


@dataclass(frozen=True)
class AdaptorOutput:
    """
    Normalized adaptor result.

    Attributes:
        logits: One tensor per output (two for span extraction)
        logits_mask: One optional mask per logits entry, shaped like its rows
        losses: Precomputed scalar task losses
        hidden: Hidden states, index 0 being the embedding output
        attention: Attention matrices, index k from layer k+1
        inputs_mask: 0/1 array of shape (B, L), or None
        labels: One label array per logits entry; -100 marks missing labels
        keys: Keys the adaptor actually returned
    """

    logits: Tuple[Tensor, ...] = ()
    logits_mask: Tuple[Optional[np.ndarray], ...] = ()
    losses: Tuple[Tensor, ...] = ()
    hidden: Tuple[Tensor, ...] = ()
    attention: Tuple[Tensor, ...] = ()
    inputs_mask: Optional[np.ndarray] = None
    labels: Tuple[np.ndarray, ...] = ()
    keys: frozenset = frozenset()

    def has(self, key: str) -> bool:
        return key in self.keys


def _as_list(value: Any) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _tensors(value: Any) -> Tuple[Tensor, ...]:
    return tuple(as_tensor(v) for v in _as_list(value))


def run_adaptor(
    adaptor: Any,
    batch: Mapping[str, Any],
    outputs: ForwardOutput,
    required: Optional[Mapping[str, str]] = None,
    spec: Optional[ModelSpec] = None,
) -> AdaptorOutput:
    """
    Call an adaptor and validate its result.

    Args:
        adaptor: Callable (batch, outputs) -> mapping
        batch: Loader batch
        outputs: Forward result of the model the adaptor explains
        required: Key -> reason for keys the active configuration needs
        spec: Producing model's spec; when given, hidden/attention list
            lengths are checked against it

    Returns:
        The normalized AdaptorOutput

    Raises:
        ContractError: On a non-mapping result, an unknown key, a result with
            neither logits nor losses, or a missing required key
        ShapeError: If inputs_mask, logits_mask or labels are mis-shaped
    """
    raw = adaptor(batch, outputs)
    if not isinstance(raw, Mapping):
        raise ContractError(f"adaptor must return a mapping, got {type(raw).__name__}")
    unknown = [k for k in raw if k not in ADAPTOR_KEYS]
    if unknown:
        raise ContractError(
            f"adaptor returned unknown key {unknown[0]!r}; allowed keys: {', '.join(ADAPTOR_KEYS)}"
        )
    keys = frozenset(k for k, v in raw.items() if v is not None)
    if "logits" not in keys and "losses" not in keys:
        raise ContractError("adaptor output must contain logits or losses")
    for key, reason in (required or {}).items():
        if key not in keys:
            raise ContractError(f"adaptor output lacks {key!r}, needed by {reason}")

    logits = _tensors(raw["logits"]) if "logits" in keys else ()
    losses = _tensors(raw["losses"]) if "losses" in keys else ()
    for loss in losses:
        if loss.size != 1:
            raise ShapeError(f"adaptor losses must be scalars, got shape {list(loss.shape)}")
    hidden = _tensors(raw["hidden"]) if "hidden" in keys else ()
    attention = _tensors(raw["attention"]) if "attention" in keys else ()

    inputs_mask = None
    if "inputs_mask" in keys:
        inputs_mask = np.asarray(raw["inputs_mask"], dtype=np.float64)
        if "input_ids" in batch:
            expected = tuple(np.shape(batch["input_ids"]))
        elif hidden:
            expected = hidden[0].shape[:2]
        else:
            expected = inputs_mask.shape
        if inputs_mask.ndim != 2 or inputs_mask.shape != expected:
            raise ShapeError(
                f"adaptor inputs_mask has shape {list(inputs_mask.shape)}, expected {list(expected)}"
            )

    logits_mask: Tuple[Optional[np.ndarray], ...] = (None,) * len(logits)
    if "logits_mask" in keys:
        masks = raw["logits_mask"]
        masks = list(masks) if isinstance(masks, (list, tuple)) else [masks] * len(logits)
        if len(masks) != len(logits):
            raise ContractError(f"adaptor returned {len(masks)} logits masks for {len(logits)} logits")
        checked = []
        for z, m in zip(logits, masks):
            if m is not None:
                m = np.asarray(m, dtype=np.float64)
                if m.shape != z.shape[:-1]:
                    raise ShapeError(
                        f"adaptor logits_mask has shape {list(m.shape)}, expected {list(z.shape[:-1])}"
                    )
            checked.append(m)
        logits_mask = tuple(checked)

    labels: Tuple[np.ndarray, ...] = ()
    if "labels" in keys:
        labels = tuple(np.asarray(v) for v in _as_list(raw["labels"]))
        if logits and len(labels) != len(logits):
            raise ContractError(f"adaptor returned {len(labels)} label arrays for {len(logits)} logits")
        for z, y in zip(logits, labels):
            if y.shape != z.shape[:-1]:
                raise ShapeError(f"adaptor labels have shape {list(y.shape)}, expected {list(z.shape[:-1])}")

    if spec is not None:
        if hidden and len(hidden) != spec.num_layers + 1:
            raise ContractError(
                f"adaptor returned {len(hidden)} hidden states; the model has {spec.num_layers + 1}"
            )
        expected_attention = spec.num_layers if spec.kind == ModelKind.TRANSFORMER_ENCODER else 0
        if attention and len(attention) != expected_attention:
            raise ContractError(
                f"adaptor returned {len(attention)} attention matrices; the model has {expected_attention}"
            )

    return AdaptorOutput(
        logits=logits,
        logits_mask=logits_mask,
        losses=losses,
        hidden=hidden,
        attention=attention,
        inputs_mask=inputs_mask,
        labels=labels,
        keys=keys,
    )


def batch_labels(batch: Mapping[str, Any]) -> Optional[Sequence[np.ndarray]]:
    """Gold labels of a loader batch in logits order, or None when unlabeled."""
    if "labels" in batch:
        return [np.asarray(batch["labels"])]
    if "start_positions" in batch and "end_positions" in batch:
        return [np.asarray(batch["start_positions"]), np.asarray(batch["end_positions"])]
    return None


def default_adaptor(batch: Mapping[str, Any], outputs: ForwardOutput) -> dict:
    """
    Adaptor exposing everything a model produces.

    Per-position logits (tagging) get the inputs mask as their logits mask.
    """
    mask = np.asarray(batch["inputs_mask"], dtype=np.float64)
    logits = list(outputs.logits) if isinstance(outputs.logits, tuple) else [outputs.logits]
    result = {
        "logits": logits,
        "hidden": list(outputs.hidden),
        "attention": list(outputs.attention),
        "inputs_mask": mask,
        "logits_mask": [mask if z.ndim == 3 else None for z in logits],
    }
    labels = batch_labels(batch)
    if labels is not None:
        result["labels"] = labels
    return result


def minimal_adaptor(batch: Mapping[str, Any], outputs: ForwardOutput) -> dict:
    """Adaptor explaining only the logits."""
    return {"logits": outputs.logits}
