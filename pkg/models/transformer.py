"""Post-norm transformer encoder over a named parameter table."""

import logging
import math
from typing import List, Mapping, Tuple

import numpy as np

from engine import Tensor, gelu, layer_norm, linear, matmul, softmax
from models.spec import ModelSpec


logger = logging.getLogger(__name__)

# Added to attention scores of masked keys; exp(-1e4) underflows to 0.
MASKED_SCORE = -1e4
LAYER_NORM_EPS = 1e-12


def embed(
    spec: ModelSpec,
    params: Mapping[str, Tensor],
    token_ids: np.ndarray,
    segment_ids: np.ndarray,
) -> Tensor:
    """Sum of token, learned position and segment embeddings, layer-normalized."""
    length = token_ids.shape[1]
    x = params["embeddings.token"][token_ids]
    x = x + params["embeddings.position"][:length]
    x = x + params["embeddings.segment"][segment_ids]
    return layer_norm(
        x,
        params["embeddings.layer_norm.gain"],
        params["embeddings.layer_norm.bias"],
        LAYER_NORM_EPS,
    )


def _split_heads(x: Tensor, num_heads: int) -> Tensor:
    batch, length, width = x.shape
    return x.reshape(batch, length, num_heads, width // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    batch, num_heads, length, head_width = x.shape
    return x.transpose(0, 2, 1, 3).reshape(batch, length, num_heads * head_width)


def self_attention(
    spec: ModelSpec,
    params: Mapping[str, Tensor],
    prefix: str,
    x: Tensor,
    inputs_mask: np.ndarray,
) -> Tuple[Tensor, Tensor]:
    """
    Multi-head scaled dot-product self-attention.

    Args:
        spec: Model spec
        params: Parameter table
        prefix: Layer prefix such as "layer.0.attention"
        x: Input of shape (B, L, d)
        inputs_mask: 0/1 array of shape (B, L); 0 marks padding keys

    Returns:
        (attention output of shape (B, L, d), probabilities of shape (B, H, L, L))
    """
    h = spec.num_heads
    q = _split_heads(linear(x, params[f"{prefix}.query.weight"], params[f"{prefix}.query.bias"]), h)
    k = _split_heads(linear(x, params[f"{prefix}.key.weight"], params[f"{prefix}.key.bias"]), h)
    v = _split_heads(linear(x, params[f"{prefix}.value.weight"], params[f"{prefix}.value.bias"]), h)

    scale = 1.0 / math.sqrt(spec.hidden_size // h)
    additive = (1.0 - inputs_mask.astype(np.float64))[:, None, None, :] * MASKED_SCORE
    scores = matmul(q, k.transpose(0, 1, 3, 2)) * scale + additive
    probs = softmax(scores, axis=-1)
    context = _merge_heads(matmul(probs, v))
    out = linear(context, params[f"{prefix}.output.weight"], params[f"{prefix}.output.bias"])
    return out, probs


def encoder_layer(
    spec: ModelSpec,
    params: Mapping[str, Tensor],
    index: int,
    x: Tensor,
    inputs_mask: np.ndarray,
) -> Tuple[Tensor, Tensor]:
    prefix = f"layer.{index}"
    attended, probs = self_attention(spec, params, f"{prefix}.attention", x, inputs_mask)
    x = layer_norm(
        x + attended,
        params[f"{prefix}.attention.layer_norm.gain"],
        params[f"{prefix}.attention.layer_norm.bias"],
        LAYER_NORM_EPS,
    )
    inner = gelu(
        linear(x, params[f"{prefix}.ffn.intermediate.weight"], params[f"{prefix}.ffn.intermediate.bias"])
    )
    ffn = linear(inner, params[f"{prefix}.ffn.output.weight"], params[f"{prefix}.ffn.output.bias"])
    x = layer_norm(
        x + ffn,
        params[f"{prefix}.ffn.layer_norm.gain"],
        params[f"{prefix}.ffn.layer_norm.bias"],
        LAYER_NORM_EPS,
    )
    return x, probs


def encode(
    spec: ModelSpec,
    params: Mapping[str, Tensor],
    token_ids: np.ndarray,
    inputs_mask: np.ndarray,
    segment_ids: np.ndarray,
) -> Tuple[List[Tensor], List[Tensor]]:
    """
    Run the encoder stack.

    Returns:
        (hidden states, attention probabilities); hidden[0] is the embedding
        output and hidden[k] the output of layer k, attention[k] belongs to
        layer k+1
    """
    hidden = [embed(spec, params, token_ids, segment_ids)]
    attention = []
    for index in range(spec.num_layers):
        x, probs = encoder_layer(spec, params, index, hidden[-1], inputs_mask)
        hidden.append(x)
        attention.append(probs)
    return hidden, attention
