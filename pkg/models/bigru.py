"""Bidirectional GRU encoder over a named parameter table."""

import logging
from typing import List, Mapping, Tuple

import numpy as np

from engine import Tensor, concat, linear, stack
from models.spec import ModelSpec


logger = logging.getLogger(__name__)


def _run_direction(
    gates_in: Tensor,
    recurrent_weight: Tensor,
    recurrent_bias: Tensor,
    inputs_mask: np.ndarray,
    hidden_size: int,
    reverse: bool,
) -> Tensor:
    """
    Unroll one GRU direction.

    Gates follow the [reset | update | candidate] layout:
        r = sigmoid(i_r + h_r), z = sigmoid(i_z + h_z)
        n = tanh(i_n + r * h_n), h' = (1 - z) * n + z * h
    Padded steps carry the previous state unchanged.

    Args:
        gates_in: Input projections of shape (B, L, 3h), biases included
        recurrent_weight: (h, 3h)
        recurrent_bias: (3h,)
        inputs_mask: 0/1 array of shape (B, L)
        hidden_size: h
        reverse: Walk positions from last to first

    Returns:
        States of shape (B, L, h) in position order
    """
    batch, length, _ = gates_in.shape
    h = hidden_size
    state = Tensor(np.zeros((batch, h)))
    mask = inputs_mask.astype(np.float64)
    states: List[Tensor] = [state] * length
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for t in steps:
        step_in = gates_in[:, t]
        step_rec = linear(state, recurrent_weight, recurrent_bias)
        reset = (step_in[:, :h] + step_rec[:, :h]).sigmoid()
        update = (step_in[:, h : 2 * h] + step_rec[:, h : 2 * h]).sigmoid()
        candidate = (step_in[:, 2 * h :] + reset * step_rec[:, 2 * h :]).tanh()
        new_state = (1.0 - update) * candidate + update * state
        keep = mask[:, t : t + 1]
        state = new_state * keep + state * (1.0 - keep)
        states[t] = state
    return stack(states, axis=1)


def encode(
    spec: ModelSpec,
    params: Mapping[str, Tensor],
    token_ids: np.ndarray,
    inputs_mask: np.ndarray,
) -> Tuple[List[Tensor], List[Tensor]]:
    """
    Run the bidirectional stack.

    Returns:
        (hidden states, []); hidden[0] is the token embedding lookup of width
        hidden_size and hidden[k] the concatenated directions of layer k, of
        width 2·hidden_size. The encoder exposes no attention.
    """
    hidden = [params["embeddings.token"][token_ids]]
    for index in range(spec.num_layers):
        x = hidden[-1]
        outputs = []
        for direction in ("forward", "backward"):
            prefix = f"layer.{index}.{direction}"
            gates_in = linear(x, params[f"{prefix}.input.weight"], params[f"{prefix}.input.bias"])
            outputs.append(
                _run_direction(
                    gates_in,
                    params[f"{prefix}.recurrent.weight"],
                    params[f"{prefix}.recurrent.bias"],
                    inputs_mask,
                    spec.hidden_size,
                    reverse=direction == "backward",
                )
            )
        hidden.append(concat(outputs, axis=-1))
    return hidden, []
