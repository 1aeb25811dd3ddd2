"""Neural-network functions built on the tensor core."""

import math
from typing import Optional, Sequence

import numpy as np

from engine.errors import ConfigurationError, ShapeError
from engine.tensor import ArrayLike, Tensor, as_tensor, matmul, sqrt

# gelu uses the tanh approximation:
#   gelu(x) = 0.5 * x * (1 + tanh(GELU_COEF * (x + GELU_CUBIC * x**3)))
GELU_COEF = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715


def gelu_scalar(x: float) -> float:
    """Reference scalar gelu, the formula `gelu` implements."""
    return 0.5 * x * (1.0 + math.tanh(GELU_COEF * (x + GELU_CUBIC * x**3)))


def gelu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    inner = GELU_COEF * (x.data + GELU_CUBIC * x.data**3)
    t = np.tanh(inner)
    out = 0.5 * x.data * (1.0 + t)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        d_inner = GELU_COEF * (1.0 + 3.0 * GELU_CUBIC * x.data**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * d_inner),)

    return Tensor._from_op(out, (x,), backward, "gelu")


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    """
    Numerically stable softmax along `axis` (max-subtracted).

    Raises:
        ShapeError: If `axis` is out of range for the input
    """
    x = as_tensor(x)
    _check_axis(x, axis, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return ((g - (g * out).sum(axis=axis, keepdims=True)) * out,)

    return Tensor._from_op(out, (x,), backward, "softmax")


def log_softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _check_axis(x, axis, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward, "log_softmax")


def layer_norm(x: ArrayLike, gain: ArrayLike, bias: ArrayLike, eps: float = 1e-12) -> Tensor:
    """
    Normalize the last axis to zero mean and unit variance, then scale and shift.

    Args:
        x: Input of shape (..., d)
        gain: Scale of shape (d,)
        bias: Shift of shape (d,)
        eps: Variance floor, > 0

    Raises:
        ShapeError: If gain/bias length differs from the last extent
        ConfigurationError: If eps <= 0
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if eps <= 0:
        raise ConfigurationError(f"layer_norm: eps must be > 0, got {eps}")
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain {list(gain.shape)} / bias {list(bias.shape)} do not match "
            f"last extent of {list(x.shape)}"
        )
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / sqrt(variance + eps) * gain + bias


def linear(x: ArrayLike, weight: ArrayLike, bias: Optional[ArrayLike] = None) -> Tensor:
    """Affine map `x @ weight + bias` with weight of shape (in, out)."""
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """
    Mean over the position axis of (B, L, d) values, ignoring masked positions.

    Args:
        x: Values of shape (B, L, d)
        mask: 0/1 array of shape (B, L)
    """
    m = np.asarray(mask, dtype=np.float64)
    counts = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    return (x * m[:, :, None]).sum(axis=1) / counts


def _check_axis(x: Tensor, axis: int, op: str) -> None:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"{op}: axis {axis} invalid for shape {list(x.shape)}")
