"""
Distillation loss functions.

Final-output losses take a `SoftLabelInputs`; intermediate losses take one or
two `FeaturePair`s. Teacher-side values are always constants: they are
detached before any arithmetic, so no gradient reaches a teacher.

kd_ce_loss does not rescale by T². The relative size of the soft-label term
is set explicitly through `kd_loss_weight`.
"""

import logging
from dataclasses import dataclass
from typing import Any, Optional, Tuple, Union

import numpy as np

from engine import (
    ConfigurationError,
    ContractError,
    Init,
    InputError,
    ShapeError,
    Tensor,
    as_tensor,
    create,
    linear,
    log_softmax,
    matmul,
    softmax,
)


logger = logging.getLogger(__name__)

IGNORE_INDEX = -100
# Keeps cosine and normalization denominators positive for zero vectors.
EPS = 1e-12

Temperature = Union[float, np.ndarray]


def _constant(value: Any) -> Tensor:
    """Teacher-side value as a graph-free tensor."""
    return value.detach() if isinstance(value, Tensor) else as_tensor(value)


def _temperature_array(temperature: Temperature, shape: Tuple[int, ...]) -> np.ndarray:
    """Broadcastable temperature: a scalar, or one value per sample."""
    t = np.asarray(temperature, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t <= 0):
        raise ConfigurationError(f"temperature must be > 0, got {temperature}")
    if t.ndim == 0:
        return t
    if t.shape != (shape[0],):
        raise ShapeError(
            f"temperature: per-sample shape {list(t.shape)} does not match batch of logits {list(shape)}"
        )
    return t.reshape((shape[0],) + (1,) * (len(shape) - 1))


def _row_mask(mask: Optional[np.ndarray], row_shape: Tuple[int, ...]) -> np.ndarray:
    if mask is None:
        return np.ones(row_shape)
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != row_shape:
        raise ShapeError(f"mask shape {list(m.shape)} does not match rows {list(row_shape)}")
    return m


def _masked_row_mean(values: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of per-row values over rows with mask 1 (0 when no row counts)."""
    count = mask.sum()
    if count == 0:
        return (values * 0.0).sum()
    return (values * mask).sum() / float(count)


@dataclass(frozen=True)
class SoftLabelInputs:
    """
    Inputs of a final-output loss.

    Attributes:
        teacher_logits: (B, C) or (B, L, C); treated as a constant
        student_logits: Same shape as teacher_logits
        temperature: Scalar or per-sample vector of shape (B,), > 0
        labels: Optional gold labels of shape logits.shape[:-1]; -100 marks
            rows without a label
        logits_mask: Optional 0/1 mask of shape logits.shape[:-1]
    """

    teacher_logits: Any
    student_logits: Tensor
    temperature: Temperature = 1.0
    labels: Optional[np.ndarray] = None
    logits_mask: Optional[np.ndarray] = None

    def check(self) -> None:
        t_shape = _constant(self.teacher_logits).shape
        if t_shape != self.student_logits.shape:
            raise ShapeError(
                f"kd loss: teacher logits {list(t_shape)} and student logits "
                f"{list(self.student_logits.shape)} differ"
            )


def softmax_with_temperature(z: Any, temperature: Temperature) -> Tensor:
    """
    softmax(z / T) along the last axis.

    Args:
        z: Logits of shape (B, C) or (B, L, C)
        temperature: Scalar or per-sample vector of shape (B,), > 0

    Raises:
        ConfigurationError: If any temperature is <= 0

    Examples:
        >>> softmax_with_temperature(np.array([[0.0, 0.0]]), 8.0).data
        array([[0.5, 0.5]])
    """
    z = as_tensor(z)
    t = _temperature_array(temperature, z.shape)
    return softmax(z / t, axis=-1)


def kd_ce_loss(inputs: SoftLabelInputs) -> Tensor:
    """Cross-entropy of the softened student against the softened teacher."""
    inputs.check()
    teacher = _constant(inputs.teacher_logits)
    t = _temperature_array(inputs.temperature, teacher.shape)
    target = softmax(teacher / t, axis=-1).data
    log_probs = log_softmax(inputs.student_logits / t, axis=-1)
    per_row = -(log_probs * target).sum(axis=-1)
    return _masked_row_mean(per_row, _row_mask(inputs.logits_mask, per_row.shape))


def kd_mse_loss(inputs: SoftLabelInputs) -> Tensor:
    """Mean squared error between z_t/T and z_s/T over unmasked entries."""
    inputs.check()
    teacher = _constant(inputs.teacher_logits)
    t = _temperature_array(inputs.temperature, teacher.shape)
    diff = inputs.student_logits / t - teacher.data / t
    per_row = (diff * diff).mean(axis=-1)
    return _masked_row_mean(per_row, _row_mask(inputs.logits_mask, per_row.shape))


def hard_label_loss(
    student_logits: Tensor,
    labels: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Mean cross-entropy against gold labels over labelled, unmasked rows.

    Rows whose label is -100 are ignored.

    Raises:
        ShapeError: If labels do not match the logits' row shape
        InputError: If a counted label is outside [0, num_classes)
    """
    gold = np.asarray(labels)
    rows = student_logits.shape[:-1]
    if gold.shape != rows:
        raise ShapeError(f"hard_label_loss: labels {list(gold.shape)} do not match logits rows {list(rows)}")
    counted = (gold != IGNORE_INDEX) & (_row_mask(mask, rows) > 0)
    num_classes = student_logits.shape[-1]
    bad = counted & ((gold < 0) | (gold >= num_classes))
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise InputError(
            f"hard_label_loss: label {int(gold[where])} at {list(where)} outside [0, {num_classes})"
        )
    one_hot = np.zeros(student_logits.shape)
    safe = np.where(counted, gold, 0).astype(np.int64)
    np.put_along_axis(one_hot, safe[..., None], 1.0, axis=-1)
    per_row = -(log_softmax(student_logits, axis=-1) * one_hot).sum(axis=-1)
    return _masked_row_mean(per_row, counted.astype(np.float64))


def probability_shift(values: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """
    Swap each row's maximum with the entry at its gold label.

    Works on probabilities or logits (softmax preserves the order). Ties
    break toward the lowest-index maximum; rows labelled -100 are unchanged.

    Args:
        values: (..., C) array
        labels: Integer array of shape values.shape[:-1]

    Returns:
        A new array whose rows are permutations of the input rows

    Examples:
        >>> probability_shift(np.array([[0.7, 0.2, 0.1]]), np.array([2]))
        array([[0.1, 0.2, 0.7]])
    """
    out = np.array(values, dtype=np.float64, copy=True)
    flat = out.reshape(-1, out.shape[-1])
    gold = np.asarray(labels).reshape(-1)
    if gold.shape[0] != flat.shape[0]:
        raise ShapeError(f"probability_shift: {gold.shape[0]} labels for {flat.shape[0]} rows")
    top = np.argmax(flat, axis=-1)
    for row in range(flat.shape[0]):
        g = int(gold[row])
        if g == IGNORE_INDEX:
            continue
        if not 0 <= g < flat.shape[1]:
            raise InputError(f"probability_shift: label {g} outside [0, {flat.shape[1]})")
        k = int(top[row])
        flat[row, g], flat[row, k] = flat[row, k], flat[row, g]
    return out


class Projection:
    """
    Learned linear map aligning feature widths, trained with the student.

    Attributes:
        in_dim: Input width
        out_dim: Output width
        weight: (in_dim, out_dim) tensor, N(0, 0.02) initialized
        bias: (out_dim,) tensor, zero initialized
    """

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = create((in_dim, out_dim), Init.normal(0.0, 0.02), requires_grad=True, rng=rng)
        self.bias = create((out_dim,), Init.zeros(), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"projection expects width {self.in_dim}, got {list(x.shape)}")
        return linear(x, self.weight, self.bias)

    def named_parameters(self, prefix: str) -> Tuple[Tuple[str, Tensor], ...]:
        return ((f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias))

    def num_parameters(self) -> int:
        return self.weight.size + self.bias.size


@dataclass(frozen=True)
class FeaturePair:
    """
    One teacher feature and one student feature at the same positions.

    Attributes:
        teacher: (B, L, d_t) hidden states or (B, H, L, L) attention
        student: (B, L, d_s) hidden states or (B, H', L, L) attention
        inputs_mask: Optional 0/1 array of shape (B, L)
        projection: Optional learned map applied to `proj_side`
        proj_side: "student" or "teacher"
    """

    teacher: Any
    student: Tensor
    inputs_mask: Optional[np.ndarray] = None
    projection: Optional[Projection] = None
    proj_side: str = "student"

    def aligned(self) -> Tuple[Tensor, Tensor]:
        """Return (teacher, student) after the optional projection."""
        teacher = _constant(self.teacher)
        student = self.student
        if self.projection is not None:
            if self.proj_side == "teacher":
                teacher = self.projection(teacher)
            else:
                student = self.projection(student)
        return teacher, student

    def mask(self) -> np.ndarray:
        batch, length = self.student.shape[0], self.student.shape[-2]
        return _row_mask(self.inputs_mask, (batch, length))


def _require_equal_width(teacher: Tensor, student: Tensor, loss: str) -> None:
    if teacher.shape != student.shape:
        raise ConfigurationError(
            f"{loss}: teacher feature {list(teacher.shape)} and student feature "
            f"{list(student.shape)} differ; set proj: [\"linear\", {student.shape[-1]}, {teacher.shape[-1]}]"
        )


def hidden_mse_loss(pair: FeaturePair) -> Tensor:
    """Mean squared error over unmasked positions and every hidden unit."""
    teacher, student = pair.aligned()
    _require_equal_width(teacher, student, "hidden_mse")
    m = pair.mask()
    diff = student - teacher
    per_position = (diff * diff).sum(axis=-1)
    count = m.sum() * teacher.shape[-1]
    if count == 0:
        return (per_position * 0.0).sum()
    return (per_position * m).sum() / float(count)


def cos_loss(pair: FeaturePair) -> Tensor:
    """Mean over unmasked positions of 1 - cos(teacher, student)."""
    teacher, student = pair.aligned()
    _require_equal_width(teacher, student, "cos")
    dot = (teacher * student).sum(axis=-1)
    norms = ((teacher * teacher).sum(axis=-1) * (student * student).sum(axis=-1) + EPS**2).sqrt()
    return _masked_row_mean(1.0 - dot / norms, pair.mask())


def _unit_rows(x: Tensor) -> Tensor:
    return x / ((x * x).sum(axis=-1, keepdims=True) + EPS**2).sqrt()


def pkd_loss(pair: FeaturePair) -> Tensor:
    """Mean squared error between per-position L2-normalized hidden vectors."""
    teacher, student = pair.aligned()
    _require_equal_width(teacher, student, "pkd")
    diff = _unit_rows(student) - _unit_rows(teacher)
    m = pair.mask()
    count = m.sum() * teacher.shape[-1]
    per_position = (diff * diff).sum(axis=-1)
    if count == 0:
        return (per_position * 0.0).sum()
    return (per_position * m).sum() / float(count)


def attention_loss(
    teacher_attention: Any,
    student_attention: Tensor,
    inputs_mask: Optional[np.ndarray] = None,
    mode: str = "mse",
) -> Tensor:
    """
    Compare head-averaged attention matrices.

    `mse` averages squared differences over cells whose query and key are
    both unmasked. `ce` is the row-wise KL divergence of the student from the
    teacher over unmasked keys, averaged over unmasked queries; masked cells
    are set to 1 before the logarithm so they contribute nothing.

    Args:
        teacher_attention: (B, H, L, L)
        student_attention: (B, H', L, L); head counts may differ
        inputs_mask: Optional 0/1 array of shape (B, L)
        mode: "mse" or "ce"

    Raises:
        ShapeError: If batch or position extents differ
        ConfigurationError: On an unknown mode
    """
    teacher = _constant(teacher_attention)
    if teacher.ndim != 4 or student_attention.ndim != 4:
        raise ShapeError(
            f"attention_loss: expected (B, H, L, L) inputs, got {list(teacher.shape)} "
            f"and {list(student_attention.shape)}"
        )
    if teacher.shape[0] != student_attention.shape[0] or teacher.shape[2:] != student_attention.shape[2:]:
        raise ShapeError(
            f"attention_loss: teacher {list(teacher.shape)} and student "
            f"{list(student_attention.shape)} differ in batch or positions"
        )
    t = teacher.data.mean(axis=1)
    s = student_attention.mean(axis=1)
    m = _row_mask(inputs_mask, t.shape[:2])
    cells = m[:, :, None] * m[:, None, :]

    if mode == "mse":
        diff = s - t
        total = cells.sum()
        if total == 0:
            return (diff * 0.0).sum()
        return (diff * diff * cells).sum() / float(total)
    if mode == "ce":
        safe_t = np.where(cells > 0, t, 1.0)
        safe_t = np.where(safe_t > 0, safe_t, 1.0)
        safe_s = s * cells + (1.0 - cells)
        # floor exact zeros so an unmasked key the student ignores stays finite
        safe_s = safe_s + np.where(safe_s.data < EPS, EPS, 0.0)
        weight = t * cells
        per_query = (weight * (np.log(safe_t) - safe_s.log())).sum(axis=-1)
        return _masked_row_mean(per_query, m)
    raise ConfigurationError(f"attention_loss: unknown mode {mode!r} (mse or ce)")


def attention_mse_loss(pair: FeaturePair) -> Tensor:
    if pair.projection is not None:
        raise ConfigurationError("attention_mse: projections do not apply to attention features")
    return attention_loss(pair.teacher, pair.student, pair.inputs_mask, mode="mse")


def attention_ce_loss(pair: FeaturePair) -> Tensor:
    if pair.projection is not None:
        raise ConfigurationError("attention_ce: projections do not apply to attention features")
    return attention_loss(pair.teacher, pair.student, pair.inputs_mask, mode="ce")


def _unmasked_lengths(mask: np.ndarray, loss: str) -> np.ndarray:
    lengths = mask.sum(axis=1)
    if np.any(lengths == 0):
        raise InputError(f"{loss}: sample {int(np.argmin(lengths))} has every position masked")
    return lengths


def fsp_matrix(first: Tensor, second: Tensor, mask: np.ndarray) -> Tensor:
    """
    Length-normalized flow matrix G = F_Aᵀ F_B / L' over unmasked positions.

    Args:
        first: (B, L, d_A)
        second: (B, L, d_B)
        mask: 0/1 array of shape (B, L)

    Returns:
        (B, d_A, d_B)
    """
    if first.shape[:2] != second.shape[:2]:
        raise ShapeError(f"fsp: layer features {list(first.shape)} and {list(second.shape)} differ in positions")
    lengths = _unmasked_lengths(mask, "fsp")
    masked = first * mask[:, :, None]
    return matmul(masked.transpose(0, 2, 1), second) / lengths[:, None, None]


def fsp_loss(pair_a: FeaturePair, pair_b: FeaturePair) -> Tensor:
    """
    Mean over the batch of ‖G_teacher - G_student‖²_F / (d_A·d_B).

    Each pair holds one layer of both models; both pairs share the mask of
    `pair_a`.
    """
    teacher_a, student_a = pair_a.aligned()
    teacher_b, student_b = pair_b.aligned()
    m = pair_a.mask()
    g_teacher = fsp_matrix(teacher_a, teacher_b, m)
    g_student = fsp_matrix(student_a, student_b, m)
    if g_teacher.shape != g_student.shape:
        raise ConfigurationError(
            f"fsp: teacher matrix {list(g_teacher.shape[1:])} and student matrix "
            f"{list(g_student.shape[1:])} differ; add projections to align widths"
        )
    diff = g_student - g_teacher
    _, d_a, d_b = g_teacher.shape
    return (diff * diff).sum(axis=(1, 2)).mean() / float(d_a * d_b)


def nst_gram(features: Tensor, mask: np.ndarray) -> Tensor:
    """
    Neuron-selectivity Gram matrix (1/d)·F̂ F̂ᵀ.

    Each neuron's activations over unmasked positions (a column of F) is
    L2-normalized; masked positions are zeroed first.

    Returns:
        (B, L, L)
    """
    masked = features * mask[:, :, None]
    norms = ((masked * masked).sum(axis=1, keepdims=True) + EPS**2).sqrt()
    unit = masked / norms
    return matmul(unit, unit.transpose(0, 2, 1)) / float(features.shape[-1])


def nst_loss(pair: FeaturePair) -> Tensor:
    """
    Linear-kernel MMD² between neuron activation patterns.

    Widths may differ between teacher and student. Each sample contributes
    ‖G_t - G_s‖²_F / L'² and the result is the batch mean.

    Raises:
        InputError: If a sample has every position masked
    """
    teacher, student = pair.aligned()
    if teacher.shape[:2] != student.shape[:2]:
        raise ShapeError(f"nst: teacher {list(teacher.shape)} and student {list(student.shape)} differ in positions")
    m = pair.mask()
    lengths = _unmasked_lengths(m, "nst")
    diff = nst_gram(student, m) - nst_gram(teacher, m)
    return ((diff * diff).sum(axis=(1, 2)) / (lengths**2)).mean()


def require_labels(labels: Optional[np.ndarray], what: str) -> np.ndarray:
    if labels is None:
        raise ContractError(f"{what} needs gold labels but the adaptor returned none")
    return labels
