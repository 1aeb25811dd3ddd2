"""
Loss-weight and temperature schedulers.

Weight schedulers map (base_weight, progress) to a weight, where progress
is global_step / total_steps and reaches 1 at the last step. Temperature schedulers
map (base_T, teacher_logits, student_logits, beta) to one positive
temperature per sample; logits arrive as plain arrays, never as graph nodes.
"""

import numpy as np


def constant(base_weight: float, progress: float) -> float:
    return float(base_weight)


def linear_decay(base_weight: float, progress: float) -> float:
    return float(base_weight) * (1.0 - float(progress))


def linear_growth(base_weight: float, progress: float) -> float:
    return float(base_weight) * float(progress)


def constant_temperature(
    base_temperature: float,
    teacher_logits: np.ndarray,
    student_logits: np.ndarray,
    beta: float = 1.0,
) -> np.ndarray:
    return np.full(np.shape(teacher_logits)[0], float(base_temperature))


def flsw_temperature(
    base_temperature: float,
    teacher_logits: np.ndarray,
    student_logits: np.ndarray,
    beta: float = 1.0,
) -> np.ndarray:
    """
    Raise the temperature for samples where student and teacher disagree.

    T_i = base_T · (1 + beta · (1 - cos(z_t,i, z_s,i))), clamped to
    [base_T, 2·base_T]. Each sample's logits are flattened before the cosine.

    Examples:
        >>> z = np.array([[1.0, -2.0]])
        >>> flsw_temperature(8.0, z, -z)
        array([16.])
    """
    batch = np.shape(teacher_logits)[0]
    t = np.asarray(teacher_logits, dtype=np.float64).reshape(batch, -1)
    s = np.asarray(student_logits, dtype=np.float64).reshape(batch, -1)
    dot = (t * s).sum(axis=1)
    norms = np.sqrt((t * t).sum(axis=1) * (s * s).sum(axis=1))
    cosine = np.divide(dot, norms, out=np.zeros_like(dot), where=norms > 0)
    temperature = base_temperature * (1.0 + beta * (1.0 - cosine))
    return np.clip(temperature, base_temperature, 2.0 * base_temperature)
