"""Central finite-difference checks for analytic gradients."""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from engine.errors import ConfigurationError
from engine.tensor import Tensor, no_grad


logger = logging.getLogger(__name__)


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    indices: Optional[Sequence[int]] = None,
    min_magnitude: float = 0.0,
) -> float:
    """
    Compare the analytic gradient of `f` at `x` against central differences.

    The error per coordinate is
    |analytic - central| / (|analytic| + |central| + 1e-12) and the maximum
    over the checked coordinates is returned.

    Args:
        f: Deterministic function from `x` to a scalar tensor; it must rebuild
            its graph on every call
        x: Point of evaluation; must require grad. Its values are perturbed in
            place and restored
        h: Step size, > 0
        indices: Flat coordinate indices to check (default: all)
        min_magnitude: Skip coordinates where both the analytic and the central
            value are below this magnitude

    Returns:
        Maximum relative error over the checked coordinates

    Examples:
        >>> x = Tensor(np.array([0.0, 1.0]), requires_grad=True)
        >>> finite_diff_check(lambda t: t.exp().sum(), x) < 1e-6
        True
    """
    if h <= 0:
        raise ConfigurationError(f"finite_diff_check: h must be > 0, got {h}")

    loss = f(x)
    for node in loss.graph_tensors():
        node.grad = None
    loss.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    x.grad = None

    if not x.data.flags.c_contiguous:
        x.data = np.ascontiguousarray(x.data)
    flat = x.data.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    worst = 0.0
    with no_grad():
        for i in coords:
            original = flat[i]
            flat[i] = original + h
            upper = f(x).item()
            flat[i] = original - h
            lower = f(x).item()
            flat[i] = original
            central = (upper - lower) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            if abs(a) < min_magnitude and abs(central) < min_magnitude:
                continue
            worst = max(worst, abs(a - central) / (abs(a) + abs(central) + 1e-12))
    logger.debug(f"finite_diff_check: max relative error {worst:.3e} over shape {list(x.shape)}")
    return worst
