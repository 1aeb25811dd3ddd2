"""
Adam with decoupled weight decay, gradient clipping and a warm-up schedule.

Parameters are grouped; every group carries its own `OptimizerState`, so
projection layers added by a distiller can use their own learning rate and
update independently of the student's parameters.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np

from engine import ConfigurationError, ContractError, Tensor


logger = logging.getLogger(__name__)

DEFAULT_LEARNING_RATE = 1e-4

NamedParameters = Union[Mapping[str, Tensor], Iterable[Tuple[str, Tensor]]]


@dataclass
class OptimizerState:
    """
    Adam hyper-parameters and moment accumulators of one parameter group.

    Attributes:
        learning_rate: Base step size
        betas: Decay rates of the first and second moments
        eps: Denominator offset
        weight_decay: Decoupled weight-decay coefficient
        step_count: Number of completed updates
        first_moment: Per-parameter running mean of gradients
        second_moment: Per-parameter running mean of squared gradients
    """

    learning_rate: float = DEFAULT_LEARNING_RATE
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigurationError(f"betas must lie in [0, 1), got {self.betas}")
        if self.eps <= 0:
            raise ConfigurationError(f"eps must be > 0, got {self.eps}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")


def adam_step(
    state: OptimizerState,
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    lr_scale: float = 1.0,
) -> None:
    """
    One bias-corrected Adam update, in place.

    Args:
        state: Group state; moments are created on the first step
        params: Parameters to update
        grads: Gradient per parameter name
        lr_scale: Multiplier on the learning rate (from a schedule)

    Raises:
        ContractError: If any parameter has no gradient or a gradient's shape
            differs from its parameter's

    Examples:
        >>> x = Tensor([1.0], requires_grad=True)
        >>> state = OptimizerState(learning_rate=0.1)
        >>> adam_step(state, {"x": x}, {"x": np.array([2.0])})
        >>> round(float(x.data[0]), 6)
        0.9
    """
    missing = [name for name in params if grads.get(name) is None]
    if missing:
        raise ContractError(f"adam_step: no gradient for parameter {missing[0]!r}")
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ContractError(
                f"adam_step: gradient of {name!r} has shape {list(grads[name].shape)}, "
                f"parameter has {list(p.shape)}"
            )

    state.step_count += 1
    beta1, beta2 = state.betas
    t = state.step_count
    lr = state.learning_rate * lr_scale
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        m = (1.0 - beta1) * g if m is None else beta1 * m + (1.0 - beta1) * g
        v = (1.0 - beta2) * g * g if v is None else beta2 * v + (1.0 - beta2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        update = m_hat / (np.sqrt(v_hat) + state.eps)
        if state.weight_decay:
            update = update + state.weight_decay * p.data
        p.data = p.data - lr * update


@dataclass
class ParamGroup:
    params: "OrderedDict[str, Tensor]"
    state: OptimizerState


class Adam:
    """
    Adam optimizer over named parameter groups.

    Examples:
        >>> model = build_model(named_spec("t1_nano"), seed=0)
        >>> optimizer = Adam(model.trainable_parameters(), learning_rate=1e-4)
    """

    def __init__(
        self,
        params: NamedParameters,
        learning_rate: float = DEFAULT_LEARNING_RATE,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.defaults = {"learning_rate": learning_rate, "betas": betas, "eps": eps, "weight_decay": weight_decay}
        self.groups: List[ParamGroup] = []
        self.add_param_group(params)

    def add_param_group(
        self,
        params: NamedParameters,
        learning_rate: Optional[float] = None,
        weight_decay: Optional[float] = None,
    ) -> ParamGroup:
        """
        Add parameters with their own state.

        Raises:
            ContractError: If a name or tensor is already managed, or a
                parameter does not require grad
        """
        items = OrderedDict(params.items() if isinstance(params, Mapping) else params)
        known_names = {n for g in self.groups for n in g.params}
        known_ids = {id(p) for g in self.groups for p in g.params.values()}
        for name, p in items.items():
            if name in known_names or id(p) in known_ids:
                raise ContractError(f"optimizer already manages parameter {name!r}")
            if not p.requires_grad:
                raise ContractError(f"parameter {name!r} does not require grad")
        state = OptimizerState(
            learning_rate=self.defaults["learning_rate"] if learning_rate is None else learning_rate,
            betas=self.defaults["betas"],
            eps=self.defaults["eps"],
            weight_decay=self.defaults["weight_decay"] if weight_decay is None else weight_decay,
        )
        group = ParamGroup(items, state)
        self.groups.append(group)
        logger.debug(f"Optimizer group {len(self.groups) - 1}: {len(items)} tensors, lr={state.learning_rate}")
        return group

    def parameters(self) -> List[Tuple[str, Tensor]]:
        return [(n, p) for g in self.groups for n, p in g.params.items()]

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def zero_grad(self) -> None:
        for _, p in self.parameters():
            p.grad = None

    def step(self, lr_scale: float = 1.0) -> None:
        """Update every group from the gradients currently on its tensors."""
        for group in self.groups:
            adam_step(group.state, group.params, {n: p.grad for n, p in group.params.items()}, lr_scale)


def clip_grad_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """
    Scale gradients in place so their global L2 norm is at most max_norm.

    Returns:
        The norm before clipping
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class LinearWarmupSchedule:
    """
    Learning-rate multiplier: linear warm-up, then linear decay to 0.

    Step s (1-based) maps to (s-1)/w during the first w steps and to
    (N-s+1)/(N-w) afterwards, where N is the total number of steps.

    Examples:
        >>> schedule = LinearWarmupSchedule(total_steps=10, warmup_proportion=0.2)
        >>> [schedule(s) for s in (1, 2, 3, 10)]
        [0.0, 0.5, 1.0, 0.125]
    """

    def __init__(self, total_steps: int, warmup_proportion: float = 0.0):
        if total_steps < 1:
            raise ConfigurationError(f"total_steps must be >= 1, got {total_steps}")
        if not 0.0 <= warmup_proportion < 1.0:
            raise ConfigurationError(f"warmup_proportion must lie in [0, 1), got {warmup_proportion}")
        self.total_steps = total_steps
        self.warmup_steps = int(warmup_proportion * total_steps)

    def __call__(self, step: int) -> float:
        s = step - 1
        if s < self.warmup_steps:
            return s / self.warmup_steps
        return max(0.0, (self.total_steps - s) / (self.total_steps - self.warmup_steps))
