"""Dense float64 tensors with reverse-mode automatic differentiation."""

import logging
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from engine.errors import ConfigurationError, ContractError, ShapeError


logger = logging.getLogger(__name__)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[Any]]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Disable graph recording inside the block.

    Frozen teachers run their forward passes under this context so that
    their outputs never join the student's gradient graph.

    Examples:
        >>> with no_grad():
        ...     outputs = teacher(batch)
    """
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    """Return True when new operations record a gradient graph."""
    return _grad_enabled.get()


class InitKind(str, Enum):
    """Initialization scheme enumeration."""

    ZEROS = "zeros"
    CONSTANT = "constant"
    UNIFORM = "uniform"
    NORMAL = "normal"


@dataclass(frozen=True)
class Init:
    """
    Initialization recipe for `create`.

    Attributes:
        kind: Initialization scheme
        value: Fill value for CONSTANT
        low: Lower bound for UNIFORM
        high: Upper bound for UNIFORM
        mean: Mean for NORMAL
        std: Standard deviation for NORMAL
        seed: Seed for random schemes (None draws from OS entropy)
    """

    kind: InitKind
    value: float = 0.0
    low: float = 0.0
    high: float = 1.0
    mean: float = 0.0
    std: float = 1.0
    seed: Optional[int] = None

    @classmethod
    def zeros(cls) -> "Init":
        return cls(kind=InitKind.ZEROS)

    @classmethod
    def constant(cls, value: float) -> "Init":
        return cls(kind=InitKind.CONSTANT, value=float(value))

    @classmethod
    def uniform(cls, low: float, high: float, seed: Optional[int] = None) -> "Init":
        return cls(kind=InitKind.UNIFORM, low=float(low), high=float(high), seed=seed)

    @classmethod
    def normal(cls, mean: float, std: float, seed: Optional[int] = None) -> "Init":
        return cls(kind=InitKind.NORMAL, mean=float(mean), std=float(std), seed=seed)


class Tensor:
    """
    N-dimensional float64 array with optional gradient tracking.

    Tensors produced by an operation remember their parents and a backward
    function while grad recording is enabled. Calling `backward` on a scalar
    result fills `grad` on every reachable tensor that requires grad, then
    frees the graph. A freed graph cannot be differentiated again, and a
    backward pass refuses to run while a reachable tensor still holds a grad
    from an earlier pass.

    Attributes:
        data: Underlying float64 numpy array (row-major)
        requires_grad: Whether gradients flow into this tensor
        grad: Gradient array of the same shape, present after backward

    Examples:
        >>> x = Tensor([1.0, 2.0], requires_grad=True)
        >>> (x * x).sum().backward()
        >>> x.grad
        array([2., 4.])
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_op", "_freed")

    # ndarray <op> Tensor dispatches to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward_fn: Optional[BackwardFn] = None
        self._op = "leaf"
        self._freed = False

    @classmethod
    def _from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward_fn: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Build an operation result, recording the graph when needed."""
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out._op = op
        out._freed = False
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # Introspection

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def item(self) -> float:
        """Return the value of a one-element tensor."""
        if self.data.size != 1:
            raise ShapeError(f"item: expected one element, got shape {list(self.shape)}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Return a constant view of the values, outside any graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward_fn = None
        out._op = "detach"
        out._freed = False
        return out

    def __repr__(self) -> str:
        grad_note = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}{grad_note}, op={self._op})"

    # Operator sugar

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return getitem(self, index)

    # Method forms of the core operations

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes or None)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    # Autodiff

    def backward(self) -> None:
        """
        Back-propagate from this scalar into every reachable tensor.

        Raises:
            ContractError: If the tensor is not a scalar, does not require grad,
                its graph was already consumed, or a reachable tensor still holds
                a gradient from an earlier pass
        """
        if self._freed:
            raise ContractError(
                "backward called on a consumed graph; run the forward pass again"
            )
        if self.ndim > 1 or self.data.size != 1:
            raise ContractError(
                f"backward requires a scalar loss of shape [] or [1], got {list(self.shape)}"
            )
        if not self.requires_grad:
            raise ContractError("backward called on a tensor that does not require grad")

        order = self._topological_order()
        for node in order:
            if node.grad is not None:
                raise ContractError(
                    f"tensor {node!r} still holds a gradient; clear grads before backward"
                )

        pending = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = np.array(g, dtype=np.float64)
            if node._backward_fn is None:
                continue
            parent_grads = node._backward_fn(g)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

        for node in order:
            if node._parents:
                node._parents = ()
                node._backward_fn = None
                node._freed = True
        self._freed = True

    def graph_tensors(self) -> List["Tensor"]:
        """Return every grad-requiring tensor reachable from this one."""
        return self._topological_order()

    def _topological_order(self) -> List["Tensor"]:
        """Parents-first ordering of the recorded graph (iterative DFS)."""
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited or not node.requires_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order


def as_tensor(value: ArrayLike) -> Tensor:
    """Wrap non-tensor values as constants; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(value, dtype=np.float64)
    out.requires_grad = False
    out.grad = None
    out._parents = ()
    out._backward_fn = None
    out._op = "constant"
    out._freed = False
    return out


def create(
    shape: Sequence[int],
    init: Init,
    requires_grad: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """
    Create a tensor of the given shape from an initialization recipe.

    Args:
        shape: Non-empty list of extents, each >= 1
        init: Initialization recipe
        requires_grad: Whether the tensor is a trainable leaf
        rng: Generator overriding `init.seed` (used by model builders)

    Returns:
        The new tensor; deterministic for a given seed or generator state

    Raises:
        ConfigurationError: If the shape or init parameters are invalid

    Examples:
        >>> create([3], Init.constant(1.5)).data
        array([1.5, 1.5, 1.5])
    """
    dims = tuple(int(d) for d in shape)
    if len(dims) == 0 or any(d < 1 for d in dims):
        raise ConfigurationError(f"create: shape must be non-empty with extents >= 1, got {list(shape)}")

    if init.kind == InitKind.ZEROS:
        data = np.zeros(dims)
    elif init.kind == InitKind.CONSTANT:
        data = np.full(dims, init.value)
    elif init.kind == InitKind.UNIFORM:
        if not init.low < init.high:
            raise ConfigurationError(
                f"create: uniform init needs low < high, got ({init.low}, {init.high})"
            )
        generator = rng if rng is not None else np.random.default_rng(init.seed)
        data = generator.uniform(init.low, init.high, size=dims)
    elif init.kind == InitKind.NORMAL:
        if init.std < 0:
            raise ConfigurationError(f"create: normal init needs std >= 0, got {init.std}")
        generator = rng if rng is not None else np.random.default_rng(init.seed)
        data = generator.normal(init.mean, init.std, size=dims)
    else:
        raise ConfigurationError(f"create: unsupported init kind {init.kind!r}")

    return Tensor(data, requires_grad=requires_grad)


# Shape helpers


def _broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...], op: str) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a, b))
    except ValueError:
        raise ShapeError(f"{op}: shapes {list(a)} and {list(b)} do not broadcast")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# Elementwise arithmetic


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "div")
    out = a.data / b.data

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return Tensor._from_op(out, (a, b), backward, "div")


def power(x: ArrayLike, exponent: float) -> Tensor:
    x = as_tensor(x)
    p = float(exponent)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * p * np.power(x.data, p - 1.0),)

    return Tensor._from_op(np.power(x.data, p), (x,), backward, "pow")


# Linear algebra and layout


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """
    Batched matrix product over the last two axes.

    Raises:
        ShapeError: If either operand has fewer than 2 axes, the inner extents
            differ, or the batch axes do not broadcast
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands need >= 2 axes, got {list(a.shape)} and {list(b.shape)}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner extents differ for shapes {list(a.shape)} and {list(b.shape)}"
        )
    _broadcast_shape(a.shape[:-2], b.shape[:-2], "matmul")

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad_a = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        grad_b = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return grad_a, grad_b

    return Tensor._from_op(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def transpose(x: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; with no axes, reverse them."""
    x = as_tensor(x)
    perm = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(perm) != list(range(x.ndim)):
        raise ShapeError(f"transpose: invalid axes {list(perm)} for shape {list(x.shape)}")
    inverse = tuple(np.argsort(perm))

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (np.transpose(g, inverse),)

    return Tensor._from_op(np.transpose(x.data, perm), (x,), backward, "transpose")


def swapaxes(x: ArrayLike, axis1: int, axis2: int) -> Tensor:
    x = as_tensor(x)
    perm = list(range(x.ndim))
    perm[axis1], perm[axis2] = perm[axis2], perm[axis1]
    return transpose(x, perm)


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {list(x.shape)} into {list(shape)}")

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g.reshape(x.shape),)

    return Tensor._from_op(out, (x,), backward, "reshape")


def concat(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    """
    Concatenate along an existing axis.

    Raises:
        ShapeError: If the shapes differ outside the concatenation axis
    """
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat: no tensors given")
    ref = parts[0].shape
    ax = axis % len(ref)
    for part in parts[1:]:
        if len(part.shape) != len(ref) or any(
            i != ax and part.shape[i] != ref[i] for i in range(len(ref))
        ):
            raise ShapeError(f"concat: shapes {list(ref)} and {list(part.shape)} differ off axis {axis}")
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._from_op(np.concatenate([p.data for p in parts], axis=ax), parts, backward, "concat")


def stack(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    """Stack equally shaped tensors along a new axis."""
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("stack: no tensors given")
    for part in parts[1:]:
        if part.shape != parts[0].shape:
            raise ShapeError(f"stack: shapes {list(parts[0].shape)} and {list(part.shape)} differ")
    out = np.stack([p.data for p in parts], axis=axis)
    ax = axis % out.ndim

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return tuple(np.take(g, i, axis=ax) for i in range(len(parts)))

    return Tensor._from_op(out, parts, backward, "stack")


def getitem(x: ArrayLike, index: Any) -> Tensor:
    """Numpy-style indexing (slices, integers, integer arrays)."""
    x = as_tensor(x)
    try:
        out = x.data[index]
    except IndexError as e:
        raise ShapeError(f"slice: index {index!r} invalid for shape {list(x.shape)}: {e}") from e

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor._from_op(np.array(out, dtype=np.float64), (x,), backward, "slice")


# Reductions


def _normalize_axes(axis: Optional[Union[int, Tuple[int, ...]]], ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def tensor_sum(
    x: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False
) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(x.data.sum(axis=axes, keepdims=keepdims), (x,), backward, "sum")


def tensor_mean(
    x: ArrayLike, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False
) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return div(tensor_sum(x, axis=axes, keepdims=keepdims), float(count))


# Elementwise functions


def exp(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * out,)

    return Tensor._from_op(out, (x,), backward, "exp")


def log(x: ArrayLike) -> Tensor:
    x = as_tensor(x)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g / x.data,)

    return Tensor._from_op(np.log(x.data), (x,), backward, "log")


def tanh(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * (1.0 - out * out),)

    return Tensor._from_op(out, (x,), backward, "tanh")


def sigmoid(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    # tanh form stays finite for large |x|
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * out * (1.0 - out),)

    return Tensor._from_op(out, (x,), backward, "sigmoid")


def sqrt(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    out = np.sqrt(x.data)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * 0.5 / out,)

    return Tensor._from_op(out, (x,), backward, "sqrt")


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)

    def backward(g: np.ndarray) -> Sequence[Optional[np.ndarray]]:
        return (g * (x.data > 0),)

    return Tensor._from_op(np.maximum(x.data, 0.0), (x,), backward, "relu")
