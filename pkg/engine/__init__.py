"""Float64 tensor engine with reverse-mode automatic differentiation."""

from engine.errors import (
    KDLabError,
    ConfigurationError,
    ConfigParseError,
    ValidationError,
    RegistrationError,
    ShapeError,
    InputError,
    ContractError,
    FormatError,
)
from engine.tensor import (
    Tensor,
    Init,
    InitKind,
    create,
    as_tensor,
    no_grad,
    is_grad_enabled,
    add,
    sub,
    mul,
    div,
    power,
    matmul,
    transpose,
    swapaxes,
    reshape,
    concat,
    stack,
    getitem,
    tensor_sum,
    tensor_mean,
    exp,
    log,
    tanh,
    sigmoid,
    sqrt,
    relu,
)
from engine.functional import gelu, gelu_scalar, softmax, log_softmax, layer_norm, linear
from engine.gradcheck import finite_diff_check

__all__ = [
    "KDLabError",
    "ConfigurationError",
    "ConfigParseError",
    "ValidationError",
    "RegistrationError",
    "ShapeError",
    "InputError",
    "ContractError",
    "FormatError",
    "Tensor",
    "Init",
    "InitKind",
    "create",
    "as_tensor",
    "no_grad",
    "is_grad_enabled",
    "add",
    "sub",
    "mul",
    "div",
    "power",
    "matmul",
    "transpose",
    "swapaxes",
    "reshape",
    "concat",
    "stack",
    "getitem",
    "tensor_sum",
    "tensor_mean",
    "exp",
    "log",
    "tanh",
    "sigmoid",
    "sqrt",
    "relu",
    "gelu",
    "gelu_scalar",
    "softmax",
    "log_softmax",
    "layer_norm",
    "linear",
    "finite_diff_check",
]
