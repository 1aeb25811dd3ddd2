"""Teacher and student architectures, parameter accounting and weight files."""

from models.spec import (
    HeadKind,
    HeadSpec,
    ModelKind,
    ModelSpec,
    NAMED_SPECS,
    ParameterCount,
    count_parameters,
    named_spec,
    parameter_shapes,
    spec_names,
)
from models.zoo import ForwardOutput, Model, build_model, forward
from models.weights import load_weights, read_spec, save_weights

__all__ = [
    "HeadKind",
    "HeadSpec",
    "ModelKind",
    "ModelSpec",
    "NAMED_SPECS",
    "ParameterCount",
    "count_parameters",
    "named_spec",
    "parameter_shapes",
    "spec_names",
    "ForwardOutput",
    "Model",
    "build_model",
    "forward",
    "load_weights",
    "read_spec",
    "save_weights",
]
