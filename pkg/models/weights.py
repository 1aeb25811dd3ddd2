"""
Binary weight files.

Layout (all integers little-endian):

    magic        4 bytes   b"KDLW"
    version      uint8     1
    spec_length  uint32    byte length of the spec JSON
    spec         UTF-8     ModelSpec.canonical_json()
    count        uint32    number of parameters
    per parameter, in canonical order:
        name_length  uint16
        name         UTF-8
        ndim         uint8
        dims         ndim x uint32
        values       prod(dims) x float64 ('<f8'), row-major

Values are written bit-exactly, so save followed by load reproduces every
parameter.
"""

import json
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from engine import ConfigurationError, FormatError, Tensor
from models.spec import ModelSpec, parameter_shapes
from models.zoo import Model


logger = logging.getLogger(__name__)

MAGIC = b"KDLW"
VERSION = 1

PathLike = Union[str, Path]


def save_weights(model: Model, path: PathLike) -> Path:
    """
    Write a model's spec and parameters.

    Args:
        model: Model to save
        path: Destination file; parent directories are created

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec_bytes = model.spec.canonical_json().encode("utf-8")
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(spec_bytes)))
        fh.write(spec_bytes)
        fh.write(struct.pack("<I", len(model.parameters)))
        for name, tensor in model.parameters.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    logger.debug(f"Saved {model!r} to {path}")
    return path


def _read(fh: BinaryIO, size: int, what: str) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise FormatError(f"truncated weight file while reading {what}")
    return data


def _read_header(fh: BinaryIO) -> ModelSpec:
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"not a weight file: magic {magic!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<B", _read(fh, 1, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported weight file version {version}, expected {VERSION}")
    (length,) = struct.unpack("<I", _read(fh, 4, "spec length"))
    try:
        stored = json.loads(_read(fh, length, "spec").decode("utf-8"))
        return ModelSpec.from_dict(stored)
    except (UnicodeDecodeError, ValueError, ConfigurationError) as e:
        raise FormatError(f"weight file header does not hold a valid spec: {e}") from e


def read_spec(path: PathLike) -> ModelSpec:
    """Return the spec stored in a weight file's header."""
    with Path(path).open("rb") as fh:
        return _read_header(fh)


def load_weights(spec: ModelSpec, path: PathLike) -> Model:
    """
    Load a model saved by `save_weights`.

    Args:
        spec: Expected architecture; must equal the stored header
        path: Weight file

    Returns:
        Model with the stored parameters; embedding tables are frozen when the
        spec says so, every other parameter requires grad

    Raises:
        FormatError: On wrong magic or version, truncation, or a header whose
            spec differs from `spec` (the message names the field)
    """
    with Path(path).open("rb") as fh:
        stored = _read_header(fh)
        expected_fields = spec.to_dict()
        stored_fields = stored.to_dict()
        for key in sorted(expected_fields):
            if expected_fields[key] != stored_fields.get(key):
                raise FormatError(
                    f"spec mismatch in field {key!r}: file has {stored_fields.get(key)!r}, "
                    f"expected {expected_fields[key]!r}"
                )

        shapes = parameter_shapes(spec)
        (count,) = struct.unpack("<I", _read(fh, 4, "parameter count"))
        if count != len(shapes):
            raise FormatError(f"weight file holds {count} parameters, spec implies {len(shapes)}")

        parameters: "OrderedDict[str, Tensor]" = OrderedDict()
        for expected_name, expected_shape in shapes.items():
            (name_length,) = struct.unpack("<H", _read(fh, 2, "name length"))
            name = _read(fh, name_length, "name").decode("utf-8", errors="replace")
            if name != expected_name:
                raise FormatError(f"parameter {name!r} found where {expected_name!r} was expected")
            (ndim,) = struct.unpack("<B", _read(fh, 1, f"{name} rank"))
            dims = struct.unpack(f"<{ndim}I", _read(fh, 4 * ndim, f"{name} dims"))
            if tuple(dims) != expected_shape:
                raise FormatError(f"parameter {name}: stored shape {list(dims)}, expected {list(expected_shape)}")
            size = int(np.prod(dims))
            values = np.frombuffer(_read(fh, 8 * size, f"{name} values"), dtype="<f8")
            trainable = not (spec.freeze_embeddings and name.startswith("embeddings."))
            parameters[name] = Tensor(values.reshape(dims), requires_grad=trainable)
        if fh.read(1):
            raise FormatError("trailing bytes after the last parameter")
    return Model(spec, parameters)
