"""Checkpoint container: text manifest followed by raw little-endian float64 data.

Layout::

    AICC-CHECKPOINT
    schema_version 1
    meta <key> <json value>
    ...
    tensor <name> <dim0>x<dim1>...
    ...
    end_manifest
    <float64 LE bytes of every tensor, manifest order, row-major>

Scalars use the shape ``scalar``.
"""
import json

import numpy as np

from .errors import CheckpointError

MAGIC = "AICC-CHECKPOINT"
SCHEMA_VERSION = 1
_END = "end_manifest"


def _shape_str(shape):
    return "x".join(str(d) for d in shape) if shape else "scalar"


def _parse_shape(text):
    if text == "scalar":
        return ()
    return tuple(int(d) for d in text.split("x"))


def save_tensors(path, tensors, meta=None):
    """Write ``tensors`` (sequence of ``(name, array)``) and ``meta`` (JSON-able dict)."""
    lines = [MAGIC, f"schema_version {SCHEMA_VERSION}"]
    for key, value in (meta or {}).items():
        if any(c.isspace() for c in key):
            raise CheckpointError(f"meta key {key!r} contains whitespace")
        lines.append(f"meta {key} {json.dumps(value, sort_keys=True)}")
    blobs = []
    for name, arr in tensors:
        if any(c.isspace() for c in name):
            raise CheckpointError(f"tensor name {name!r} contains whitespace")
        arr = np.asarray(arr, dtype=np.float64)
        lines.append(f"tensor {name} {_shape_str(arr.shape)}")
        blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    lines.append(_END)
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for blob in blobs:
            fh.write(blob)


def load_tensors(path):
    """Read a checkpoint; returns ``(meta, [(name, array), ...])``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = ("\n" + _END + "\n").encode("ascii")
    cut = raw.find(marker)
    if cut < 0:
        raise CheckpointError(f"{path}: manifest terminator not found")
    header = raw[:cut].decode("ascii").split("\n")
    body = raw[cut + len(marker):]
    if not header or header[0] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if len(header) < 2 or header[1] != f"schema_version {SCHEMA_VERSION}":
        raise CheckpointError(f"{path}: unsupported schema line {header[1:2]}")
    meta, specs = {}, []
    for line in header[2:]:
        kind, _, rest = line.partition(" ")
        if kind == "meta":
            key, _, value = rest.partition(" ")
            meta[key] = json.loads(value)
        elif kind == "tensor":
            name, _, shape = rest.partition(" ")
            specs.append((name, _parse_shape(shape)))
        else:
            raise CheckpointError(f"{path}: bad manifest line {line!r}")
    tensors, pos = [], 0
    for name, shape in specs:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if pos + nbytes > len(body):
            raise CheckpointError(f"{path}: data truncated at tensor {name}")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos).astype(np.float64)
        tensors.append((name, arr.reshape(shape)))
        pos += nbytes
    if pos != len(body):
        raise CheckpointError(f"{path}: {len(body) - pos} trailing bytes after tensor data")
    return meta, tensors
