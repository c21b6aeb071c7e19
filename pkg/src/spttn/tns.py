"""FROSTT ``.tns`` text files and seeded random sparse tensors.

A ``.tns`` file holds one nonzero per line: ``d`` 1-based integer
coordinates followed by the value, whitespace separated. Lines starting
with ``#`` and blank lines are ignored.
"""

from __future__ import annotations

from math import ceil, prod
from pathlib import Path

import numpy as np

from .errors import TnsParseError
from .tensor import DenseTensor, SparseTensorCOO


def parse_tns(text, indices=None, shape=None) -> SparseTensorCOO:
    coords, values = [], []
    order = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise TnsParseError(f"expected coordinates and a value, got {line!r}", lineno)
        if order is None:
            order = len(parts) - 1
        elif len(parts) - 1 != order:
            raise TnsParseError(f"expected {order} coordinates, got {len(parts) - 1}", lineno)
        try:
            c = [int(x) for x in parts[:-1]]
        except ValueError:
            raise TnsParseError(f"non-integer coordinate in {line!r}", lineno) from None
        try:
            v = float(parts[-1])
        except ValueError:
            raise TnsParseError(f"bad value {parts[-1]!r}", lineno) from None
        if min(c) < 1:
            raise TnsParseError(f"coordinates are 1-based, got {min(c)}", lineno)
        coords.append(c)
        values.append(v)

    if order is None:
        if indices is None and shape is None:
            raise TnsParseError("empty tensor file needs explicit indices or shape")
        order = len(shape) if shape is not None else len(indices)
    if indices is None:
        indices = tuple(f"m{k}" for k in range(order))
    if len(indices) != order:
        raise TnsParseError(f"file has {order} modes but {len(indices)} index names were given")
    arr = np.array(coords, dtype=np.int64).reshape(-1, order) - 1
    if shape is None:
        if len(arr) == 0:
            raise TnsParseError("cannot infer the shape of an empty tensor")
        shape = tuple(int(x) + 1 for x in arr.max(axis=0))
    shape = tuple(int(s) for s in shape)
    if len(shape) != order:
        raise TnsParseError(f"file has {order} modes but shape {shape} was given")
    if len(arr) and (arr >= np.array(shape)).any():
        bad = int(np.flatnonzero((arr >= np.array(shape)).any(axis=1))[0])
        raise TnsParseError(f"coordinate {tuple(arr[bad] + 1)} outside shape {shape}")
    return SparseTensorCOO(tuple(indices), shape, arr, np.array(values, dtype=np.float64)).normalized()


def read_tns(path, indices=None, shape=None) -> SparseTensorCOO:
    """Read a ``.tns`` file into a normalized 0-based COO tensor.

    Without ``shape`` each dimension is the largest coordinate seen.
    """
    return parse_tns(Path(path).read_text(), indices, shape)


def format_tns(tensor, include_zeros=True) -> str:
    """``.tns`` text for a COO tensor or, entry by entry, a dense one.

    Values use the shortest text that reads back to the same float.
    """
    if isinstance(tensor, DenseTensor):
        arr = tensor.array
        coords = np.argwhere(np.ones(arr.shape, dtype=bool)) if include_zeros else np.argwhere(arr != 0)
        values = arr[tuple(coords.T)] if arr.ndim else arr.reshape(1)
        if arr.ndim == 0:
            coords = np.zeros((1, 0), dtype=np.int64)
    else:
        coords, values = tensor.coords, tensor.values
    lines = [f"# shape {' '.join(str(s) for s in tensor.shape)}"]
    for c, v in zip(coords, values):
        lines.append(" ".join([*(str(int(x) + 1) for x in c), repr(float(v))]))
    return "\n".join(lines) + "\n"


def write_tns(path, tensor):
    Path(path).write_text(format_tns(tensor))


def shape_comment(text):
    """Shape recorded in a ``# shape ...`` comment written by :func:`format_tns`."""
    for line in text.splitlines():
        if line.startswith("# shape"):
            return tuple(int(x) for x in line.split()[2:])
    return None


def gen_random(dims, density, seed, indices=None) -> SparseTensorCOO:
    """Random sparse tensor with ``ceil(density * prod(dims))`` distinct
    nonzeros, values uniform in ``[-1, 1]``."""
    dims = tuple(int(d) for d in dims)
    if not 0 < density <= 1:
        raise ValueError(f"density must be in (0, 1], got {density}")
    if any(d < 1 for d in dims):
        raise ValueError(f"dimensions must be positive, got {dims}")
    total = prod(dims)
    nnz = min(total, ceil(density * total))
    rng = np.random.default_rng(seed)
    flat = rng.choice(total, size=nnz, replace=False)
    coords = np.stack(np.unravel_index(np.sort(flat), dims), axis=1)
    values = rng.uniform(-1.0, 1.0, size=nnz)
    indices = tuple(indices) if indices is not None else tuple(f"m{k}" for k in range(len(dims)))
    return SparseTensorCOO(indices, dims, coords, values).normalized()


def gen_dense(shape, seed):
    """Dense factor with entries uniform in ``[-1, 1]``."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=tuple(shape))
