"""Dense, COO and CSF tensor storage.

All tensors are immutable after construction. Coordinates are 0-based and
values are float64 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import NamedTuple, Sequence

import numpy as np


class IndexId(NamedTuple):
    name: str
    size: int


def _check_indices(indices, shape):
    indices = tuple(indices)
    shape = tuple(int(s) for s in shape)
    if len(indices) != len(shape):
        raise ValueError(f"{len(indices)} indices but shape has {len(shape)} modes")
    if len(set(indices)) != len(indices):
        raise ValueError(f"repeated index in {indices}")
    if any(s < 1 for s in shape):
        raise ValueError(f"dimension sizes must be >= 1, got {shape}")
    return indices, shape


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Row-major dense tensor labelled by index names."""

    indices: tuple
    array: np.ndarray

    def __post_init__(self):
        arr = np.array(self.array, dtype=np.float64, order="C")
        indices, _ = _check_indices(self.indices, arr.shape)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "array", _readonly(arr))

    @property
    def shape(self):
        return self.array.shape

    @property
    def values(self):
        """Flat row-major view of the entries (last index fastest)."""
        return self.array.reshape(-1)

    def index_ids(self):
        return tuple(IndexId(n, s) for n, s in zip(self.indices, self.shape))

    def offset(self, coord):
        off = 0
        for c, s in zip(coord, self.shape):
            off = off * s + c
        return off


@dataclass(frozen=True, eq=False)
class SparseTensorCOO:
    """Coordinate-list sparse tensor.

    ``coords`` is an ``(nnz, order)`` integer array. Instances built through
    :meth:`from_entries` or :meth:`normalized` are sorted lexicographically
    with duplicate coordinates summed; explicit zeros are kept.
    """

    indices: tuple
    shape: tuple
    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        indices, shape = _check_indices(self.indices, self.shape)
        coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, len(shape))
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if coords.shape[0] != values.shape[0]:
            raise ValueError("coords and values disagree on nnz")
        if coords.size and ((coords < 0).any() or (coords >= np.array(shape)).any()):
            raise ValueError("coordinate out of bounds")
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "coords", _readonly(coords.copy()))
        object.__setattr__(self, "values", _readonly(values.copy()))

    @classmethod
    def from_entries(cls, indices, shape, entries):
        """Build a normalized tensor from ``{coord_tuple: value}`` or pairs."""
        if isinstance(entries, dict):
            entries = entries.items()
        entries = list(entries)
        coords = np.array([c for c, _ in entries], dtype=np.int64).reshape(-1, len(shape))
        values = np.array([v for _, v in entries], dtype=np.float64)
        return cls(indices, shape, coords, values).normalized()

    @property
    def nnz(self):
        return self.values.shape[0]

    @property
    def order(self):
        return len(self.shape)

    def is_normalized(self):
        if self.nnz < 2:
            return True
        c = self.coords
        diff = c[1:] - c[:-1]
        # first nonzero column of each row difference must be positive
        nz = diff != 0
        first = np.argmax(nz, axis=1)
        rows = np.arange(diff.shape[0])
        return bool(nz.any(axis=1).all() and (diff[rows, first] > 0).all())

    def normalized(self):
        if self.nnz == 0:
            return self
        order = np.lexsort(self.coords.T[::-1])
        coords = self.coords[order]
        values = self.values[order]
        new = np.ones(len(coords), dtype=bool)
        new[1:] = (coords[1:] != coords[:-1]).any(axis=1)
        group = np.cumsum(new) - 1
        summed = np.zeros(int(group[-1]) + 1)
        np.add.at(summed, group, values)
        return SparseTensorCOO(self.indices, self.shape, coords[new], summed)

    def transpose(self, mode_order):
        """Reorder modes to ``mode_order`` (index names) and renormalize."""
        perm = _permutation(self.indices, mode_order)
        return SparseTensorCOO(
            tuple(self.indices[p] for p in perm),
            tuple(self.shape[p] for p in perm),
            self.coords[:, perm],
            self.values,
        ).normalized()

    def prune_zeros(self):
        keep = self.values != 0
        return SparseTensorCOO(self.indices, self.shape, self.coords[keep], self.values[keep])

    def todense(self):
        out = np.zeros(self.shape)
        if self.nnz:
            np.add.at(out, tuple(self.coords.T), self.values)
        return out

    def entries(self):
        return [(tuple(int(x) for x in c), float(v)) for c, v in zip(self.coords, self.values)]

    def __eq__(self, other):
        if not isinstance(other, SparseTensorCOO):
            return NotImplemented
        return (
            self.indices == other.indices
            and self.shape == other.shape
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _permutation(indices, mode_order):
    mode_order = tuple(mode_order)
    if sorted(mode_order) != sorted(indices) or len(set(mode_order)) != len(mode_order):
        raise ValueError(f"mode order {mode_order} is not a permutation of {tuple(indices)}")
    return [indices.index(m) for m in mode_order]


@dataclass(frozen=True, eq=False)
class SparseTensorCSF:
    """Compressed sparse fiber tree.

    ``idx[l]`` holds the index value of every node at level ``l`` (root is
    level 0). ``ptr[l]`` has one entry more than level ``l`` has nodes; the
    children of node ``n`` are ``ptr[l][n]:ptr[l][n + 1]`` in level ``l + 1``,
    and at the leaf level the range addresses ``values``.
    """

    indices: tuple
    shape: tuple
    idx: tuple
    ptr: tuple
    values: np.ndarray

    @property
    def order(self):
        return len(self.indices)

    @property
    def nnz(self):
        return self.values.shape[0]

    def level_of(self, name):
        return self.indices.index(name)

    def nnz_at_level(self, k):
        return nnz_at_level(self, k)


def build_csf(coo: SparseTensorCOO, mode_order: Sequence[str] | None = None) -> SparseTensorCSF:
    """Build the CSF tree of ``coo`` with root-to-leaf mode order ``mode_order``."""
    if mode_order is None:
        mode_order = coo.indices
    perm = _permutation(coo.indices, mode_order)
    d = len(perm)
    shape = tuple(coo.shape[p] for p in perm)
    coords = coo.coords[:, perm]
    values = coo.values
    if len(coords):
        order = np.lexsort(coords.T[::-1])
        coords, values = coords[order], values[order]
        dup = (coords[1:] == coords[:-1]).all(axis=1)
        if dup.any():
            raise ValueError("COO tensor has duplicate coordinates; normalize it first")

    idx, ptr = [], []
    nnz = len(coords)
    boundary = np.zeros(nnz, dtype=bool)
    if nnz:
        boundary[0] = True
    node_ids = []
    for level in range(d):
        col = coords[:, level]
        b = boundary.copy()
        b[1:] |= col[1:] != col[:-1]
        idx.append(_readonly(col[b].copy()))
        node_ids.append(np.cumsum(b) - 1)
        boundary = b
    for level in range(d):
        n_nodes = len(idx[level])
        if level == d - 1:
            p = np.arange(n_nodes + 1, dtype=np.int64)
        else:
            child_start = boundary_rows(node_ids[level + 1])
            parents = node_ids[level][child_start]
            p = np.searchsorted(parents, np.arange(n_nodes + 1)).astype(np.int64)
        ptr.append(_readonly(p))
    return SparseTensorCSF(
        tuple(mode_order), shape, tuple(idx), tuple(ptr), _readonly(np.array(values, dtype=np.float64))
    )


def boundary_rows(node_ids):
    """Row positions where a new node starts, given per-row node ids."""
    if len(node_ids) == 0:
        return np.zeros(0, dtype=np.int64)
    start = np.ones(len(node_ids), dtype=bool)
    start[1:] = node_ids[1:] != node_ids[:-1]
    return np.flatnonzero(start)


def nnz_at_level(csf: SparseTensorCSF, k: int) -> int:
    """Number of CSF nodes at level ``k`` (1-based), i.e. distinct k-prefixes."""
    if not 1 <= k <= csf.order:
        raise ValueError(f"level {k} out of range 1..{csf.order}")
    return len(csf.idx[k - 1])


def csf_to_coo(csf: SparseTensorCSF) -> SparseTensorCOO:
    """Expand the CSF tree back into a normalized COO tensor (CSF mode order)."""
    d = csf.order
    nnz = csf.nnz
    coords = np.zeros((nnz, d), dtype=np.int64)
    if nnz:
        # parent node of each node, walking leaf level upward
        owner = np.arange(len(csf.idx[d - 1]))
        for level in range(d - 1, -1, -1):
            coords[:, level] = csf.idx[level][owner]
            if level:
                counts = np.diff(csf.ptr[level - 1])
                parent = np.repeat(np.arange(len(counts)), counts)
                owner = parent[owner]
    return SparseTensorCOO(csf.indices, csf.shape, coords, csf.values)


def coo_from_dense(indices, array, keep_zeros=False) -> SparseTensorCOO:
    arr = np.asarray(array, dtype=np.float64)
    if keep_zeros:
        coords = np.argwhere(np.ones(arr.shape, dtype=bool))
    else:
        coords = np.argwhere(arr != 0)
    return SparseTensorCOO(indices, arr.shape, coords, arr[tuple(coords.T)])


