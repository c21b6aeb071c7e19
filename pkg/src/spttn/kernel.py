"""SpTTN kernel descriptions.

Grammar (whitespace insensitive)::

    kernel  := factor ('*' factor)* '->' factor ['@sparse_out']
    factor  := NAME '[' IDX (',' IDX)* ']'

The first factor is the sparse input; every other input is dense.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from math import prod
from typing import Mapping

from .errors import KernelParseError, KernelValidationError

SPARSE_INPUT = "sparse-input"
DENSE_INPUT = "dense-input"
OUTPUT = "output"

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"
_FACTOR = re.compile(rf"^({_NAME})\[({_NAME}(?:,{_NAME})*)?\]$")


@dataclass(frozen=True)
class TensorRef:
    name: str
    indices: tuple
    kind: str

    def __str__(self):
        return f"{self.name}[{','.join(self.indices)}]"


@dataclass(frozen=True)
class KernelSpec:
    tensors: tuple
    index_dims: Mapping[str, int] = field(hash=False)
    output_sparse: bool = False

    @property
    def inputs(self):
        return self.tensors[:-1]

    @property
    def sparse(self):
        return self.tensors[0]

    @property
    def output(self):
        return self.tensors[-1]

    @property
    def all_indices(self):
        """Kernel indices in order of first appearance."""
        seen = {}
        for t in self.tensors:
            for i in t.indices:
                seen.setdefault(i, None)
        return tuple(seen)

    def dim(self, index):
        return self.index_dims[index]

    def shape_of(self, ref):
        return tuple(self.index_dims[i] for i in ref.indices)

    def size_of(self, indices):
        return prod(self.index_dims[i] for i in indices)

    def tensor(self, name):
        for t in self.tensors:
            if t.name == name:
                return t
        raise KeyError(name)

    def canonical(self):
        text = "*".join(str(t) for t in self.inputs) + "->" + str(self.output)
        if self.output_sparse:
            text += " @sparse_out"
        return text

    def with_dims(self, dims):
        merged = dict(self.index_dims)
        merged.update(dims)
        return parse_kernel(self.canonical(), merged)

    def __str__(self):
        return self.canonical()

    def __eq__(self, other):
        if not isinstance(other, KernelSpec):
            return NotImplemented
        return (
            self.tensors == other.tensors
            and dict(self.index_dims) == dict(other.index_dims)
            and self.output_sparse == other.output_sparse
        )

    def __hash__(self):
        return hash((self.tensors, tuple(sorted(self.index_dims.items())), self.output_sparse))


def _parse_factor(text):
    m = _FACTOR.match(text)
    if not m:
        raise KernelParseError(f"malformed tensor reference {text!r}")
    name, idx = m.group(1), m.group(2)
    indices = tuple(idx.split(",")) if idx else ()
    if len(set(indices)) != len(indices):
        raise KernelParseError(f"repeated index in {text!r}")
    return name, indices


def parse_kernel(text: str, dims: Mapping[str, int] | None = None) -> KernelSpec:
    """Parse and validate a kernel description.

    ``dims`` maps every index token to its dimension size. Missing sizes
    raise :class:`KernelValidationError`; callers that infer sizes from
    tensor files should merge them in before calling.
    """
    dims = dict(dims or {})
    compact = re.sub(r"\s+", "", text)
    output_sparse = False
    if compact.endswith("@sparse_out"):
        output_sparse = True
        compact = compact[: -len("@sparse_out")]
    if "@" in compact:
        raise KernelParseError(f"unknown directive in {text!r}")
    if compact.count("->") != 1:
        raise KernelParseError("kernel needs exactly one '->'")
    lhs, rhs = compact.split("->")
    if not lhs:
        raise KernelParseError("no input tensors")
    factors = [_parse_factor(f) for f in lhs.split("*")]
    out_name, out_idx = _parse_factor(rhs)

    names = [n for n, _ in factors] + [out_name]
    if len(set(names)) != len(names):
        raise KernelValidationError(f"tensor names must be distinct: {names}")
    if len(factors) < 2:
        raise KernelValidationError("an SpTTN kernel needs a sparse tensor and at least one dense tensor")

    tensors = [TensorRef(factors[0][0], factors[0][1], SPARSE_INPUT)]
    tensors += [TensorRef(n, i, DENSE_INPUT) for n, i in factors[1:]]
    tensors.append(TensorRef(out_name, out_idx, OUTPUT))

    input_indices = set().union(*(t.indices for t in tensors[:-1]))
    missing_out = [i for i in out_idx if i not in input_indices]
    if missing_out:
        raise KernelValidationError(f"output indices {missing_out} appear in no input")
    if output_sparse and set(out_idx) != set(tensors[0].indices):
        raise KernelValidationError("@sparse_out requires the output to carry exactly the sparse tensor's indices")
    if not tensors[0].indices:
        raise KernelValidationError("the sparse tensor needs at least one index")

    used = [i for t in tensors for i in t.indices]
    missing = sorted({i for i in used if i not in dims})
    if missing:
        raise KernelValidationError(f"no dimension size for indices {missing}")
    for i in set(used):
        size = dims[i]
        if not isinstance(size, int) or isinstance(size, bool) or size < 1:
            raise KernelValidationError(f"dimension of {i!r} must be a positive integer, got {size!r}")
    index_dims = {i: dims[i] for i in dict.fromkeys(used)}
    return KernelSpec(tuple(tensors), index_dims, output_sparse)


def check_tensor_shapes(spec: KernelSpec, shapes: Mapping[str, tuple]):
    """Check that the given per-tensor shapes agree with each other and with ``spec``.

    Raises :class:`KernelValidationError` if two tensors disagree on the size
    of a shared index.
    """
    seen = {}
    for name, shape in shapes.items():
        ref = spec.tensor(name)
        if len(shape) != len(ref.indices):
            raise KernelValidationError(f"{name} has {len(shape)} modes, kernel expects {len(ref.indices)}")
        for i, s in zip(ref.indices, shape):
            prev = seen.setdefault(i, (s, name))
            if prev[0] != s:
                raise KernelValidationError(
                    f"index {i!r} has size {prev[0]} in {prev[1]} but {s} in {name}"
                )
    for i, (s, name) in seen.items():
        if spec.index_dims.get(i, s) != s:
            raise KernelValidationError(f"index {i!r} has size {s} in {name} but kernel says {spec.index_dims[i]}")


def infer_dims(spec_text: str, shapes: Mapping[str, tuple], dims: Mapping[str, int] | None = None):
    """Dimension map from explicit ``dims`` plus the shapes of named tensors.

    Disagreement between two sources raises :class:`KernelValidationError`.
    """
    out = dict(dims or {})
    refs = dict(kernel_refs(spec_text))
    for name, shape in shapes.items():
        idx = refs[name]
        if len(idx) != len(shape):
            raise KernelValidationError(f"{name} has {len(shape)} modes, kernel expects {len(idx)}")
        for i, s in zip(idx, shape):
            if i in out and out[i] != s:
                raise KernelValidationError(f"index {i!r}: size {out[i]} conflicts with {s} from {name}")
            out[i] = int(s)
    return out


def kernel_refs(spec_text: str):
    """``[(name, indices), ...]`` of every factor, inputs first, without
    validating sizes."""
    compact = re.sub(r"\s+", "", spec_text).replace("@sparse_out", "")
    if compact.count("->") != 1:
        raise KernelParseError("kernel needs exactly one '->'")
    lhs, rhs = compact.split("->")
    return [_parse_factor(f) for f in lhs.split("*") + [rhs]]


def kernel_indices(spec: KernelSpec):
    """``(all, contracted)`` index sets of the kernel."""
    all_ = frozenset(i for t in spec.tensors for i in t.indices)
    return all_, all_ - frozenset(spec.output.indices)


# canonical example kernels, keyed by the short names used in tests and the CLI
KERNELS = {
    "mttkrp": "T[i,j,k]*B[j,a]*C[k,a]->A[i,a]",
    "ttmc": "T[i,j,k]*U[j,r]*V[k,s]->S[i,r,s]",
    "tttp": "T[i,j,k]*U[i,r]*V[j,r]*W[k,r]->S[i,j,k] @sparse_out",
    "ttmc4": "T[i,j,k,l]*U[j,r]*V[k,s]*W[l,t]->S[i,r,s,t]",
    "tttc4": "T[i,j,k,l]*A[i,a]*B[a,j,b]*C[b,k,c]->Z[c,l]",
}
