"""Contraction paths: sequences of pairwise contractions of the kernel inputs.

Tensor ids ``0..n-1`` are the kernel inputs (0 is the sparse tensor); each
term creates the next id. The last term writes the kernel output.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from functools import cached_property
from math import comb

from .kernel import KernelSpec

EAGER_LIMIT = 8


@dataclass(frozen=True)
class Term:
    """One pairwise contraction ``lhs * rhs -> out``.

    ``sparse`` lists, in CSF order, the indices this term iterates through the
    sparse tensor's CSF tree. It is empty for terms that only see dense data.
    """

    lhs: int
    rhs: int
    out: int
    lhs_indices: tuple
    rhs_indices: tuple
    out_indices: tuple
    sparse: tuple = ()

    @property
    def indices(self):
        return frozenset(self.lhs_indices) | frozenset(self.rhs_indices) | frozenset(self.out_indices)

    @property
    def operands(self):
        return (self.lhs_indices, self.rhs_indices, self.out_indices)

    @property
    def width(self):
        return len(self.indices)


@dataclass(frozen=True)
class ContractionPath:
    spec: KernelSpec
    tree: tuple
    terms: tuple
    csf_order: tuple

    @property
    def n_terms(self):
        return len(self.terms)

    @cached_property
    def consumer(self):
        """Map producer term position -> consumer term position."""
        by_input = {}
        for pos, t in enumerate(self.terms):
            by_input[t.lhs] = pos
            by_input[t.rhs] = pos
        return {p: by_input[t.out] for p, t in enumerate(self.terms[:-1])}

    def edges(self):
        return sorted(self.consumer.items())

    def tensor_name(self, tid):
        n = len(self.spec.inputs)
        if tid < n:
            return self.spec.inputs[tid].name
        if tid == n + len(self.terms) - 1:
            return self.spec.output.name
        return intermediate_names(self)[tid - n]

    def describe(self):
        """Readable term list such as ``(T*V->X), (X*U->S)``."""
        parts = []
        for t in self.terms:
            parts.append(
                f"({self.tensor_name(t.lhs)}*{self.tensor_name(t.rhs)}->{self.tensor_name(t.out)})"
            )
        return ", ".join(parts)

    def __str__(self):
        return self.describe()


def intermediate_names(path):
    taken = {t.name for t in path.spec.tensors}
    pool = [c for c in "XYZWQPGH" if c not in taken]
    names = []
    for k in range(len(path.terms) - 1):
        if k < len(pool):
            names.append(pool[k])
        else:
            names.append(f"X{k}")
    return names


def count_paths(n):
    """Number of contraction sequences for ``n`` tensors: C(n,2) * count(n-1)."""
    if n < 2:
        raise ValueError("need at least two tensors")
    total = 1
    for k in range(3, n + 1):
        total *= comb(k, 2)
    return total


def _sparse_prefix(prefix, indices):
    """Longest leading part of ``prefix`` whose indices are all in ``indices``."""
    out = []
    for i in prefix:
        if i not in indices:
            break
        out.append(i)
    return tuple(out)


def build_path(spec: KernelSpec, pairs, csf_order=None) -> ContractionPath:
    """Materialize a path from a sequence of ``(tid_a, tid_b)`` contractions."""
    csf_order = tuple(csf_order or spec.sparse.indices)
    if sorted(csf_order) != sorted(spec.sparse.indices):
        raise ValueError(f"CSF order {csf_order} is not a permutation of {spec.sparse.indices}")
    n = len(spec.inputs)
    pairs = list(pairs)
    if len(pairs) != n - 1:
        raise ValueError(f"{n} inputs need {n - 1} contractions, got {len(pairs)}")
    rank = {i: k for k, i in enumerate(spec.all_indices)}
    live = {tid: t.indices for tid, t in enumerate(spec.inputs)}
    prefix = {0: csf_order}
    subtree = {tid: tid for tid in range(n)}
    out_idx = spec.output.indices
    terms = []
    next_id = n
    for step, (a, b) in enumerate(pairs):
        if a not in live or b not in live or a == b:
            raise ValueError(f"invalid contraction ({a}, {b}) at step {step}")
        # the sparse-derived operand goes on the left
        if b in prefix and a not in prefix:
            a, b = b, a
        ia, ib = live.pop(a), live.pop(b)
        last = step == len(pairs) - 1
        if last:
            out = tuple(out_idx)
        else:
            needed = set(out_idx).union(*live.values())
            out = tuple(sorted((set(ia) | set(ib)) & needed, key=rank.__getitem__))
        sparse = prefix.get(a, ())
        terms.append(Term(a, b, next_id, tuple(ia), tuple(ib), out, sparse))
        if a in prefix:
            prefix[next_id] = _sparse_prefix(prefix[a], out)
        live[next_id] = out
        subtree[next_id] = _canon(subtree.pop(a), subtree.pop(b))
        next_id += 1
    (tree,) = subtree.values()
    return ContractionPath(spec, tree, tuple(terms), csf_order)


def _canon(x, y):
    key = lambda t: (_leaves(t), str(t))  # noqa: E731
    return tuple(sorted((x, y), key=key))


def _leaves(t):
    if isinstance(t, int):
        return (t,)
    return tuple(sorted(_leaves(t[0]) + _leaves(t[1])))


def _iter_pair_sequences(ids, next_id):
    if len(ids) == 1:
        yield ()
        return
    for x, y in itertools.combinations(range(len(ids)), 2):
        rest = [t for k, t in enumerate(ids) if k not in (x, y)] + [next_id]
        for tail in _iter_pair_sequences(rest, next_id + 1):
            yield ((ids[x], ids[y]),) + tail


def iter_paths(spec: KernelSpec, csf_order=None):
    n = len(spec.inputs)
    if n < 2:
        raise ValueError("contraction paths need at least two input tensors")
    for pairs in _iter_pair_sequences(list(range(n)), n):
        yield build_path(spec, pairs, csf_order)


def enumerate_paths(spec: KernelSpec, csf_order=None):
    """All contraction sequences of the kernel inputs.

    Returns a list for kernels with at most ``EAGER_LIMIT`` inputs and a lazy
    iterator beyond that.
    """
    it = iter_paths(spec, csf_order)
    if len(spec.inputs) <= EAGER_LIMIT:
        return list(it)
    return it


def max_loop_depth(path: ContractionPath) -> int:
    return max(t.width for t in path.terms)


def filter_min_depth(paths):
    paths = list(paths)
    if not paths:
        raise ValueError("no paths to filter")
    best = min(max_loop_depth(p) for p in paths)
    return [p for p in paths if max_loop_depth(p) == best]


_TOKEN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*|[()*])")


def parse_path(spec: KernelSpec, text: str, csf_order=None) -> ContractionPath:
    """Path from a parenthesized expression such as ``"(T*V)*U"``.

    Subexpressions are contracted left to right in post-order.
    """
    names = {t.name: k for k, t in enumerate(spec.inputs)}
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"bad path expression {text!r}")
        tokens.append(m.group(1))
        pos = m.end()
    pairs = []
    counter = [len(spec.inputs)]

    def expr(k):
        node, k = atom(k)
        while k < len(tokens) and tokens[k] == "*":
            rhs, k = atom(k + 1)
            pairs.append((node, rhs))
            node = counter[0]
            counter[0] += 1
        return node, k

    def atom(k):
        if k >= len(tokens):
            raise ValueError(f"unexpected end of path expression {text!r}")
        if tokens[k] == "(":
            node, k = expr(k + 1)
            if k >= len(tokens) or tokens[k] != ")":
                raise ValueError(f"unbalanced parentheses in {text!r}")
            return node, k + 1
        if tokens[k] not in names:
            raise ValueError(f"unknown tensor {tokens[k]!r} in path")
        return names[tokens[k]], k + 1

    _, end = expr(0)
    if end != len(tokens):
        raise ValueError(f"trailing tokens in path expression {text!r}")
    used = [x for p in pairs for x in p if x < len(spec.inputs)]
    if sorted(used) != list(range(len(spec.inputs))):
        raise ValueError("path expression must use every input tensor exactly once")
    return build_path(spec, pairs, csf_order)
