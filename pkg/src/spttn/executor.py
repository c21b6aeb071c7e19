"""Run a fused loop nest forest over concrete tensors.

``prepare`` composes a path and loop order into nested loop closures:
sparse loops walk the CSF tree, dense loops are plain ranges,
intermediate buffers are zeroed where the forest requires it, and the
trailing independent dense loops of a term are handed to a micro-kernel.
``execute`` runs that code.

Operation counting convention: one pairwise multiply-accumulate counts as
2 operations (a multiply and an add). The unfactorized oracle counts
``n_factors`` operations per innermost body, that is ``n_factors - 1``
multiplies plus one accumulate.
"""

from __future__ import annotations

import string
import time
import weakref
from operator import itemgetter
from dataclasses import dataclass, field
from math import prod

import numpy as np

from . import microkernels
from .errors import KernelValidationError, ResourceLimitError, UnsupportedOrderError
from .kernel import KernelSpec
from .loopnest import (
    FusedLoopForest,
    LoopVertex,
    build_forest,
    independent_dense_chain,
    reset_points,
    validate_order,
)
from .paths import ContractionPath, intermediate_names
from .tensor import (
    DenseTensor,
    SparseTensorCOO,
    SparseTensorCSF,
    build_csf,
    csf_to_coo,
    nnz_at_level,
)

MAX_KERNEL_INDICES = 2


@dataclass(frozen=True)
class Hook:
    """How the innermost independent dense loops of one term are run.

    ``loops`` are generated as ordinary loops around the micro-kernel, which
    covers ``kernel`` (at most two indices).
    """

    kind: str = "none"
    loops: tuple = ()
    kernel: tuple = ()

    def describe(self):
        if self.kind == "none":
            return "none"
        text = f"{self.kind}({','.join(self.kernel)})"
        if self.loops:
            text = f"loop({','.join(self.loops)})+" + text
        return text


@dataclass
class ExecStats:
    ops: int = 0
    resets: dict = field(default_factory=dict)
    peak_buffer_bytes: int = 0
    wall_time: float = 0.0


@dataclass
class ExecPlan:
    spec: KernelSpec
    path: ContractionPath
    order: tuple
    forest: FusedLoopForest
    csf: SparseTensorCSF
    dense: dict
    buffers: dict
    hooks: dict
    _fn: object = field(repr=False, default=None)
    _out: object = field(repr=False, default=None)
    _counts: dict = field(repr=False, default_factory=dict)
    _observer: object = field(repr=False, default=None)

    def _reset(self, p):
        buf = self.buffers[p][1]
        buf[...] = 0.0
        self._counts[p] += 1
        if self._observer is not None:
            self._observer(p, buf)

    @property
    def buffer_bytes(self):
        return sum(b.nbytes for _, b in self.buffers.values())

    def hook_table(self):
        return {t: h.describe() for t, h in sorted(self.hooks.items())}


def _as_sparse(spec, tensor):
    """COO or CSF input, relabelled to the kernel's sparse index names."""
    ref = spec.sparse
    if isinstance(tensor, SparseTensorCSF):
        if sorted(tensor.indices) == sorted(ref.indices):
            return tensor
        tensor = csf_to_coo(tensor)
    if isinstance(tensor, SparseTensorCOO):
        if tensor.indices != ref.indices and sorted(tensor.indices) != sorted(ref.indices):
            tensor = SparseTensorCOO(ref.indices, tensor.shape, tensor.coords, tensor.values)
        if tensor.order != len(ref.indices):
            raise KernelValidationError(f"{ref.name} has {tensor.order} modes, kernel expects {len(ref.indices)}")
        return tensor
    raise KernelValidationError(f"{ref.name} must be a sparse tensor, got {type(tensor).__name__}")


def _sparse_csf(spec, tensor, csf_order):
    t = _as_sparse(spec, tensor)
    if isinstance(t, SparseTensorCSF):
        if t.indices == tuple(csf_order):
            csf = t
        else:
            csf = build_csf(csf_to_coo(t), csf_order)
    else:
        csf = build_csf(t.normalized(), csf_order)
    want = tuple(spec.dim(i) for i in csf.indices)
    if csf.shape != want:
        raise KernelValidationError(f"{spec.sparse.name} has shape {csf.shape} in order {csf.indices}, expected {want}")
    return csf


def _dense_inputs(spec, tensors):
    out = {}
    for ref in spec.inputs[1:]:
        if ref.name not in tensors:
            raise KernelValidationError(f"missing dense input {ref.name}")
        t = tensors[ref.name]
        arr = t.array if isinstance(t, DenseTensor) else np.asarray(t, dtype=np.float64)
        if arr.shape != spec.shape_of(ref):
            raise KernelValidationError(f"{ref.name} has shape {arr.shape}, expected {spec.shape_of(ref)}")
        out[ref.name] = np.ascontiguousarray(arr, dtype=np.float64)
    return out


def stored_indices(forest: FusedLoopForest, tid):
    """Axis order of tensor ``tid`` as stored: buffers follow the producer's loops."""
    path = forest.path
    n_in = len(path.spec.inputs)
    if tid < n_in:
        return path.spec.inputs[tid].indices
    p = tid - n_in
    if p == path.n_terms - 1:
        return path.spec.output.indices
    return forest.buffers[(p, path.consumer[p])]


def _choose_hook(lhs, rhs, out, chain):
    """Micro-kernel for the trailing dense chain of a term with stored operand
    orders ``lhs``, ``rhs`` and ``out``."""
    if not chain:
        return Hook()
    kernel = chain[-MAX_KERNEL_INDICES:]
    loops = chain[: len(chain) - len(kernel)]
    ks = set(kernel)

    def axes(indices):
        return tuple(i for i in indices if i in ks)

    a, b, o = axes(lhs), axes(rhs), axes(out)
    kind = microkernels.DENSE
    if set(o) == ks:
        if (a == o and not b) or (b == o and not a):
            kind = microkernels.AXPY
        elif len(ks) == 2 and len(a) == 1 and len(b) == 1 and a != b:
            kind = microkernels.GER
    return Hook(kind, loops, kernel)


def assign_hooks(forest: FusedLoopForest):
    hooks = {}
    for t in forest.ancestors:
        term = forest.path.terms[t]
        hooks[t] = _choose_hook(
            stored_indices(forest, term.lhs),
            stored_indices(forest, term.rhs),
            stored_indices(forest, term.out),
            independent_dense_chain(forest, t),
        )
    return hooks


def _check_sparse_levels(forest, term):
    levels = [v.level for v in forest.ancestors[term] if v.sparse]
    if levels != list(range(len(levels))):
        raise UnsupportedOrderError(
            f"term {term} iterates CSF levels {levels}; sparse loops must follow the CSF levels from the root"
        )
    return len(levels)


_ALL = slice(None)


class _Builder:
    """Composes the loop nest of a plan into nested closures.

    Closures share three mutable lists: ``val`` holds the current value of
    every loop index (one slot per index), ``pos`` the current CSF node at
    every level, and ``cnt`` the operation counter.
    """

    def __init__(self, plan: ExecPlan, out, outv):
        spec = plan.spec
        self.plan = plan
        self.path = plan.path
        self.spec = spec
        self.slot = {i: k for k, i in enumerate(spec.all_indices)}
        self.val = [0] * len(self.slot)
        self.pos = [0] * len(spec.sparse.indices)
        self.cnt = [0]
        self.leaf = len(spec.sparse.indices) - 1
        csf = plan.csf
        self.idx = [a.tolist() for a in csf.idx]
        self.ptr = [a.tolist() for a in csf.ptr]
        self.vals = csf.values.tolist()
        n_in = len(spec.inputs)
        self.n_in = n_in
        self.last = n_in + self.path.n_terms - 1
        self.arrays = {tid: plan.dense[spec.inputs[tid].name] for tid in range(1, n_in)}
        for p, (_, buf) in plan.buffers.items():
            self.arrays[n_in + p] = buf
        self.arrays[self.last] = outv if spec.output_sparse else out
        self.resets = reset_points(plan.forest)
        self.kernels = {k: microkernels.get(k) for k in microkernels.kinds()}
        self._stored = {}

    def stored(self, tid):
        got = self._stored.get(tid)
        if got is None:
            got = self._stored[tid] = stored_indices(self.plan.forest, tid)
        return got

    def is_leaf_valued(self, tid):
        """The sparse input, or a sparse output aligned with its leaves."""
        return tid == 0 or (tid == self.last and self.spec.output_sparse)

    def key(self, tid, kernel=()):
        """Function of ``val`` giving the index of ``tid`` at the current point;
        ``kernel`` axes are left whole."""
        pos, leaf = self.pos, self.leaf
        if self.is_leaf_valued(tid):
            if kernel:
                return lambda v: (pos[leaf], Ellipsis)
            return lambda v: pos[leaf]
        stored = self.stored(tid)
        if kernel:
            fixed = [self.slot[i] for i in stored if i not in kernel]
            if all(i in kernel for i in stored[len(fixed):]):
                # kernel axes trailing: fixed part then full slices
                if not fixed:
                    return lambda v: (Ellipsis,)
                if len(fixed) == 1:
                    s0 = fixed[0]
                    return lambda v: (v[s0], Ellipsis)
                g = itemgetter(*fixed)
                return lambda v: g(v) + (Ellipsis,)
            slots = [None if i in kernel else self.slot[i] for i in stored]
            return lambda v: tuple(_ALL if s is None else v[s] for s in slots) + (Ellipsis,)
        if not stored:
            return lambda v: ()
        return itemgetter(*(self.slot[i] for i in stored))

    def reader(self, tid, kernel=()):
        val = self.val
        if tid == 0:
            vals, pos, leaf = self.vals, self.pos, self.leaf
            return lambda: vals[pos[leaf]]
        arr = self.arrays[tid]
        key = self.key(tid, kernel)
        return lambda: arr[key(val)]

    def body(self, term):
        t = self.path.terms[term]
        out, okey = self.arrays[t.out], self.key(t.out)
        ra, rb = self.reader(t.lhs), self.reader(t.rhs)
        val, cnt = self.val, self.cnt

        def run():
            out[okey(val)] += ra() * rb()
            cnt[0] += 2

        return run

    def kernel_call(self, term, hook):
        t = self.path.terms[term]
        ks = hook.kernel
        val, cnt = self.val, self.cnt
        n = 2 * prod(self.spec.dim(i) for i in ks)
        out, okey = self.arrays[t.out], self.key(t.out, ks)
        ra, rb = self.reader(t.lhs, ks), self.reader(t.rhs, ks)

        def axes(tid):
            return [i for i in self.stored(tid) if i in ks] if tid != 0 else []

        ax_a, ax_b, ax_o = axes(t.lhs), axes(t.rhs), axes(t.out)
        fn = self.kernels[hook.kind]
        if hook.kind == microkernels.AXPY:
            alpha, x = (rb, ra) if ax_a else (ra, rb)

            def run():
                fn(out[okey(val)], alpha(), x())
                cnt[0] += n

        elif hook.kind == microkernels.GER:
            x, y = (ra, rb) if ax_a == ax_o[:1] else (rb, ra)

            def run():
                fn(out[okey(val)], x(), y())
                cnt[0] += n

        else:
            letters = {i: string.ascii_letters[k] for k, i in enumerate(ks)}
            subs = "".join(letters[i] for i in ax_a) + "," + "".join(letters[i] for i in ax_b)
            subs += "->" + "".join(letters[i] for i in ax_o)

            def run():
                fn(out[okey(val)], subs, ra(), rb())
                cnt[0] += n

        return run

    def nodes(self, children, parent):
        fns = []
        resets = self.resets.get(id(parent), {}) if parent is not None else {}
        for k, node in enumerate(children):
            for p in resets.get(k, ()):
                fns.append(self._reset_fn(p))
            if not isinstance(node, LoopVertex):
                fns.append(self.body(node))
                continue
            terms = node.terms()
            if len(terms) == 1:
                h = self.plan.hooks[terms[0]]
                if h.kernel and h.kernel[0] == node.index:
                    fns.append(self.kernel_call(terms[0], h))
                    continue
            fns.append(self.loop(node))
        return fns

    def _reset_fn(self, p):
        reset = self.reset
        return lambda: reset(p)

    def loop(self, node):
        kids = self.nodes(node.children, node)
        val, pos = self.val, self.pos
        s = self.slot[node.index]
        if node.sparse:
            lvl = node.level
            idx = self.idx[lvl]
            if lvl == 0:
                def run():
                    for n in range(len(idx)):
                        pos[0] = n
                        val[s] = idx[n]
                        for f in kids:
                            f()
            else:
                ptr = self.ptr[lvl - 1]

                def run():
                    p = pos[lvl - 1]
                    for n in range(ptr[p], ptr[p + 1]):
                        pos[lvl] = n
                        val[s] = idx[n]
                        for f in kids:
                            f()
        else:
            rng = range(self.spec.dim(node.index))

            def run():
                for x in rng:
                    val[s] = x
                    for f in kids:
                        f()

        return run

    def build(self, reset):
        self.reset = reset
        roots = self.nodes(self.plan.forest.roots, None)
        cnt = self.cnt

        def run():
            cnt[0] = 0
            for f in roots:
                f()
            return cnt[0]

        return run


def prepare(path: ContractionPath, order, tensors, buffer_limit_bytes=None) -> ExecPlan:
    """Check inputs, allocate buffers, assign micro-kernel hooks, build the loop nest.

    ``tensors`` maps tensor names to arrays (dense inputs) and a COO or CSF
    tensor (the sparse input).
    """
    spec = path.spec
    order = validate_order(path, order, check_csf=True)
    forest = build_forest(path, order, validated=True)
    for t in range(path.n_terms):
        _check_sparse_levels(forest, t)
    if spec.sparse.name not in tensors:
        raise KernelValidationError(f"missing sparse input {spec.sparse.name}")
    csf = _sparse_csf(spec, tensors[spec.sparse.name], path.csf_order)
    dense = _dense_inputs(spec, tensors)

    buffers = {}
    total = 0
    for (p, c), idx in forest.buffers.items():
        if not c > p:
            raise AssertionError(f"buffer of term {p} consumed by earlier term {c}")
        shape = tuple(spec.dim(i) for i in idx)
        total += 8 * prod(shape)
        if buffer_limit_bytes is not None and total > buffer_limit_bytes:
            raise ResourceLimitError(
                f"intermediate buffers need at least {total} bytes, limit is {buffer_limit_bytes}"
            )
        buffers[p] = (idx, np.zeros(shape))
    hooks = assign_hooks(forest)
    plan = ExecPlan(spec, path, order, forest, csf, dense, buffers, hooks)
    if spec.output_sparse:
        plan._out = np.zeros(csf.nnz)
    else:
        plan._out = np.zeros(spec.shape_of(spec.output))
    sparse_out = spec.output_sparse
    plan._fn = _Builder(plan, None if sparse_out else plan._out, plan._out if sparse_out else None).build(
        plan._reset
    )
    return plan


def _leaf_coords(csf):
    coo = _LEAF_COO.get(csf)
    if coo is None:
        coo = _LEAF_COO[csf] = csf_to_coo(csf)
    return coo


_LEAF_COO = weakref.WeakKeyDictionary()


def execute(plan: ExecPlan, observer=None):
    """Run a prepared plan; returns ``(output, ExecStats)``.

    ``observer(producer, buffer)`` is called every time an intermediate
    buffer is zeroed, right before its producer's subtree is entered.
    """
    spec = plan.spec
    names = intermediate_names(plan.path)
    plan._counts = {p: 0 for p in plan.buffers}
    plan._observer = observer
    plan._out[...] = 0.0
    start = time.perf_counter()
    # buffers shared with no loop are zeroed once up front
    for p in reset_points(plan.forest).get(None, {}).get(-1, []):
        plan._reset(p)
    ops = plan._fn()
    wall = time.perf_counter() - start
    stats = ExecStats(ops, {names[p]: n for p, n in plan._counts.items()}, plan.buffer_bytes, wall)
    out = plan._out.copy()
    if spec.output_sparse:
        leaf = _leaf_coords(plan.csf)
        coo = SparseTensorCOO(leaf.indices, leaf.shape, leaf.coords, out)
        if coo.indices != spec.output.indices:
            coo = coo.transpose(spec.output.indices)
        return coo, stats
    return DenseTensor(spec.output.indices, out), stats


def run(path, order, tensors, **kw):
    return execute(prepare(path, order, tensors, **kw))


def execute_unfactorized(spec: KernelSpec, tensors):
    """Reference result: every factor multiplied together in one loop nest.

    For each nonzero of the sparse tensor, the dense factors are sliced at
    its coordinates and contracted over the remaining indices in one step.
    """
    start = time.perf_counter()
    ref = spec.sparse
    coo = _as_sparse(spec, tensors[ref.name])
    if isinstance(coo, SparseTensorCSF):
        coo = csf_to_coo(coo)
    coo = coo.transpose(ref.indices) if coo.indices != ref.indices else coo.normalized()
    if coo.shape != spec.shape_of(ref):
        raise KernelValidationError(f"{ref.name} has shape {coo.shape}, expected {spec.shape_of(ref)}")
    dense = _dense_inputs(spec, tensors)
    sparse_set = set(ref.indices)
    free = [i for i in spec.all_indices if i not in sparse_set]
    letters = {i: string.ascii_letters[n] for n, i in enumerate(free)}
    out_ref = spec.output
    out_free = [i for i in out_ref.indices if i not in sparse_set]
    subs = ",".join("".join(letters[i] for i in t.indices if i in letters) for t in spec.inputs[1:])
    subs += "->" + "".join(letters[i] for i in out_free)
    n_factors = len(spec.inputs)
    per_nnz = n_factors * prod(spec.dim(i) for i in free)

    out = np.zeros(coo.nnz) if spec.output_sparse else np.zeros(spec.shape_of(out_ref))
    for e, (coord, v) in enumerate(zip(coo.coords, coo.values)):
        at = dict(zip(ref.indices, (int(c) for c in coord)))
        slices = []
        for t in spec.inputs[1:]:
            key = tuple(at[i] if i in at else slice(None) for i in t.indices)
            slices.append(dense[t.name][key])
        val = v * np.einsum(subs, *slices)
        if spec.output_sparse:
            out[e] += val
        else:
            key = tuple(at[i] if i in at else slice(None) for i in out_ref.indices)
            # advanced-free basic indexing keeps the output axes in order
            out[key] += val
    stats = ExecStats(per_nnz * coo.nnz, {}, 0, time.perf_counter() - start)
    if spec.output_sparse:
        res = SparseTensorCOO(ref.indices, coo.shape, coo.coords, out)
        return res.transpose(out_ref.indices), stats
    return DenseTensor(out_ref.indices, out), stats


def flops_estimate(path: ContractionPath, order, csf: SparseTensorCSF | None = None, dims=None):
    """Predicted operation count of the fused loop nest.

    Each term costs 2 operations per execution of its body. The loops above
    a term iterate ``nnz_at_level(L)`` sparse prefixes when the deepest
    sparse loop is at CSF level ``L`` (dense loops multiply in their full
    dimension). Orders that iterate deeper CSF levels without the levels
    above them would need merged-subtree iteration and are rejected.
    """
    dims = dict(dims or path.spec.index_dims)
    order = validate_order(path, order, check_csf=True)
    forest = build_forest(path, order)
    if csf is None:
        raise ValueError("flops_estimate needs the CSF tensor for level counts")
    if csf.indices != path.csf_order:
        raise ValueError(f"CSF mode order {csf.indices} differs from the path's {path.csf_order}")
    total = 0
    for t in range(path.n_terms):
        depth = _check_sparse_levels(forest, t)
        n = nnz_at_level(csf, depth) if depth else 1
        total += 2 * n * prod(dims[v.index] for v in forest.ancestors[t] if not v.sparse)
    return total


def unfactorized_ops(spec: KernelSpec, nnz):
    """Operation count of the unfactorized oracle for ``nnz`` nonzeros."""
    sparse_set = set(spec.sparse.indices)
    return len(spec.inputs) * nnz * prod(spec.dim(i) for i in spec.all_indices if i not in sparse_set)
