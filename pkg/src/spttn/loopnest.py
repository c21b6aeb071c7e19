"""Loop orders and the fully-fused loop nest forests they induce.

A loop order is a tuple with one index tuple per term of a contraction
path. Fusing the per-term loop nests wherever consecutive terms share their
leading loop index gives a unique fully-fused forest.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial, prod

from .paths import ContractionPath, intermediate_names


def admissible(term_indices, sparse, order):
    """True if ``order`` permutes the term's indices and keeps ``sparse`` in order."""
    if len(order) != len(term_indices) or set(order) != set(term_indices):
        return False
    pos = [order.index(i) for i in sparse]
    return pos == sorted(pos)


def validate_order(path: ContractionPath, order, check_csf=False):
    order = tuple(tuple(a) for a in order)
    if len(order) != path.n_terms:
        raise ValueError(f"path has {path.n_terms} terms but order has {len(order)} entries")
    for k, (term, a) in enumerate(zip(path.terms, order)):
        if len(set(a)) != len(a) or set(a) != term.indices:
            raise ValueError(
                f"order {a} for term {k} is not a permutation of {sorted(term.indices)}"
            )
        if check_csf and not admissible(term.indices, term.sparse, a):
            from .errors import UnsupportedOrderError

            raise UnsupportedOrderError(
                f"order {a} for term {k} visits sparse indices out of CSF order {term.sparse}"
            )
    return order


def peel(order):
    """Split off the outermost loop of a loop order.

    Returns ``(first, rest)``: ``first`` holds the inner orders of the leading
    terms that share the first index (emptied entries dropped), ``rest`` the
    remaining terms untouched.
    """
    order = tuple(tuple(a) for a in order)
    if not order or not order[0]:
        raise ValueError("cannot peel an empty loop order")
    head = order[0][0]
    r = 1
    while r < len(order) and order[r] and order[r][0] == head:
        r += 1
    first = tuple(a[1:] for a in order[:r] if len(a) > 1)
    return first, order[r:]


@dataclass(eq=False)
class LoopVertex:
    index: str
    sparse: bool = False
    level: int | None = None
    children: list = field(default_factory=list)
    term_list: list | None = field(default=None, repr=False)

    def terms(self):
        if self.term_list is not None:
            return self.term_list
        out = []
        for c in self.children:
            out.extend(c.terms() if isinstance(c, LoopVertex) else [c])
        return out


@dataclass
class FusedLoopForest:
    path: ContractionPath
    order: tuple
    roots: list
    buffers: dict
    ancestors: dict

    def vertices(self):
        stack = list(reversed(self.roots))
        while stack:
            v = stack.pop()
            if isinstance(v, LoopVertex):
                yield v
                stack.extend(reversed(v.children))

    def leaf_paths(self):
        """Root-to-leaf index sequence of each term."""
        return {t: tuple(v.index for v in anc) for t, anc in self.ancestors.items()}

    def root_index(self):
        first = self.roots[0]
        return first.index if isinstance(first, LoopVertex) else None

    def common_ancestors(self, a, b):
        out = []
        for x, y in zip(self.ancestors[a], self.ancestors[b]):
            if x is not y:
                break
            out.append(x)
        return out

    def is_fully_fused(self):
        def ok(children):
            prev = None
            for c in children:
                idx = c.index if isinstance(c, LoopVertex) else None
                if idx is not None and idx == prev:
                    return False
                prev = idx
            return True

        return ok(self.roots) and all(ok(v.children) for v in self.vertices())


def _group(items):
    """Group consecutive ``(term, order)`` items by leading index."""
    k = 0
    while k < len(items):
        pos, rem = items[k]
        if not rem:
            yield None, [items[k]]
            k += 1
            continue
        j = k + 1
        while j < len(items) and items[j][1] and items[j][1][0] == rem[0]:
            j += 1
        yield rem[0], items[k:j]
        k = j


def build_forest(path: ContractionPath, order, validated=False) -> FusedLoopForest:
    if not validated:
        order = validate_order(path, order)
    sparse_of = {k: set(t.sparse) for k, t in enumerate(path.terms)}
    ancestors = {}

    def build(items, anc):
        nodes = []
        for index, group in _group(items):
            if index is None:
                pos = group[0][0]
                ancestors[pos] = list(anc)
                nodes.append(pos)
                continue
            v = LoopVertex(index, term_list=[p for p, _ in group])
            v.children = build([(p, r[1:]) for p, r in group], anc + [v])
            v.sparse = any(index in sparse_of[t] for t in v.term_list)
            if v.sparse:
                v.level = path.csf_order.index(index)
            nodes.append(v)
        return nodes

    roots = build(list(enumerate(order)), [])
    forest = FusedLoopForest(path, order, roots, {}, ancestors)
    for p, c in path.edges():
        common = {v.index for v in forest.common_ancestors(p, c)}
        forest.buffers[(p, c)] = tuple(i for i in order[p] if i in path.terms[p].out_indices and i not in common)
    return forest


def buffer_dims(forest: FusedLoopForest):
    """Map ``(producer, consumer) -> (order, element count)`` per buffer."""
    dims = forest.path.spec.index_dims
    return {e: (len(idx), prod(dims[i] for i in idx)) for e, idx in forest.buffers.items()}


def term_orders(term):
    """All admissible index orders of one term (sparse indices kept in CSF order)."""
    idx = sorted(term.indices)
    for perm in itertools.permutations(idx):
        if admissible(term.indices, term.sparse, perm):
            yield perm


def count_orders(path: ContractionPath):
    return prod(factorial(t.width) // factorial(len(t.sparse)) for t in path.terms)


def enumerate_orders(path: ContractionPath, csf_order=None):
    """Lazily yield every admissible loop order of ``path``."""
    if csf_order is not None and tuple(csf_order) != path.csf_order:
        path = _rebind(path, tuple(csf_order))
    per_term = [list(term_orders(t)) for t in path.terms]
    return itertools.product(*per_term)


def _rebind(path, csf_order):
    from .paths import build_path

    n = len(path.spec.inputs)
    return build_path(path.spec, [(t.lhs, t.rhs) for t in path.terms], csf_order) if n else path


def independent_dense_chain(forest: FusedLoopForest, term):
    """Trailing loop indices owned only by ``term`` and all dense.

    These are the loops that can be handed to a dense micro-kernel.
    """
    chain = []
    for v in reversed(forest.ancestors[term]):
        if v.sparse or len(v.terms()) != 1:
            break
        chain.append(v.index)
    return tuple(reversed(chain))


def render(forest: FusedLoopForest, hooks=None) -> str:
    """Pseudo-code rendering of the fused loop nest.

    ``hooks`` optionally maps term position to a short annotation appended
    to that term's statement.
    """
    path = forest.path
    spec = path.spec
    csf = path.csf_order
    sp = spec.sparse
    inter = intermediate_names(path)
    n_in = len(spec.inputs)
    buffer_of = {p: forest.buffers[(p, c)] for p, c in path.edges()}
    resets = reset_points(forest)

    def operand(tid, indices, is_out, producer=None):
        if tid < n_in:
            name = spec.inputs[tid].name
            return f"{name}[{','.join(spec.inputs[tid].indices)}]"
        if tid == n_in + path.n_terms - 1:
            return f"{spec.output.name}[{','.join(spec.output.indices)}]"
        name = inter[tid - n_in]
        idx = buffer_of[tid - n_in]
        return f"{name}[{','.join(idx)}]" if idx else name

    def reset_line(p):
        name = inter[path.terms[p].out - n_in]
        return f"{name} = 0" if not buffer_of[p] else f"{name}[:] = 0"

    lines = [f"{sp.name}_csf = CSF({sp.name}[{','.join(csf)}])"]
    for p in resets.get(None, {}).get(-1, []):
        lines.append(reset_line(p))

    def emit(nodes, depth, parent):
        pad = "  " * depth
        for k, node in enumerate(nodes):
            for p in resets.get(id(parent), {}).get(k, []):
                lines.append(pad + reset_line(p))
            if isinstance(node, LoopVertex):
                if node.sparse:
                    lvl = node.level
                    src = f"{sp.name}_csf" if lvl == 0 else f"{sp.name}_" + "".join(csf[:lvl])
                    cur = f"{sp.name}_" + "".join(csf[: lvl + 1])
                    lines.append(f"{pad}for ({node.index}, {cur}) in {src}:")
                else:
                    lines.append(f"{pad}for {node.index} in range(n_{node.index}):")
                emit(node.children, depth + 1, node)
            else:
                t = path.terms[node]
                stmt = (
                    f"{operand(t.out, t.out_indices, True)} += "
                    f"{operand(t.lhs, t.lhs_indices, False)} * {operand(t.rhs, t.rhs_indices, False)}"
                )
                if hooks and hooks.get(node):
                    stmt += f"  # {hooks[node]}"
                lines.append(pad + stmt)

    emit(forest.roots, 0, None)
    return "\n".join(lines) + "\n"


def reset_points(forest: FusedLoopForest):
    """Where each intermediate buffer must be zeroed.

    Returns ``{id(vertex) or None: {child_position: [producer terms]}}``: the
    buffer of producer ``p`` is reset right before entering the child of the
    deepest common ancestor (``None`` for the forest top level) that contains
    ``p``. Buffers whose producer and consumer share no loop are reset once
    before execution; those are reported under child position ``-1``.
    """
    out = {}
    for p, c in forest.path.edges():
        common = forest.common_ancestors(p, c)
        parent = common[-1] if common else None
        siblings = parent.children if parent is not None else forest.roots
        anc_p = forest.ancestors[p]
        node = anc_p[len(common)] if len(anc_p) > len(common) else p
        k = next(i for i, s in enumerate(siblings) if s is node or (isinstance(node, int) and s == node))
        key = id(parent) if parent is not None else None
        if parent is None:
            k = -1
        out.setdefault(key, {}).setdefault(k, []).append(p)
    return out
