"""Tree-separable cost models over fully-fused loop nest forests.

A model supplies ``phi(path, terms, removed, q, x)``, the cost of a loop over
``q`` whose body (the loops over ``terms`` with indices ``removed`` already
iterated) costs ``x``, and an associative ``combine``. Costs of buffers
passed between sibling subtrees are charged by ``cut`` at the point where a
forest splits into its first tree and the rest; that is where the
buffer's index set is fixed.
"""

from __future__ import annotations

from math import prod

from .loopnest import LoopVertex, build_forest, validate_order


class CostModel:
    name = "abstract"
    identity = 0

    def combine(self, a, b):
        raise NotImplementedError

    def phi(self, path, terms, removed, q, x):
        return x

    def cut(self, path, first, rest, removed):
        return self.identity

    def leaf(self, path, term, removed):
        return self.identity

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


def crossing_buffers(path, first, rest, removed):
    """Index sets of buffers produced in ``first`` and consumed in ``rest``."""
    rest = set(rest)
    out = []
    for p in first:
        c = path.consumer.get(p)
        if c is not None and c in rest:
            out.append(frozenset(path.terms[p].out_indices) - removed)
    return out


class MaxBufferDim(CostModel):
    name = "max-buf-dim"

    def combine(self, a, b):
        return max(a, b)

    def cut(self, path, first, rest, removed):
        return max((len(b) for b in crossing_buffers(path, first, rest, removed)), default=0)


class MaxBufferSize(CostModel):
    name = "max-buf-size"

    def __init__(self, dims):
        self.dims = dict(dims)

    def combine(self, a, b):
        return max(a, b)

    def cut(self, path, first, rest, removed):
        return max(
            (prod(self.dims[i] for i in b) for b in crossing_buffers(path, first, rest, removed)),
            default=0,
        )


class CacheMisses(CostModel):
    """Loads of operands that still have more than ``D`` indices to iterate.

    Every operand slot of every term below a loop over ``q`` that is indexed
    by ``q`` and has more than ``D`` indices left (``q`` included) costs one
    miss per iteration of that loop.
    """

    def __init__(self, D, dims):
        if D < 0:
            raise ValueError("D must be >= 0")
        self.D = D
        self.dims = dict(dims)
        self.name = f"cache:D={D}"

    def combine(self, a, b):
        return a + b

    def tau(self, path, terms, removed, q):
        n = 0
        for t in terms:
            for v in path.terms[t].operands:
                if q in v and len(set(v) - removed) > self.D:
                    n += 1
        return n

    def phi(self, path, terms, removed, q, x):
        return self.dims[q] * (self.tau(path, terms, removed, q) + x)


class DenseLoops(CostModel):
    """Composite metric favouring loops that can be offloaded to dense kernels.

    Cost is ``(buffers over the dimension bound, -independent dense loops,
    largest buffer size)`` compared lexicographically. The first entry is 0
    exactly when every buffer is within the bound; it is a count rather
    than a flag so that ``combine`` stays monotone under lexicographic order. An independent dense
    loop is a dense loop whose body contains a single term and only dense
    loops.
    """

    identity = (0, 0, 0)

    def __init__(self, bound, dims):
        if bound < 0:
            raise ValueError("bound must be >= 0")
        self.bound = bound
        self.dims = dict(dims)
        self.name = f"dense-loops:bound={bound}"

    def combine(self, a, b):
        return (a[0] + b[0], a[1] + b[1], max(a[2], b[2]))

    def phi(self, path, terms, removed, q, x):
        if len(terms) == 1:
            t = path.terms[terms[0]]
            if not (t.indices - removed) & set(t.sparse):
                return (x[0], x[1] - 1, x[2])
        return x

    def cut(self, path, first, rest, removed):
        bufs = crossing_buffers(path, first, rest, removed)
        over = sum(1 for b in bufs if len(b) > self.bound)
        size = max((prod(self.dims[i] for i in b) for b in bufs), default=0)
        return (over, 0, size)


def parse_cost_model(text, dims):
    """Model from its CLI name: ``max-buf-dim``, ``max-buf-size``,
    ``cache:D=<d>`` or ``dense-loops:bound=<b>``."""
    text = text.strip()
    if text == "max-buf-dim":
        return MaxBufferDim()
    if text == "max-buf-size":
        return MaxBufferSize(dims)
    name, _, arg = text.partition(":")
    key, _, val = arg.partition("=")
    if name == "cache" and key == "D" and val.isdigit():
        return CacheMisses(int(val), dims)
    if name == "dense-loops" and key == "bound" and val.isdigit():
        return DenseLoops(int(val), dims)
    raise ValueError(f"unknown cost model {text!r}")


def all_models(dims, D=1, bound=2):
    return [MaxBufferDim(), MaxBufferSize(dims), CacheMisses(D, dims), DenseLoops(bound, dims)]


def eval_cost(model: CostModel, path, order):
    """Cost of ``order`` by recursive peeling, without building the forest."""
    order = validate_order(path, order)
    return _eval_items(model, path, tuple(enumerate(order)), frozenset())


class CostEvaluator:
    """Evaluates many orders of one path, caching sub-forest costs.

    Orders that share a peeled sub-forest (same terms, same remaining
    indices, same enclosing loops) reuse its cost.
    """

    def __init__(self, model: CostModel, path):
        self.model = model
        self.path = path
        self._cache = {}

    def __call__(self, order):
        return self._items(tuple(enumerate(order)), frozenset())

    def _items(self, items, removed):
        key = (items, removed)
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = _eval_items(self.model, self.path, items, removed, self._items)
        return hit


def _eval_items(model, path, items, removed, recurse=None):
    recurse = recurse or (lambda it, rem: _eval_items(model, path, it, rem))
    cost = model.identity
    k = 0
    positions = [p for p, _ in items]
    while k < len(items):
        pos, rem = items[k]
        if not rem:
            j = k + 1
            tree = model.leaf(path, pos, removed)
        else:
            q = rem[0]
            j = k + 1
            while j < len(items) and items[j][1] and items[j][1][0] == q:
                j += 1
            inner = recurse(tuple((p, r[1:]) for p, r in items[k:j]), removed | {q})
            tree = model.phi(path, tuple(positions[k:j]), removed, q, inner)
        cut = model.cut(path, positions[k:j], positions[j:], removed)
        cost = model.combine(cost, model.combine(tree, cut))
        k = j
    return cost


def forest_cost(model: CostModel, forest):
    """Cost evaluated bottom-up on a materialized forest."""
    path = forest.path

    def terms_of(node):
        return node.terms() if isinstance(node, LoopVertex) else [node]

    def children_cost(children, removed):
        total = model.identity
        for k, child in enumerate(children):
            if isinstance(child, LoopVertex):
                inner = children_cost(child.children, removed | {child.index})
                c = model.phi(path, tuple(terms_of(child)), removed, child.index, inner)
            else:
                c = model.leaf(path, child, removed)
            later = [t for s in children[k + 1 :] for t in terms_of(s)]
            c = model.combine(c, model.cut(path, terms_of(child), later, removed))
            total = model.combine(total, c)
        return total

    return children_cost(forest.roots, frozenset())


def cost_of(model, path, order):
    return forest_cost(model, build_forest(path, order))
