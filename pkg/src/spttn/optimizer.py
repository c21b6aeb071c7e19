"""Search for cost-optimal loop orders of a contraction path."""

from __future__ import annotations

import heapq
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, NamedTuple

from .costs import CostEvaluator, CostModel
from .errors import BudgetExceededError
from .loopnest import count_orders, enumerate_orders
from .paths import ContractionPath, enumerate_paths, filter_min_depth

DEFAULT_BUDGET = 10**6


class Candidate(NamedTuple):
    cost: Any
    orders: tuple
    root: Any

    def key(self):
        return (self.cost, self.orders)


@dataclass
class SearchStats:
    subproblems: int = 0
    memo_hits: int = 0
    evaluated: int = 0
    wall_time: float = 0.0


@dataclass
class SearchResult:
    path: ContractionPath
    best: tuple
    second_best_diff_root: tuple | None
    stats: SearchStats = field(default_factory=SearchStats)

    @property
    def order(self):
        return self.best[0]

    @property
    def cost(self):
        return self.best[1]


def order_dp(path: ContractionPath, model: CostModel, memo=True) -> SearchResult:
    """Minimum-cost loop order by dynamic programming over subproblems.

    A subproblem is a contiguous run of terms ``u..v`` with a set of indices
    already iterated by enclosing loops. Each subproblem returns its best
    order and the best order whose forest starts with a different root
    loop; the latter is needed when the tree that follows a candidate loop
    would otherwise start with the same index and fuse into it.
    """
    start = time.perf_counter()
    terms = path.terms
    for k, t in enumerate(terms):
        if not t.indices:
            raise ValueError(f"term {k} has no indices")
    inds = [t.indices for t in terms]
    sparse = [t.sparse for t in terms]
    stats = SearchStats()
    cache = {}
    combine = model.combine

    def admits(t, q, removed):
        if q not in sparse[t]:
            return True
        for s in sparse[t]:
            if s not in removed:
                return s == q
        return False

    def solve(u, v, removed):
        key = (u, v, removed)
        if memo and key in cache:
            stats.memo_hits += 1
            return cache[key]
        stats.subproblems += 1
        if u > v:
            res = (Candidate(model.identity, (), None), None)
        elif not inds[u] - removed:
            sub, _ = solve(u + 1, v, removed)
            head = combine(model.leaf(path, u, removed), model.cut(path, (u,), range(u + 1, v + 1), removed))
            res = (Candidate(combine(head, sub.cost), ((),) + sub.orders, None), None)
        else:
            cands = []
            for q in sorted(inds[u] - removed):
                best_q = None
                s = u
                while s <= v and q in inds[s] and admits(s, q, removed):
                    x, _ = solve(u, s, removed | {q})
                    y_best, y_second = solve(s + 1, v, removed)
                    y = y_best if y_best.root != q else y_second
                    s += 1
                    if y is None:
                        continue
                    tree = tuple(range(u, s))
                    cost = combine(
                        combine(model.phi(path, tree, removed, q, x.cost), model.cut(path, tree, range(s, v + 1), removed)),
                        y.cost,
                    )
                    c = Candidate(cost, tuple((q,) + o for o in x.orders) + y.orders, q)
                    if best_q is None or c.key() < best_q.key():
                        best_q = c
                if best_q is not None:
                    cands.append(best_q)
            if not cands:
                raise RuntimeError(f"no admissible order for terms {u}..{v} with {sorted(removed)} removed")
            cands.sort(key=Candidate.key)
            res = (cands[0], cands[1] if len(cands) > 1 else None)
        if memo:
            cache[key] = res
        return res

    best, second = solve(0, len(terms) - 1, frozenset())
    stats.wall_time = time.perf_counter() - start
    return SearchResult(
        path,
        (best.orders, best.cost),
        (second.orders, second.cost) if second is not None else None,
        stats,
    )


def order_exhaustive(path: ContractionPath, model: CostModel, budget=DEFAULT_BUDGET) -> SearchResult:
    """Minimum-cost loop order by evaluating every admissible order."""
    start = time.perf_counter()
    total = count_orders(path)
    if total > budget:
        raise BudgetExceededError(f"{total} candidate orders exceed budget {budget}")
    stats = SearchStats()
    by_root = {}
    evaluate = CostEvaluator(model, path)
    for order in enumerate_orders(path):
        stats.evaluated += 1
        key = (evaluate(order), order)
        root = order[0][0]
        if root not in by_root or key < by_root[root]:
            by_root[root] = key
    ranked = sorted(by_root.values())
    stats.wall_time = time.perf_counter() - start
    best = ranked[0]
    second = ranked[1] if len(ranked) > 1 else None
    return SearchResult(path, (best[1], best[0]), (second[1], second[0]) if second else None, stats)


def candidate_paths(spec, use_depth_filter=True, csf_order=None):
    paths = enumerate_paths(spec, csf_order)
    return filter_min_depth(paths) if use_depth_filter else list(paths)


def _dp_task(args):
    path, model = args
    return order_dp(path, model)


def joint_search(spec, model: CostModel, use_depth_filter=True, csf_order=None, workers=1):
    """Best ``(path, SearchResult)`` over all candidate contraction paths.

    Ties go to the earliest path in enumeration order.
    """
    paths = candidate_paths(spec, use_depth_filter, csf_order)
    if workers > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_dp_task, [(p, model) for p in paths]))
    else:
        results = [order_dp(p, model) for p in paths]
    best = None
    for r in results:
        if best is None or r.cost < best.cost:
            best = r
    return best.path, best


def rank_candidates(spec, model: CostModel, top_k=5, use_depth_filter=True, csf_order=None, budget=DEFAULT_BUDGET):
    """The ``top_k`` cheapest ``(cost, path, order)`` candidates under ``model``.

    Paths whose order space fits in ``budget`` are scanned exhaustively;
    larger ones contribute their DP best and second-best orders.
    """
    heap = []
    seq = 0
    for p_idx, path in enumerate(candidate_paths(spec, use_depth_filter, csf_order)):
        if count_orders(path) <= budget:
            evaluate = CostEvaluator(model, path)
            items = ((evaluate(o), o) for o in enumerate_orders(path))
        else:
            r = order_dp(path, model)
            items = [(r.cost, r.order)]
            if r.second_best_diff_root:
                items.append((r.second_best_diff_root[1], r.second_best_diff_root[0]))
        for cost, order in items:
            heap.append((cost, p_idx, order, seq, path))
            seq += 1
    best = heapq.nsmallest(top_k, heap, key=lambda x: x[:3])
    return [(c, path, order) for c, _, order, _, path in best]
