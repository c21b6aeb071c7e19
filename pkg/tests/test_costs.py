from math import prod

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spttn.costs import (
    CacheMisses,
    CostEvaluator,
    DenseLoops,
    MaxBufferDim,
    MaxBufferSize,
    all_models,
    cost_of,
    eval_cost,
    parse_cost_model,
)
from spttn.kernel import parse_kernel
from spttn.loopnest import build_forest, enumerate_orders
from spttn.paths import enumerate_paths, parse_path

from conftest import kernel
from oracles import simulate_cache_misses

VECTOR = (("i", "j", "k", "s"), ("i", "j", "s", "r"))
SCALAR = (("i", "j", "s", "k"), ("i", "j", "s", "r"))
TTMC4 = (("i", "j", "k", "l", "t"), ("i", "j", "k", "s", "t"), ("i", "j", "r", "s", "t"))


def tv_u(**dims):
    return parse_path(kernel("ttmc", **dims), "(T*V)*U")


def test_max_buffer_dim_ttmc():
    p = tv_u()
    assert eval_cost(MaxBufferDim(), p, VECTOR) == 1
    assert eval_cost(MaxBufferDim(), p, SCALAR) == 0


def test_max_buffer_dim_unfusable_path():
    p = parse_path(kernel("ttmc"), "(U*V)*T")
    sparse_first = [o for o in enumerate_orders(p) if o[1][0] == "i"]
    assert {eval_cost(MaxBufferDim(), p, o) for o in sparse_first} == {4}
    # a dense loop hoisted above the sparse ones lets the two terms fuse
    assert eval_cost(MaxBufferDim(), p, (("r", "j", "k", "s"), ("r", "i", "j", "k", "s"))) == 3


def test_max_buffer_dim_single_term():
    spec = parse_kernel("T[i,j]*U[j,r]->S[i,r]", dict(i=2, j=2, r=2))
    (p,) = enumerate_paths(spec)
    assert eval_cost(MaxBufferDim(), p, (("i", "j", "r"),)) == 0


def test_max_buffer_dim_ttmc4():
    p = parse_path(kernel("ttmc4"), "((T*W)*V)*U")
    assert eval_cost(MaxBufferDim(), p, TTMC4) == 2


def test_max_buffer_size():
    p = tv_u(s=32)
    m = MaxBufferSize(p.spec.index_dims)
    assert eval_cost(m, p, VECTOR) == 32
    assert eval_cost(m, p, SCALAR) == 1
    q = parse_path(kernel("ttmc4", s=8, t=4), "((T*W)*V)*U")
    assert eval_cost(MaxBufferSize(q.spec.index_dims), q, TTMC4) == 32


def test_cache_single_loop():
    spec = parse_kernel("T[i]*U[i]->S[]", dict(i=7))
    (p,) = enumerate_paths(spec)
    assert eval_cost(CacheMisses(0, spec.index_dims), p, (("i",),)) == 2 * 7


def test_cache_nested_loops():
    # tau(i) = 1 (only T carries i), tau(j) = 2 (T and U, one index left each)
    spec = parse_kernel("T[i,j]*U[j]->S[]", dict(i=4, j=3))
    (p,) = enumerate_paths(spec)
    m = CacheMisses(0, spec.index_dims)
    assert eval_cost(m, p, (("i", "j"),)) == 4 * (1 + 3 * 2) == 28


@pytest.mark.parametrize("name", ["mttkrp", "ttmc", "tttp"])
def test_cache_everything_resident(name):
    spec = kernel(name)
    m = CacheMisses(5, spec.index_dims)
    for p in enumerate_paths(spec):
        assert eval_cost(m, p, next(iter(enumerate_orders(p)))) == 0


def test_dense_loops_metric():
    p = tv_u()
    m = DenseLoops(2, p.spec.index_dims)
    s = p.spec.dim("s")
    # term 1 offloads (s), term 2 offloads (s, r)
    assert eval_cost(m, p, VECTOR) == (0, -3, s)
    # term 1 ends in the sparse k loop and offloads nothing
    assert eval_cost(m, p, SCALAR) == (0, -1, 1)
    assert eval_cost(m, p, VECTOR) < eval_cost(m, p, SCALAR)
    assert eval_cost(DenseLoops(0, p.spec.index_dims), p, VECTOR)[0] == 1
    assert eval_cost(DenseLoops(0, p.spec.index_dims), p, SCALAR)[0] == 0


@pytest.mark.parametrize(
    "text,cls",
    [("max-buf-dim", MaxBufferDim), ("max-buf-size", MaxBufferSize), ("cache:D=2", CacheMisses), ("dense-loops:bound=1", DenseLoops)],
)
def test_parse_cost_model(text, cls):
    assert isinstance(parse_cost_model(text, {}), cls)


@pytest.mark.parametrize("text", ["", "cache", "cache:D=-1", "dense-loops:b=2", "min-flops"])
def test_parse_cost_model_errors(text):
    with pytest.raises(ValueError):
        parse_cost_model(text, {})


@pytest.mark.parametrize("name", ["mttkrp", "ttmc"])
@pytest.mark.parametrize("D", [0, 1, 2])
def test_cache_model_matches_simulation(name, D):
    spec = kernel(name, i=3, j=4, k=5, a=2, r=2, s=3)
    m = CacheMisses(D, spec.index_dims)
    for p in enumerate_paths(spec):
        ev = CostEvaluator(m, p)
        for o in enumerate_orders(p):
            assert ev(o) == simulate_cache_misses(build_forest(p, o), D)


@pytest.mark.parametrize("name", ["mttkrp", "ttmc", "tttp"])
def test_peeling_matches_forest(name):
    spec = kernel(name, i=3, j=2, k=4, a=2, r=3, s=2)
    for m in all_models(spec.index_dims):
        for p in enumerate_paths(spec):
            ev = CostEvaluator(m, p)
            for k, o in enumerate(enumerate_orders(p)):
                if k % 7:
                    continue
                direct = cost_of(m, p, o)
                assert eval_cost(m, p, o) == direct == ev(o)


numbers = st.integers(0, 50)
triples = st.tuples(st.integers(0, 1), st.integers(-10, 0), st.integers(0, 100))


def _model_values():
    dims = dict(i=3, j=2, k=4, r=3, s=2)
    return [
        (MaxBufferDim(), numbers),
        (MaxBufferSize(dims), numbers),
        (CacheMisses(1, dims), numbers),
        (DenseLoops(1, dims), triples),
    ]


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_combine_is_associative_and_monotone(data):
    for m, values in _model_values():
        a, b, c = data.draw(values), data.draw(values), data.draw(values)
        assert m.combine(m.combine(a, b), c) == m.combine(a, m.combine(b, c))
        assert m.combine(a, m.identity) == a
        lo, hi = sorted((b, c))
        assert m.combine(a, lo) <= m.combine(a, hi)
        assert m.combine(lo, a) <= m.combine(hi, a)


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_phi_is_monotone(data):
    p = tv_u()
    for m, values in _model_values():
        lo, hi = sorted((data.draw(values), data.draw(values)))
        for terms, removed, q in [((0, 1), frozenset(), "i"), ((0,), frozenset("ij"), "k"), ((1,), frozenset("ijs"), "r")]:
            assert m.phi(p, terms, removed, q, lo) <= m.phi(p, terms, removed, q, hi)


def test_bad_parameters():
    with pytest.raises(ValueError):
        CacheMisses(-1, {})
    with pytest.raises(ValueError):
        DenseLoops(-1, {})


def test_buffer_size_is_product_of_dims():
    p = tv_u(s=5)
    for o in enumerate_orders(p):
        f = build_forest(p, o)
        expected = max(prod(p.spec.dim(i) for i in b) for b in f.buffers.values())
        assert eval_cost(MaxBufferSize(p.spec.index_dims), p, o) == expected
