"""Dense micro-kernels for the innermost independent dense loops of a term.

Each kernel updates ``out`` in place. Vendor routines can be swapped in
through :func:`register`; the executor only looks kernels up by kind.
"""

from __future__ import annotations

import numpy as np

AXPY = "axpy"
GER = "ger"
DENSE = "dense"


def axpy(out, alpha, x):
    """``out += alpha * x`` for same-shaped ``out`` and ``x``."""
    out += alpha * x


def ger(out, x, y):
    """Rank-1 update ``out += outer(x, y)``."""
    out += np.multiply.outer(x, y)


def dense(out, subscripts, a, b):
    """Any remaining pairwise contraction, via ``einsum``."""
    out += np.einsum(subscripts, a, b)


_REGISTRY = {AXPY: axpy, GER: ger, DENSE: dense}


def register(kind, fn):
    """Replace the implementation used for ``kind``; returns the old one."""
    if kind not in _REGISTRY:
        raise KeyError(f"unknown micro-kernel kind {kind!r}")
    old = _REGISTRY[kind]
    _REGISTRY[kind] = fn
    return old


def get(kind):
    return _REGISTRY[kind]


def kinds():
    return tuple(_REGISTRY)
