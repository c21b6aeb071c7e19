import numpy as np
import pytest

from spttn.kernel import KERNELS, parse_kernel
from spttn.tensor import SparseTensorCOO
from spttn.tns import gen_random

SMALL_DIMS = dict(i=3, j=3, k=3, l=2, r=2, s=2, t=2, a=2, b=2, c=2)

# the 3-entry tensor used across examples, 0-based
FIXTURE_ENTRIES = {(0, 0, 0): 1.0, (0, 1, 2): 2.0, (1, 0, 0): 3.0}


def fixture_coo(indices=("i", "j", "k")):
    return SparseTensorCOO.from_entries(indices, (2, 2, 3), FIXTURE_ENTRIES)


def kernel(name, **dims):
    merged = dict(SMALL_DIMS)
    merged.update(dims)
    return parse_kernel(KERNELS[name], merged)


def random_inputs(spec, density=0.3, seed=0):
    ref = spec.sparse
    tensors = {ref.name: gen_random(spec.shape_of(ref), density, seed, ref.indices)}
    rng = np.random.default_rng(seed + 1)
    for t in spec.inputs[1:]:
        tensors[t.name] = rng.uniform(-1, 1, spec.shape_of(t))
    return tensors


def as_array(t):
    return t.todense() if hasattr(t, "todense") else t.array


@pytest.fixture
def ttmc():
    return kernel("ttmc")


@pytest.fixture
def mttkrp():
    return kernel("mttkrp")


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
