import pytest

from spttn.errors import KernelParseError, KernelValidationError
from spttn.kernel import (
    DENSE_INPUT,
    KERNELS,
    OUTPUT,
    SPARSE_INPUT,
    check_tensor_shapes,
    infer_dims,
    kernel_indices,
    parse_kernel,
)

TTMC_DIMS = dict(i=4, j=5, k=6, r=2, s=3)


def test_parse_ttmc():
    spec = parse_kernel(KERNELS["ttmc"], TTMC_DIMS)
    assert [t.name for t in spec.tensors] == ["T", "U", "V", "S"]
    assert [t.kind for t in spec.tensors] == [SPARSE_INPUT, DENSE_INPUT, DENSE_INPUT, OUTPUT]
    assert spec.sparse.indices == ("i", "j", "k")
    assert spec.output.indices == ("i", "r", "s")
    assert spec.shape_of(spec.tensor("V")) == (6, 3)
    assert not spec.output_sparse


def test_parse_sparse_output():
    spec = parse_kernel(KERNELS["tttp"], dict(i=2, j=2, k=2, r=3))
    assert spec.output_sparse
    assert spec.canonical().endswith("@sparse_out")


def test_whitespace_is_ignored():
    a = parse_kernel("T[i, j] * U[j, r] -> S[i, r]", dict(i=2, j=3, r=4))
    b = parse_kernel("T[i,j]*U[j,r]->S[i,r]", dict(i=2, j=3, r=4))
    assert a == b


@pytest.mark.parametrize("name", sorted(KERNELS))
def test_canonical_round_trip(name):
    dims = {i: 2 for i in "ijklrstabc"}
    spec = parse_kernel(KERNELS[name], dims)
    assert parse_kernel(spec.canonical(), dims) == spec


@pytest.mark.parametrize(
    "text",
    [
        "T[i,j]*U[j,r]",
        "T[i,j]*U[j,r]->S[i,r]->Q[i]",
        "T[i,j*U[j,r]->S[i,r]",
        "T[i,i]*U[i,r]->S[i,r]",
        "T[i,j]*U[j,r]->S[i,r] @dense",
        "->S[i]",
        "T[1,j]*U[j,r]->S[i,r]",
    ],
)
def test_parse_errors(text):
    with pytest.raises(KernelParseError):
        parse_kernel(text, dict(i=2, j=2, r=2))


@pytest.mark.parametrize(
    "text,dims",
    [
        ("T[i,j]*U[j,r]->S[i,q]", dict(i=2, j=2, r=2, q=2)),
        ("T[i,j]*U[j,r]->S[i,r]", dict(i=2, j=2)),
        ("T[i,j]*U[j,r]->S[i,r]", dict(i=2, j=0, r=2)),
        ("T[i,j]*T[j,r]->S[i,r]", dict(i=2, j=2, r=2)),
        ("T[i,j]->S[i]", dict(i=2, j=2)),
        ("T[i,j]*U[j,r]->S[i,r] @sparse_out", dict(i=2, j=2, r=2)),
    ],
)
def test_validation_errors(text, dims):
    with pytest.raises(KernelValidationError):
        parse_kernel(text, dims)


def test_errors_share_a_base():
    from spttn.errors import SpttnError

    assert issubclass(KernelParseError, SpttnError)
    assert issubclass(KernelValidationError, SpttnError)


def test_shape_mismatch():
    spec = parse_kernel(KERNELS["mttkrp"], dict(i=2, j=3, k=4, a=5))
    check_tensor_shapes(spec, {"T": (2, 3, 4), "B": (3, 5)})
    with pytest.raises(KernelValidationError):
        check_tensor_shapes(spec, {"T": (2, 3, 4), "B": (4, 5)})
    with pytest.raises(KernelValidationError):
        check_tensor_shapes(spec, {"B": (3, 5, 1)})


def test_infer_dims_from_shapes():
    dims = infer_dims(KERNELS["mttkrp"], {"T": (2, 3, 4), "B": (3, 5)})
    assert dims == dict(i=2, j=3, k=4, a=5)
    with pytest.raises(KernelValidationError):
        infer_dims(KERNELS["mttkrp"], {"T": (2, 3, 4), "C": (5, 5)}, dict(k=4, a=6))


@pytest.mark.parametrize(
    "name,all_,contracted",
    [
        ("mttkrp", "ijka", "jk"),
        ("ttmc", "ijkrs", "jk"),
        ("tttp", "ijkr", "r"),
    ],
)
def test_kernel_indices(name, all_, contracted):
    spec = parse_kernel(KERNELS[name], {i: 2 for i in all_})
    assert kernel_indices(spec) == (frozenset(all_), frozenset(contracted))


def test_spmm_is_a_kernel():
    spec = parse_kernel("T[i,j]*U[j,r]->S[i,r]", dict(i=3, j=4, r=2))
    assert kernel_indices(spec) == (frozenset("ijr"), frozenset("j"))
    assert spec.size_of(("i", "r")) == 6
