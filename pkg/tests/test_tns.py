import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spttn.errors import TnsParseError
from spttn.tensor import DenseTensor
from spttn.tns import format_tns, gen_random, parse_tns, read_tns, shape_comment, write_tns

FIXTURE_TEXT = "1 1 1 1.0\n1 2 3 2.0\n2 1 1 3.0\n"


def test_parse_fixture():
    t = parse_tns(FIXTURE_TEXT, ("i", "j", "k"))
    assert t.shape == (2, 2, 3)
    assert t.entries() == [((0, 0, 0), 1.0), ((0, 1, 2), 2.0), ((1, 0, 0), 3.0)]


def test_comments_and_blank_lines():
    t = parse_tns("# a comment\n\n1 1 5.5\n   \n# another\n", shape=(2, 2))
    assert t.entries() == [((0, 0), 5.5)]


def test_comments_only_needs_shape():
    t = parse_tns("# nothing here\n", ("i", "j"), (3, 4))
    assert t.nnz == 0 and t.shape == (3, 4)
    with pytest.raises(TnsParseError):
        parse_tns("# nothing here\n")


def test_duplicates_are_summed():
    t = parse_tns("1 1 1.0\n2 2 4.0\n1 1 2.5\n")
    assert t.entries() == [((0, 0), 3.5), ((1, 1), 4.0)]


@pytest.mark.parametrize(
    "text,lineno",
    [
        ("1 1 1.0\n1 1\n", 2),
        ("1 1 1.0\n2 2 2.0\n1 2 3 4.0\n", 3),
        ("1 1 1.0\n0 1 2.0\n", 2),
        ("1 x 1.0\n", 1),
        ("# c\n1 1 abc\n", 2),
        ("5\n", 1),
    ],
)
def test_errors_carry_line_numbers(text, lineno):
    with pytest.raises(TnsParseError) as e:
        parse_tns(text)
    assert e.value.lineno == lineno
    assert f"line {lineno}" in str(e.value)


def test_out_of_shape():
    with pytest.raises(TnsParseError):
        parse_tns("3 1 1.0\n", shape=(2, 2))
    with pytest.raises(TnsParseError):
        parse_tns("1 1 1.0\n", ("i", "j", "k"))


def test_file_round_trip(tmp_path):
    t = gen_random((5, 4, 3), 0.3, seed=9, indices=("i", "j", "k"))
    f = tmp_path / "t.tns"
    write_tns(f, t)
    text = f.read_text()
    assert shape_comment(text) == (5, 4, 3)
    back = read_tns(f, ("i", "j", "k"), shape_comment(text))
    assert back == t
    assert format_tns(back) == text


def test_dense_output_written_in_full():
    d = DenseTensor(("i", "r"), np.array([[0.0, 1.5], [-2.0, 0.0]]))
    text = format_tns(d)
    assert text == "# shape 2 2\n1 1 0.0\n1 2 1.5\n2 1 -2.0\n2 2 0.0\n"
    back = parse_tns(text, ("i", "r"), shape_comment(text))
    np.testing.assert_array_equal(back.todense(), d.array)


def test_gen_random_counts():
    assert gen_random((8, 8, 8), 0.1, 42).nnz == 52
    assert gen_random((4, 4), 1.0, 0).nnz == 16
    with pytest.raises(ValueError):
        gen_random((4, 4), 0.0, 0)
    with pytest.raises(ValueError):
        gen_random((4, 0), 0.5, 0)


def test_gen_random_seeded():
    a = gen_random((8, 8, 8), 0.1, 42)
    assert a == gen_random((8, 8, 8), 0.1, 42)
    assert a != gen_random((8, 8, 8), 0.1, 43)
    assert (np.abs(a.values) <= 1).all()


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.integers(1, 5), min_size=1, max_size=4),
    st.floats(0.05, 1.0),
    st.integers(0, 2**32 - 1),
)
def test_text_round_trip_is_exact(dims, density, seed):
    t = gen_random(dims, density, seed)
    text = format_tns(t)
    back = parse_tns(text, t.indices, shape_comment(text))
    assert back == t
    np.testing.assert_array_equal(back.values, t.values)
