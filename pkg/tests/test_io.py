import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from irshape.errors import InvalidContour
from irshape.io import (
    atomic_write,
    contour_from_json,
    contour_to_json,
    decode_pbm,
    encode_pbm,
    read_mask,
    write_mask,
)


@settings(max_examples=50, deadline=None)
@given(arrays(bool, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_pbm_roundtrip(m):
    out = decode_pbm(encode_pbm(m))
    assert out.dtype == bool
    np.testing.assert_array_equal(out, m)


def test_pbm_header_comments():
    data = b"P4\n# made by hand\n3 2\n" + bytes([0b10100000, 0b01000000])
    np.testing.assert_array_equal(decode_pbm(data), [[1, 0, 1], [0, 1, 0]])


@pytest.mark.parametrize("data", [b"P1\n1 1\n1", b"P4\n2 2\n", b"P4\n2"])
def test_pbm_rejects_bad_input(data):
    with pytest.raises(ValueError):
        decode_pbm(data)


def test_read_png_and_pbm(tmp_path):
    m = np.zeros((6, 9), bool)
    m[1:4, 2:7] = True
    Image.fromarray(m.astype(np.uint8) * 255).save(tmp_path / "m.png")
    np.testing.assert_array_equal(read_mask(tmp_path / "m.png"), m)
    write_mask(tmp_path / "m.pbm", m)
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pbm"), m)


def test_contour_json_roundtrip():
    c = np.array([[0.0, 0.0], [4.25, 0.0], [1.0, 3.5]])
    np.testing.assert_array_equal(contour_from_json(contour_to_json(c)), c)
    with pytest.raises(InvalidContour):
        contour_from_json("[[0, 0], [1, 1]]")


def test_atomic_write_replaces_and_cleans_up(tmp_path):
    p = tmp_path / "out.txt"
    p.write_text("old")
    atomic_write(p, "new")
    assert p.read_text() == "new"
    assert sorted(x.name for x in tmp_path.iterdir()) == ["out.txt"]


def test_atomic_write_failure_keeps_original(tmp_path):
    p = tmp_path / "out.bin"
    p.write_bytes(b"keep")
    with pytest.raises(TypeError):
        atomic_write(p, 12345)
    assert p.read_bytes() == b"keep"
    assert sorted(x.name for x in tmp_path.iterdir()) == ["out.bin"]
