import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from pvmap.arrayio import (ArrayFormatError, decode_array, encode_array, read_array,
                           write_array, write_pgm)


def test_one_serializes_to_ieee_bytes():
    blob = encode_array(np.array([1.0]))
    assert blob.endswith(bytes([0, 0, 0, 0, 0, 0, 0xF0, 0x3F]))


def test_header_of_2x3():
    blob = encode_array(np.zeros((2, 3)))
    line, payload = blob.split(b"\n", 1)
    assert line.startswith(b"SSPM1 ")
    header = json.loads(line[6:])
    assert header == {"dtype": "f64", "shape": [2, 3], "order": "col-major"}
    assert line[6:] == b'{"dtype":"f64","shape":[2,3],"order":"col-major"}'
    assert len(payload) == 48


def test_column_major_payload():
    a = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    payload = encode_array(a).split(b"\n", 1)[1]
    np.testing.assert_array_equal(np.frombuffer(payload, "<f8"), [1, 4, 2, 5, 3, 6])


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, min_side=0, max_side=5),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_roundtrip_bit_exact(a):
    back = decode_array(encode_array(a))
    assert back.shape == a.shape
    assert back.tobytes() == np.ascontiguousarray(a).tobytes()


def test_file_roundtrip(tmp_path):
    a = np.random.default_rng(0).standard_normal((4, 7))
    write_array(tmp_path / "a.sspm", a)
    np.testing.assert_array_equal(read_array(tmp_path / "a.sspm"), a)


def test_rejects_bad_magic():
    with pytest.raises(ArrayFormatError):
        decode_array(b"SSPM2 {}\n")


@pytest.mark.parametrize("cut", [1, 8, 47])
def test_rejects_truncated_payload(cut):
    blob = encode_array(np.ones((2, 3)))
    with pytest.raises(ArrayFormatError):
        decode_array(blob[:-cut])


def test_rejects_extra_payload():
    with pytest.raises(ArrayFormatError):
        decode_array(encode_array(np.ones((2, 3))) + b"\0" * 8)


def test_rejects_bad_header():
    with pytest.raises(ArrayFormatError):
        decode_array(b'SSPM1 {"dtype":"f32","shape":[1],"order":"col-major"}\n' + b"\0" * 4)
    with pytest.raises(ArrayFormatError):
        decode_array(b"SSPM1 not json\n")


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        encode_array(np.array([np.nan]))


def test_pgm(tmp_path):
    write_pgm(tmp_path / "m.pgm", np.array([[0.0, 1.0], [2.0, 4.0]]))
    blob = (tmp_path / "m.pgm").read_bytes()
    assert blob.startswith(b"P5\n2 2\n255\n")
    assert list(blob[-4:]) == [0, 64, 128, 255]
