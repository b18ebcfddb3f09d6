import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tvcert.io import FormatError, parse_fld, parse_pgm, read_fld, read_image, write_fld, write_pgm


@settings(max_examples=40, deadline=None)
@given(
    arrays(
        np.float64,
        st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 4)),
        elements=st.floats(allow_nan=False, allow_infinity=False, width=64),
    )
)
def test_fld_roundtrip_bit_exact(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("fld") / "a.fld"
    write_fld(path, a)
    back = read_fld(path)
    expected = a[..., 0] if a.shape[-1] == 1 else a
    assert back.tobytes() == np.ascontiguousarray(expected).tobytes()


def test_fld_header_layout(tmp_path):
    path = tmp_path / "x.fld"
    write_fld(path, np.arange(6.0).reshape(2, 3))
    raw = path.read_bytes()
    assert raw.startswith(b"FLD 2 3 1\n")
    assert np.frombuffer(raw[10:], "<f8").tolist() == [0, 1, 2, 3, 4, 5]


@pytest.mark.parametrize(
    "data, where, what",
    [
        (b"FLX 1 1 1\n" + bytes(8), "byte 0", "magic"),
        (b"FLD 1 x 1\n" + bytes(8), "byte 6", "W must be"),
        (b"FLD 1 1 0\n", "byte 8", "C must be"),
        (b"FLD 1 1\n" + bytes(8), "byte 7", "header needs"),
        (b"FLD 2 2 1\n" + bytes(8), "byte 18", "payload"),
        (b"FLD 1 1 1", "byte 9", "not terminated"),
    ],
)
def test_fld_errors_name_the_byte(data, where, what):
    with pytest.raises(FormatError) as exc:
        parse_fld(data, "f.fld")
    assert where in str(exc.value) and what in str(exc.value)


def test_pgm_8_and_16_bit(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, 0.25]])
    for maxval in (255, 65535):
        path = tmp_path / f"{maxval}.pgm"
        write_pgm(path, img, maxval)
        back = read_image(path)
        assert back.shape == (2, 2)
        assert np.allclose(back, img, atol=1.0 / maxval)


def test_pgm_comments_and_errors():
    data = b"P5\n# a comment\n2 1\n255\n\x00\xff"
    assert parse_pgm(data).tolist() == [[0.0, 1.0]]
    with pytest.raises(FormatError, match="byte 7: maxval"):
        parse_pgm(b"P5 2 1 100\n\x00\x01")
    with pytest.raises(FormatError, match="pixel bytes"):
        parse_pgm(b"P5 2 2 255\n\x00")
    with pytest.raises(FormatError, match="byte 0: expected magic"):
        parse_pgm(b"P2 1 1 255\n0")


def test_unknown_magic(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"GIF89a")
    with pytest.raises(FormatError, match="unknown magic"):
        read_image(path)
