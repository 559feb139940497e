import numpy as np
import pytest
from hypothesis import given, strategies as st

from shipprompt.pnm import quantize_unit, read_pnm, write_pnm


def test_gray_and_color_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    gray = rng.integers(0, 256, size=(5, 7), dtype=np.uint8)
    rgb = rng.integers(0, 256, size=(4, 3, 3), dtype=np.uint8)
    write_pnm(tmp_path / "g.pgm", gray)
    write_pnm(tmp_path / "c.ppm", rgb)
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5\n7 5\n255\n")
    np.testing.assert_array_equal(read_pnm(tmp_path / "g.pgm"), gray)
    np.testing.assert_array_equal(read_pnm(tmp_path / "c.ppm"), rgb)


def test_quantization_rounds_half_up():
    assert quantize_unit(np.array([0.0, 1.0, 0.5 / 255, 1.5 / 255, 0.49 / 255])).tolist() == [0, 255, 1, 2, 0]


@given(st.floats(0.0, 1.0))
def test_quantization_stays_in_byte_range(v):
    q = int(quantize_unit(np.array([v]))[0])
    assert 0 <= q <= 255
    assert abs(q / 255 - v) <= 0.5 / 255 + 1e-12


def test_unknown_magic_raises(tmp_path):
    (tmp_path / "x.pnm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ValueError):
        read_pnm(tmp_path / "x.pnm")
