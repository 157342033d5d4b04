import numpy as np
import pytest

from patchnet import pnm
from patchnet.errors import FormatError


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pixels = (rng.integers(0, 256, size=(3, 5, 7)) / 255).astype(np.float32)
    pnm.write_ppm(tmp_path / "a.ppm", pixels)
    back = pnm.read_ppm(tmp_path / "a.ppm")
    assert back.shape == (3, 5, 7) and back.dtype == np.float32
    np.testing.assert_array_equal(back, pixels)


def test_pgm_round_trip_with_comment(tmp_path):
    values = np.arange(20).reshape(4, 5)
    pnm.write_pgm(tmp_path / "a.pgm", values, comment="made by a test")
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n# made by a test\n5 4\n255\n")
    np.testing.assert_array_equal(pnm.read_pgm(tmp_path / "a.pgm"), values)


def test_header_with_comments_and_odd_spacing(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5 # first\n  2\t# width\n3 # height\n255\n" + bytes(range(6)))
    np.testing.assert_array_equal(pnm.read_pgm(path), [[0, 1], [2, 3], [4, 5]])


def test_sixteen_bit_maps(tmp_path):
    path = tmp_path / "w.pgm"
    data = np.array([[0, 300], [65535, 7]], dtype=">u2")
    path.write_bytes(b"P5\n2 2\n65535\n" + data.tobytes())
    out = pnm.read_pgm(path)
    assert out.dtype == np.uint16
    np.testing.assert_array_equal(out, data)
    ppm = tmp_path / "w.ppm"
    ppm.write_bytes(b"P6\n1 1\n65535\n" + np.array([65535, 0, 65535], dtype=">u2").tobytes())
    np.testing.assert_array_equal(pnm.read_ppm(ppm)[:, 0, 0], [1, 0, 1])


@pytest.mark.parametrize("raw", [
    b"P6\n2 2\n255\n" + bytes(12),   # wrong magic for a graymap
    b"P5\n2 2\n255\n" + bytes(3),    # truncated raster
    b"P5\n2 x\n255\n",               # bad field
    b"P5\n0 2\n255\n",               # empty image
    b"P5\n2 2",                      # truncated header
])
def test_bad_graymaps(tmp_path, raw):
    path = tmp_path / "bad.pgm"
    path.write_bytes(raw)
    with pytest.raises(FormatError):
        pnm.read_pgm(path)


def test_write_validation(tmp_path):
    with pytest.raises(FormatError):
        pnm.write_pgm(tmp_path / "x.pgm", np.array([[256]]))
    with pytest.raises(FormatError):
        pnm.write_ppm(tmp_path / "x.ppm", np.zeros((2, 2, 2)))
    with pytest.raises(FormatError):
        pnm.write_pgm(tmp_path / "x.pgm", np.zeros((2, 2)), comment="two\nlines")
