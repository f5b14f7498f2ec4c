import numpy as np
import pytest

from saiplab.exceptions import DataSourceError
from saiplab.image_io import read_pgm, to_bytes, write_pgm
from saiplab.numerics import Signal


def test_write_and_read_pgm(tmp_path):
    image = np.arange(12, dtype=np.float64).reshape(3, 4) / 11.0
    path = tmp_path / "image.pgm"
    write_pgm(path, Signal.from_image(image))
    assert path.read_bytes().startswith(b"P5\n4 3\n255\n")
    loaded = read_pgm(path)
    assert loaded.shape == (3, 4)
    assert np.allclose(loaded.as_image(), image, atol=0.5 / 255)


def test_values_are_clipped():
    assert list(to_bytes(np.array([-0.5, 0.0, 0.5, 1.0, 2.0]))) == [0, 0, 128, 255, 255]


def test_header_comments(tmp_path):
    path = tmp_path / "commented.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([0, 255]))
    assert np.array_equal(read_pgm(path).as_image(), [[0.0, 1.0]])


@pytest.mark.parametrize(
    "content, match",
    [
        (b"P2\n2 1\n255\n0 255\n", "not a binary"),
        (b"P5\n2 1\n65535\n" + bytes(4), "8-bit"),
        (b"P5\n4 4\n255\n" + bytes(3), "declares"),
    ],
)
def test_malformed_pgm(tmp_path, content, match):
    path = tmp_path / "bad.pgm"
    path.write_bytes(content)
    with pytest.raises(DataSourceError, match=match):
        read_pgm(path)


def test_missing_pgm(tmp_path):
    with pytest.raises(DataSourceError):
        read_pgm(tmp_path / "missing.pgm")


def test_write_requires_2d(tmp_path):
    with pytest.raises(DataSourceError):
        write_pgm(tmp_path / "vector.pgm", np.zeros(4))
