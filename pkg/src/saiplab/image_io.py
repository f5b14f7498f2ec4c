"""
Binary PGM (P5, 8-bit) reading and writing. Pixel values in ``[0, 1]`` map
linearly to ``0..255``; values outside the range are clipped on write.
"""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from saiplab.exceptions import DataSourceError
from saiplab.numerics import Signal

PGM_MAGIC = b"P5"


def to_bytes(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: Union[str, Path], image: Union[Signal, np.ndarray]) -> None:
    image = image.as_image() if isinstance(image, Signal) else np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DataSourceError(f"PGM images must be 2D. Provided shape {image.shape}.")
    Image.fromarray(to_bytes(image)).save(path, format="PPM")


def read_pgm(path: Union[str, Path]) -> Signal:
    """
    :raises DataSourceError: when the file is missing, not an 8-bit P5 image or truncated
    """
    try:
        with open(path, "rb") as f:
            magic = f.read(len(PGM_MAGIC))
    except OSError as e:
        raise DataSourceError(f"Could not read PGM '{path}': {e}") from None
    if magic != PGM_MAGIC:
        raise DataSourceError(f"'{path}' is not a binary (P5) PGM file.")
    try:
        image = Image.open(path)
    except OSError as e:
        raise DataSourceError(f"'{path}' is not a binary (P5) PGM file: {e}") from None
    with image:
        if image.mode != "L":
            raise DataSourceError(
                f"Only 8-bit PGM files are supported. '{path}' decodes to mode {image.mode}."
            )
        width, height = image.size
        try:
            image.load()
        except OSError as e:
            raise DataSourceError(
                f"'{path}' is shorter than its header declares ({width}x{height}): {e}"
            ) from None
        pixels = np.asarray(image, dtype=np.float64)
    return Signal.from_image(pixels / 255.0)
