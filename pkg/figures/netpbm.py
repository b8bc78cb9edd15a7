"""
File that contains the portable graymap/pixmap reader and writer, built on Pillow.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from core.errors import ContractViolation

logger = logging.getLogger(__name__)


def to_pixels(values, lo: float = None, hi: float = None) -> np.ndarray:
    """
    Quantize real values to ``uint8`` on ``[lo, hi]`` (the value range by default).
    A constant array maps to mid-gray.
    """
    values = np.asarray(values, dtype=np.float64)
    lo = float(np.min(values)) if lo is None else lo
    hi = float(np.max(values)) if hi is None else hi
    if hi <= lo:
        return np.full(values.shape, 128, dtype=np.uint8)
    return np.round(255.0 * np.clip((values - lo) / (hi - lo), 0.0, 1.0)).astype(np.uint8)


def write_image(path: Union[str, Path], pixels: np.ndarray) -> Path:
    """
    Write ``(H, W)`` pixels as a graymap or ``(H, W, 3)`` pixels as a pixmap.

    :raises ContractViolation: for other shapes or dtypes.
    """
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim not in (2, 3) or (pixels.ndim == 3 and pixels.shape[2] != 3):
        raise ContractViolation(f"Expected uint8 pixels of shape (H, W) or (H, W, 3), got {pixels.dtype} "
                                f"{pixels.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path, format="PPM")
    logger.debug(f"Wrote {pixels.shape} image to {path}")
    return path


def read_image(path: Union[str, Path]) -> np.ndarray:
    """Pixels of a graymap ``(H, W)`` or pixmap ``(H, W, 3)``."""
    with Image.open(path) as image:
        return np.asarray(image).copy()
