"""Raster types and pixel primitives shared by every stage.

Images are 2-D ``float64`` numpy arrays indexed ``[row, col]`` with
intensities in ``[0, 1]``; masks are boolean arrays of the same shape.
Nothing here mutates its inputs.
"""
from __future__ import annotations

import enum
import math

import numpy as np
from scipy import ndimage


class PatternClass(str, enum.Enum):
    PLEURAL = "pleural"
    ALINE = "aline"
    BLINE = "bline"


def as_image(data, copy: bool = False) -> np.ndarray:
    """Validate ``data`` as an image and return it as float64."""
    img = np.array(data, dtype=np.float64, copy=copy)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must be a non-empty 2-D array, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite intensities")
    return img


def as_mask(data) -> np.ndarray:
    mask = np.asarray(data, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    return mask


def clamp01(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian truncated at ``ceil(3 sigma)`` and renormalized to unit mass."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float, region: tuple[int, int] | None = None) -> np.ndarray:
    """Blur the rows in ``region = (start, stop)`` with a separable Gaussian.

    The convolution sees the whole image with clamp-to-edge borders; only
    the rows inside the region are replaced. ``region=None`` blurs all rows.
    """
    img = as_image(img)
    h = img.shape[0]
    start, stop = (0, h) if region is None else region
    start, stop = max(int(start), 0), min(int(stop), h)
    if stop <= start:
        raise ValueError("empty blur region")
    k = gaussian_kernel(sigma)
    blurred = ndimage.convolve1d(img, k, axis=0, mode="nearest")
    blurred = ndimage.convolve1d(blurred, k, axis=1, mode="nearest")
    out = img.copy()
    out[start:stop] = np.clip(blurred[start:stop], 0.0, 1.0)
    return out


def crop_rows(img, top_row: int, bottom_row: int) -> tuple[np.ndarray, int]:
    """Return rows ``[top_row, bottom_row)`` and the row offset into the parent."""
    img = np.asarray(img)
    h = img.shape[0]
    if not (0 <= top_row < bottom_row <= h):
        raise ValueError(f"invalid crop rows [{top_row}, {bottom_row}) for height {h}")
    return img[top_row:bottom_row].copy(), int(top_row)


def dilate(mask, radius: int) -> np.ndarray:
    """Grow ``mask`` to every pixel within Chebyshev distance ``radius``."""
    mask = as_mask(mask)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0 or not mask.any():
        return mask.copy()
    structure = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(mask, structure=structure)
