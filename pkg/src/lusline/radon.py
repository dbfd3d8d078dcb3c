"""Discrete Radon transform over angle windows, peak picking and line geometry.

Conventions: the origin sits at ``(x, y) = (W/2, H/2)`` in pixel coordinates
(pixel centers at integers, ``y`` pointing down).  A cell ``(theta, rho)``
integrates the line ``x_c cos(theta) + y_c sin(theta) = rho`` with
``x_c = x - W/2`` and ``y_c = y - H/2``.  Hence ``theta = 90`` integrates
along rows and ``theta = 0`` along columns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .core import PatternClass, as_image


@dataclass(frozen=True)
class Sinogram:
    angles: np.ndarray  # degrees, ascending
    offsets: np.ndarray  # signed pixels, unit stride
    values: np.ndarray  # [angle, offset] line integrals
    chords: np.ndarray  # [angle, offset] in-image sample counts
    width: int
    height: int

    @property
    def normalized(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.chords > 0, self.values / np.maximum(self.chords, 1), 0.0)


@dataclass(frozen=True)
class RadonPeak:
    theta: float
    rho: float
    value: float
    normalized_value: float
    angle_index: int = -1
    offset_index: int = -1


@dataclass(frozen=True)
class LineDetection:
    cls: PatternClass
    theta: float
    rho: float
    segment: tuple[tuple[float, float], tuple[float, float]]
    score: float
    support: float = 1.0

    @property
    def rows(self) -> tuple[float, float]:
        (_, y0), (_, y1) = self.segment
        return min(y0, y1), max(y0, y1)

    @property
    def mean_row(self) -> float:
        (_, y0), (_, y1) = self.segment
        return 0.5 * (y0 + y1)

    @property
    def mean_col(self) -> float:
        (x0, _), (x1, _) = self.segment
        return 0.5 * (x0 + x1)

    def translated(self, dx: float = 0.0, dy: float = 0.0, width=None, height=None) -> "LineDetection":
        """Shift into a parent frame; ``rho`` is recomputed for the parent's center if dims given."""
        (x0, y0), (x1, y1) = self.segment
        seg = ((x0 + dx, y0 + dy), (x1 + dx, y1 + dy))
        rho = self.rho
        if width is not None and height is not None:
            t = math.radians(self.theta)
            rho = (seg[0][0] - width / 2) * math.cos(t) + (seg[0][1] - height / 2) * math.sin(t)
        return LineDetection(self.cls, self.theta, rho, seg, self.score, self.support)

    def with_segment(self, segment) -> "LineDetection":
        return LineDetection(self.cls, self.theta, self.rho, segment, self.score, self.support)


def angle_range(center: float, halfwidth: float, step: float = 0.5) -> np.ndarray:
    n = int(round(halfwidth / step))
    return center + step * np.arange(-n, n + 1)


def max_offset(width: int, height: int) -> int:
    return int(math.ceil(math.hypot(width, height) / 2))


@numba.njit(cache=True)
def _sample(img, x, y):
    h, w = img.shape
    if x <= -1.0 or y <= -1.0 or x >= w or y >= h:
        return 0.0
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    ix = int(x0)
    iy = int(y0)
    acc = 0.0
    if iy >= 0:
        if ix >= 0:
            acc += (1 - fx) * (1 - fy) * img[iy, ix]
        if ix + 1 < w:
            acc += fx * (1 - fy) * img[iy, ix + 1]
    if iy + 1 < h:
        if ix >= 0:
            acc += (1 - fx) * fy * img[iy + 1, ix]
        if ix + 1 < w:
            acc += fx * fy * img[iy + 1, ix + 1]
    return acc


@numba.njit(cache=True)
def _radon_kernel(img, thetas, rhos, half_len):
    h, w = img.shape
    cx = w / 2.0
    cy = h / 2.0
    values = np.zeros((thetas.size, rhos.size))
    chords = np.zeros((thetas.size, rhos.size))
    for i in range(thetas.size):
        c = math.cos(thetas[i])
        s = math.sin(thetas[i])
        for j in range(rhos.size):
            px = cx + rhos[j] * c
            py = cy + rhos[j] * s
            acc = 0.0
            cnt = 0.0
            # Restrict k to the span where the ray is inside (-1, w) x (-1, h).
            k_lo = -half_len
            k_hi = half_len
            if abs(s) > 1e-12:
                a = (px + 1.0) / s
                b = (px - w) / s
                k_lo = max(k_lo, int(math.floor(min(a, b))))
                k_hi = min(k_hi, int(math.ceil(max(a, b))))
            if abs(c) > 1e-12:
                a = (-1.0 - py) / c
                b = (h - py) / c
                k_lo = max(k_lo, int(math.floor(min(a, b))))
                k_hi = min(k_hi, int(math.ceil(max(a, b))))
            for k in range(k_lo, k_hi + 1):
                x = px - k * s
                y = py + k * c
                if x > -1.0 and y > -1.0 and x < w and y < h:
                    acc += _sample(img, x, y)
                    if x >= -0.5 and y >= -0.5 and x < w - 0.5 and y < h - 0.5:
                        cnt += 1.0
            values[i, j] = acc
            chords[i, j] = cnt
    return values, chords


def radon_transform(img, angles) -> Sinogram:
    """Line integrals at unit arc-length steps with bilinear sampling (zero outside)."""
    img = as_image(img)
    angles = np.asarray(angles, dtype=np.float64).ravel()
    if angles.size == 0:
        raise ValueError("angle list is empty")
    if np.any(angles < -90) or np.any(angles >= 180):
        raise ValueError("angles must lie in [-90, 180)")
    order = np.argsort(angles, kind="stable")
    angles = angles[order]
    h, w = img.shape
    r = max_offset(w, h)
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    values, chords = _radon_kernel(np.ascontiguousarray(img), np.radians(angles), offsets, r + 1)
    return Sinogram(angles, offsets, values, chords, w, h)


def find_local_maxima(sino: Sinogram, neighborhood: int = 5, min_normalized: float = 0.0) -> list[RadonPeak]:
    """Cells strictly above every other cell of their ``(2n+1)^2`` window."""
    if neighborhood < 1:
        raise ValueError("neighborhood must be >= 1")
    size = 2 * neighborhood + 1
    footprint = np.ones((size, size), dtype=bool)
    footprint[neighborhood, neighborhood] = False
    others = ndimage.maximum_filter(sino.values, footprint=footprint, mode="constant", cval=-np.inf)
    norm = sino.normalized
    hits = np.argwhere((sino.values > others) & (norm >= min_normalized))
    peaks = [
        RadonPeak(
            float(sino.angles[i]), float(sino.offsets[j]), float(sino.values[i, j]),
            float(norm[i, j]), int(i), int(j),
        )
        for i, j in hits
    ]
    peaks.sort(key=lambda p: (-p.normalized_value, p.angle_index, p.offset_index))
    return peaks


def line_points(theta: float, rho: float, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Foot point (pixel coordinates) and unit direction of the line."""
    t = math.radians(theta)
    c, s = math.cos(t), math.sin(t)
    foot = np.array([width / 2 + rho * c, height / 2 + rho * s])
    return foot, np.array([-s, c])


def clip_line(theta: float, rho: float, width: int, height: int):
    """Clip the infinite line to ``[0, W-1] x [0, H-1]``; ``None`` if it misses."""
    foot, d = line_points(theta, rho, width, height)
    lo, hi = -np.inf, np.inf
    eps = 1e-9
    for axis, limit in ((0, width - 1), (1, height - 1)):
        if abs(d[axis]) < eps:
            if foot[axis] < -eps or foot[axis] > limit + eps:
                return None
            continue
        a = (0 - foot[axis]) / d[axis]
        b = (limit - foot[axis]) / d[axis]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if lo > hi + eps:
        return None
    p0 = foot + lo * d
    p1 = foot + hi * d
    p0 = (float(np.clip(p0[0], 0, width - 1)), float(np.clip(p0[1], 0, height - 1)))
    p1 = (float(np.clip(p1[0], 0, width - 1)), float(np.clip(p1[1], 0, height - 1)))
    # Endpoints ordered top-to-bottom, then left-to-right.
    return tuple(sorted((p0, p1), key=lambda p: (p[1], p[0])))


def peak_to_segment(peak: RadonPeak, width: int, height: int):
    seg = clip_line(peak.theta, peak.rho, width, height)
    if seg is None:
        raise ValueError("peak maps outside image")
    return seg


def segment_samples(segment, step: float = 1.0) -> np.ndarray:
    (x0, y0), (x1, y1) = segment
    length = math.hypot(x1 - x0, y1 - y0)
    n = int(math.floor(length / step)) + 1
    t = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.0])
    return np.stack([x0 + t * (x1 - x0), y0 + t * (y1 - y0)], axis=1)


def sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    return ndimage.map_coordinates(img, [ys, xs], order=1, mode="grid-constant", cval=0.0, prefilter=False)


def line_support(img, segment, brightness_threshold: float) -> float:
    """Fraction of unit-step samples along ``segment`` at or above the threshold."""
    (x0, y0), (x1, y1) = segment
    if math.hypot(x1 - x0, y1 - y0) == 0:
        raise ValueError("zero-length segment")
    pts = segment_samples(segment)
    vals = sample_bilinear(np.asarray(img, dtype=np.float64), pts[:, 0], pts[:, 1])
    return float(np.mean(vals >= brightness_threshold))


def peak_detection(peak: RadonPeak, cls: PatternClass, width: int, height: int, support: float = 1.0) -> LineDetection:
    seg = peak_to_segment(peak, width, height)
    return LineDetection(cls, peak.theta, peak.rho, seg, peak.normalized_value, support)
