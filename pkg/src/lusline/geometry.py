"""Trapezoid ROI to rectangle rectification.

A general trapezoid is not an affine image of a rectangle, so the warp is the
bilinear quadrilateral parameterization, which is affine whenever the ROI
happens to be a parallelogram.  Target pixel ``(col, row)`` of a ``W x H``
frame has normalized coordinates ``u = col / (W - 1)``, ``v = row / (H - 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_image
from .radon import LineDetection, sample_bilinear


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


@dataclass(frozen=True)
class TrapezoidROI:
    """Corners ordered top-left, top-right, bottom-right, bottom-left (x, y)."""

    corners: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = np.asarray(self.corners, dtype=np.float64)
        if pts.shape != (4, 2):
            raise ValueError("ROI needs exactly four (x, y) corners")
        object.__setattr__(self, "corners", tuple((float(x), float(y)) for x, y in pts))
        tl, tr, br, bl = pts
        if max(tl[1], tr[1]) >= min(bl[1], br[1]):
            raise ValueError("ROI top edge must lie strictly above its bottom edge")
        if self.area < 1.0:
            raise ValueError(f"degenerate ROI: area {self.area:.3g} px^2 < 1")
        if not self._is_simple(pts):
            raise ValueError("ROI corners form a self-intersecting quadrilateral")

    @staticmethod
    def _is_simple(pts) -> bool:
        def intersect(p1, p2, p3, p4):
            d1 = _cross(p4 - p3, p1 - p3)
            d2 = _cross(p4 - p3, p2 - p3)
            d3 = _cross(p2 - p1, p3 - p1)
            d4 = _cross(p2 - p1, p4 - p1)
            return d1 * d2 < 0 and d3 * d4 < 0

        return not (intersect(pts[0], pts[1], pts[2], pts[3]) or intersect(pts[1], pts[2], pts[3], pts[0]))

    @property
    def area(self) -> float:
        x, y = np.asarray(self.corners).T
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @classmethod
    def full_frame(cls, width: int, height: int) -> "TrapezoidROI":
        return cls(((0, 0), (width - 1, 0), (width - 1, height - 1), (0, height - 1)))

    def contains(self, x, y) -> np.ndarray:
        """Point-in-quadrilateral test (convex or not) with a small border tolerance."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        pts = self.corners
        for i in range(4):
            (x0, y0), (x1, y1) = pts[i], pts[(i + 1) % 4]
            crosses = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (x < xi)
        return inside


@dataclass(frozen=True)
class WarpMap:
    roi: TrapezoidROI
    width: int
    height: int

    def _uv(self, col, row):
        return np.asarray(col, dtype=np.float64) / (self.width - 1), np.asarray(row, dtype=np.float64) / (self.height - 1)

    def forward(self, col, row):
        """Rectangle pixel coordinates to source pixel coordinates."""
        u, v = self._uv(col, row)
        (x0, y0), (x1, y1), (x2, y2), (x3, y3) = self.roi.corners
        x = (1 - u) * (1 - v) * x0 + u * (1 - v) * x1 + u * v * x2 + (1 - u) * v * x3
        y = (1 - u) * (1 - v) * y0 + u * (1 - v) * y1 + u * v * y2 + (1 - u) * v * y3
        return x, y

    def inverse(self, x, y):
        """Source pixel coordinates to rectangle pixel coordinates (closed form)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        p0, p1, p2, p3 = (np.array(c) for c in self.roi.corners)
        # P(u, v) = p0 + u*e + v*f + u*v*g
        e, f, g = p1 - p0, p3 - p0, p0 - p1 + p2 - p3
        hx, hy = x - p0[0], y - p0[1]
        # Eliminating u gives a*v^2 + b*v + c = 0.
        a = _cross(g, f)
        b = _cross(e, f) + hx * g[1] - hy * g[0]
        c = hx * e[1] - hy * e[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            if abs(a) < 1e-12 * max(1.0, abs(_cross(e, f))):
                v = -c / b
            else:
                disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
                v1 = (-b + disc) / (2 * a)
                v2 = (-b - disc) / (2 * a)
                # Pick the root closest to the unit interval.
                dist1 = np.abs(np.clip(v1, 0, 1) - v1)
                dist2 = np.abs(np.clip(v2, 0, 1) - v2)
                v = np.where(dist1 <= dist2, v1, v2)
            den_x = e[0] + v * g[0]
            den_y = e[1] + v * g[1]
            u = np.where(np.abs(den_x) >= np.abs(den_y), (hx - v * f[0]) / den_x, (hy - v * f[1]) / den_y)
        return u * (self.width - 1), v * (self.height - 1)


def fit_warp(roi: TrapezoidROI, out_width: int = 512, out_height: int = 512) -> WarpMap:
    if out_width < 2 or out_height < 2:
        raise ValueError("output dimensions must be >= 2")
    if roi.area < 1.0:
        raise ValueError("degenerate ROI")
    return WarpMap(roi, int(out_width), int(out_height))


def warp_to_rect(img, warp: WarpMap) -> np.ndarray:
    """Resample the ROI onto the target rectangle (bilinear; outside the source = 0)."""
    img = as_image(img)
    rows, cols = np.mgrid[0 : warp.height, 0 : warp.width]
    xs, ys = warp.forward(cols, rows)
    h, w = img.shape
    # Snap coordinates that land on the border through rounding noise.
    xs = np.where(np.abs(xs - np.round(xs)) < 1e-9, np.round(xs), xs)
    ys = np.where(np.abs(ys - np.round(ys)) < 1e-9, np.round(ys), ys)
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    out = sample_bilinear(img, xs.ravel(), ys.ravel()).reshape(xs.shape)
    out[~inside] = 0.0
    return np.clip(out, 0.0, 1.0)


def map_detection_back(det: LineDetection, warp: WarpMap, step: float = 4.0) -> np.ndarray:
    """Map a rectangle-frame segment to a source-frame polyline of shape ``(n, 2)``."""
    (x0, y0), (x1, y1) = det.segment
    x0, x1 = np.clip([x0, x1], 0, warp.width - 1)
    y0, y1 = np.clip([y0, y1], 0, warp.height - 1)
    length = math.hypot(x1 - x0, y1 - y0)
    n = max(int(math.ceil(length / step)), 1)
    t = np.linspace(0.0, 1.0, n + 1)
    xs, ys = warp.forward(x0 + t * (x1 - x0), y0 + t * (y1 - y0))
    return np.stack([xs, ys], axis=1)
