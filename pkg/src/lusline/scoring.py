"""Pixel-level precision, recall and F-beta scoring of line detections.

Counts are pooled over the whole corpus (micro-average) before any ratio is
taken.  A predicted pixel counts as correct when it lies within ``tolerance``
(Chebyshev) of a truth pixel, and a truth pixel counts as found when it lies
within ``tolerance`` of a predicted pixel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PatternClass, as_mask, dilate

BETAS = {"f05": 0.5, "f1": 1.0, "f2": 2.0}


def rasterize_detections(dets, dims: tuple[int, int], stroke_width: int = 5) -> np.ndarray:
    """Draw segments with flat caps; ``dims`` is ``(height, width)``."""
    if stroke_width < 1:
        raise ValueError("stroke_width must be >= 1")
    h, w = dims
    mask = np.zeros((h, w), dtype=bool)
    half = (stroke_width - 1) / 2 + 1e-9
    for det in dets:
        seg = det.segment if hasattr(det, "segment") else det
        (x0, y0), (x1, y1) = seg
        dx, dy = x1 - x0, y1 - y0
        length = math.hypot(dx, dy)
        lo_x = max(int(math.floor(min(x0, x1) - half)), 0)
        hi_x = min(int(math.ceil(max(x0, x1) + half)), w - 1)
        lo_y = max(int(math.floor(min(y0, y1) - half)), 0)
        hi_y = min(int(math.ceil(max(y0, y1) + half)), h - 1)
        if lo_x > hi_x or lo_y > hi_y:
            continue
        ys, xs = np.mgrid[lo_y : hi_y + 1, lo_x : hi_x + 1].astype(np.float64)
        if length == 0:
            hit = (np.abs(xs - x0) <= half) & (np.abs(ys - y0) <= half)
        else:
            ux, uy = dx / length, dy / length
            along = (xs - x0) * ux + (ys - y0) * uy
            across = (xs - x0) * -uy + (ys - y0) * ux
            hit = (np.abs(across) <= half) & (along >= -1e-9) & (along <= length + 1e-9)
        mask[lo_y : hi_y + 1, lo_x : hi_x + 1] |= hit
    return mask


@dataclass(frozen=True)
class PixelCounts:
    """Raw counts behind one precision/recall pair."""

    n_pred: int = 0
    n_truth: int = 0
    matched_pred: int = 0  # predicted pixels near truth
    matched_truth: int = 0  # truth pixels near a prediction

    def __add__(self, other: "PixelCounts") -> "PixelCounts":
        return PixelCounts(
            self.n_pred + other.n_pred,
            self.n_truth + other.n_truth,
            self.matched_pred + other.matched_pred,
            self.matched_truth + other.matched_truth,
        )

    @property
    def tp(self) -> int:
        return self.matched_pred

    @property
    def fp(self) -> int:
        return self.n_pred - self.matched_pred

    @property
    def fn(self) -> int:
        return self.n_truth - self.matched_truth

    @property
    def precision(self) -> float | None:
        return self.matched_pred / self.n_pred if self.n_pred else None

    @property
    def recall(self) -> float | None:
        return self.matched_truth / self.n_truth if self.n_truth else None


def pixel_counts(pred, truth, tolerance: int = 3) -> PixelCounts:
    pred, truth = as_mask(pred), as_mask(truth)
    if pred.shape != truth.shape:
        raise ValueError(f"mask dimension mismatch: {pred.shape} vs {truth.shape}")
    return PixelCounts(
        int(pred.sum()),
        int(truth.sum()),
        int(np.count_nonzero(pred & dilate(truth, tolerance))),
        int(np.count_nonzero(truth & dilate(pred, tolerance))),
    )


def precision_recall(pred, truth, tolerance: int = 0) -> tuple[float | None, float | None]:
    """``None`` flags an undefined ratio (no predictions, or no truth)."""
    c = pixel_counts(pred, truth, tolerance)
    return c.precision, c.recall


def f_beta(precision: float, recall: float, beta: float) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not (0 <= precision <= 1 and 0 <= recall <= 1):
        raise ValueError("precision and recall must lie in [0, 1]")
    b2 = beta * beta
    den = b2 * precision + recall
    return 0.0 if den == 0 else (1 + b2) * precision * recall / den


@dataclass
class ClassScore:
    counts: PixelCounts
    precision: float | None
    recall: float | None
    f05: float
    f1: float
    f2: float

    @classmethod
    def from_counts(cls, counts: PixelCounts) -> "ClassScore":
        p, r = counts.precision, counts.recall
        if p is None or r is None:
            fs = {k: 0.0 for k in BETAS}
        else:
            fs = {k: f_beta(p, r, b) for k, b in BETAS.items()}
        return cls(counts, p, r, **fs)

    def to_dict(self) -> dict:
        c = self.counts
        return {
            "precision": self.precision,
            "recall": self.recall,
            "precision_undefined": self.precision is None,
            "recall_undefined": self.recall is None,
            "f05": self.f05,
            "f1": self.f1,
            "f2": self.f2,
            "tp": c.tp,
            "fp": c.fp,
            "fn": c.fn,
            "matched_truth": c.matched_truth,
            "n_pred": c.n_pred,
            "n_truth": c.n_truth,
        }


@dataclass
class ScoreReport:
    classes: dict[PatternClass, ClassScore]
    per_image: list[dict] = field(default_factory=list)
    tolerance: int = 3
    stroke_width: int = 5
    averaging: str = "micro"

    def to_dict(self) -> dict:
        return {
            "averaging": self.averaging,
            "tolerance_px": self.tolerance,
            "stroke_width_px": self.stroke_width,
            "classes": {cls.value: s.to_dict() for cls, s in self.classes.items()},
            "per_image": self.per_image,
        }


def evaluate_corpus(items, tolerance: int = 3, stroke_width: int = 5) -> ScoreReport:
    """Score ``(image_id, DetectionResult, {PatternClass: truth mask})`` triples.

    Items without an id can be passed as ``(result, masks)`` pairs; they are
    numbered in input order.  Per-image rows are sorted by id so the report
    does not depend on enumeration order.
    """
    items = list(items)
    if not items:
        raise ValueError("empty corpus")
    totals = {c: PixelCounts() for c in PatternClass}
    rows = []
    for idx, item in enumerate(items):
        image_id, result, masks = item if len(item) == 3 else (f"{idx:06d}", *item)
        per_class = result.by_class()
        row = {"image": image_id}
        for cls in PatternClass:
            truth = as_mask(masks[cls])
            pred = rasterize_detections(per_class[cls], truth.shape, stroke_width)
            counts = pixel_counts(pred, truth, tolerance)
            totals[cls] = totals[cls] + counts
            s = ClassScore.from_counts(counts)
            row[cls.value] = {"precision": s.precision, "recall": s.recall, "f2": s.f2,
                              "n_pred": counts.n_pred, "n_truth": counts.n_truth}
        rows.append(row)
    rows.sort(key=lambda r: r["image"])
    classes = {c: ClassScore.from_counts(totals[c]) for c in PatternClass}
    return ScoreReport(classes, rows, tolerance, stroke_width)
