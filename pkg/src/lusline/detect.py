"""Pleural line, A-line and B-line localization on a rectified LUS frame."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import PatternClass, as_image, crop_rows, gaussian_blur
from .geometry import TrapezoidROI, fit_warp, warp_to_rect
from .radon import (
    LineDetection,
    RadonPeak,
    angle_range,
    clip_line,
    find_local_maxima,
    line_support,
    radon_transform,
)
from .wavelet import DenoiseSpec, denoise


@dataclass(frozen=True)
class PipelineConfig:
    blur_sigma: float = 3.0
    blur_fraction: float = 0.1
    pleural_theta_center: float = 90.0
    pleural_theta_halfwidth: float = 20.0
    pleural_min_support: float = 0.6
    pleural_min_normalized: float = 0.35
    aline_theta_halfwidth: float = 5.0
    aline_spacing_tolerance: float = 0.2
    aline_min_normalized: float = 0.25
    aline_crop: int = 8
    bline_theta_center: float = 0.0
    bline_theta_halfwidth: float = 5.0
    bline_min_coverage: float = 0.8
    bline_min_normalized: float = 0.30
    bline_merge_px: float = 6.0
    bline_contact_margin: float = 10.0
    max_alines: int = 3
    max_blines: int = 5
    lung_margin: int = 5
    angle_step: float = 0.5
    peak_neighborhood: int = 5
    support_ratio: float = 0.5
    min_chord_fraction: float = 0.5
    auto_scale: bool = False

    def __post_init__(self):
        for name in ("pleural_theta_halfwidth", "aline_theta_halfwidth", "bline_theta_halfwidth", "angle_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive (windows cannot be empty)")
        for name in ("aline_spacing_tolerance", "blur_fraction", "pleural_min_support", "bline_min_coverage", "support_ratio"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.max_alines < 0 or self.max_blines < 0:
            raise ValueError("line count maxima must be >= 0")
        if self.blur_sigma <= 0:
            raise ValueError("blur_sigma must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**known)

    def digest(self, extra: dict | None = None) -> str:
        payload = {"pipeline": self.to_dict(), **(extra or {})}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class DetectionResult:
    pleural: LineDetection | None
    alines: list[LineDetection]
    blines: list[LineDetection]
    width: int
    height: int
    provenance: dict = field(default_factory=dict)

    @property
    def counts(self) -> tuple[int, int, int]:
        return (0 if self.pleural is None else 1, len(self.alines), len(self.blines))

    def by_class(self) -> dict[PatternClass, list[LineDetection]]:
        return {
            PatternClass.PLEURAL: [] if self.pleural is None else [self.pleural],
            PatternClass.ALINE: list(self.alines),
            PatternClass.BLINE: list(self.blines),
        }


def _scale(img: np.ndarray, cfg: PipelineConfig) -> float:
    return float(img.max()) if cfg.auto_scale else 1.0


def _long_enough(peak: RadonPeak, chords: np.ndarray, extent: float, cfg: PipelineConfig) -> bool:
    return chords[peak.angle_index, peak.offset_index] >= cfg.min_chord_fraction * extent


def suppress_top(img, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Blur the top ``blur_fraction`` of rows to damp skin and muscle echoes."""
    img = as_image(img)
    if not 0 < cfg.blur_fraction < 1:
        raise ValueError("blur_fraction must lie in (0, 1)")
    stop = max(1, int(round(cfg.blur_fraction * img.shape[0])))
    return gaussian_blur(img, cfg.blur_sigma, (0, stop))


def detect_pleural(img, cfg: PipelineConfig = PipelineConfig(), suppressed: bool = False) -> LineDetection | None:
    """Strongest horizontal-ish Radon local maximum with enough bright support."""
    img = as_image(img)
    work = img if suppressed else suppress_top(img, cfg)
    scale = _scale(img, cfg)
    if scale <= 0:
        return None
    h, w = work.shape
    sino = radon_transform(work, angle_range(cfg.pleural_theta_center, cfg.pleural_theta_halfwidth, cfg.angle_step))
    lo = cfg.pleural_theta_center - cfg.pleural_theta_halfwidth
    hi = cfg.pleural_theta_center + cfg.pleural_theta_halfwidth
    for peak in find_local_maxima(sino, cfg.peak_neighborhood, cfg.pleural_min_normalized * scale):
        if not lo <= peak.theta <= hi or not _long_enough(peak, sino.chords, w, cfg):
            continue
        seg = clip_line(peak.theta, peak.rho, w, h)
        if seg is None:
            continue
        support = line_support(work, seg, cfg.support_ratio * peak.normalized_value)
        if support >= cfg.pleural_min_support:
            return LineDetection(PatternClass.PLEURAL, peak.theta, peak.rho, seg, peak.normalized_value, support)
    return None


def split_lung_area(img, pleural: LineDetection, margin: int = 5) -> tuple[np.ndarray, int]:
    """Crop everything above the lowest pleural row plus ``margin``."""
    img = np.asarray(img)
    top = int(math.ceil(pleural.rows[1])) + int(margin)
    if top >= img.shape[0]:
        raise ValueError("pleural line at the bottom edge leaves an empty lung area")
    return crop_rows(img, top, img.shape[0])


def find_a_line_candidates(lung, pleural_theta: float, cfg: PipelineConfig = PipelineConfig(), scale: float | None = None) -> list[LineDetection]:
    """Strongest line near ``pleural_theta``, crop below it, repeat until the bottom."""
    lung = as_image(lung)
    if scale is None:
        scale = _scale(lung, cfg)
    h, w = lung.shape
    angles = angle_range(pleural_theta, cfg.aline_theta_halfwidth, cfg.angle_step)
    angles = angles[(angles >= -90) & (angles < 180)]
    found: list[LineDetection] = []
    top = 0
    min_rows = 2 * cfg.peak_neighborhood + 1
    while len(found) < cfg.max_alines and h - top >= min_rows and scale > 0:
        sub = lung[top:]
        sino = radon_transform(sub, angles)
        best = None
        for peak in find_local_maxima(sino, cfg.peak_neighborhood, cfg.aline_min_normalized * scale):
            if _long_enough(peak, sino.chords, w, cfg):
                seg = clip_line(peak.theta, peak.rho, w, sub.shape[0])
                if seg is not None:
                    best = LineDetection(PatternClass.ALINE, peak.theta, peak.rho, seg, peak.normalized_value)
                    break
        if best is None:
            break
        det = best.translated(dy=top, width=w, height=h)
        found.append(det)
        top = int(math.ceil(det.rows[1])) + cfg.aline_crop
    return found


def spacing_filter(candidates, pleural_row: float, skin_to_pleural: float, tolerance: float = 0.2) -> list[LineDetection]:
    """Keep lines whose gap to the previous kept line (the pleura first) matches ``skin_to_pleural``."""
    kept = []
    prev = pleural_row
    for det in sorted(candidates, key=lambda d: d.mean_row):
        if abs((det.mean_row - prev) - skin_to_pleural) <= tolerance * skin_to_pleural:
            kept.append(det)
            prev = det.mean_row
    return kept


def detect_a_lines(
    lung, pleural: LineDetection, skin_to_pleural: float, cfg: PipelineConfig = PipelineConfig(), scale: float | None = None
) -> list[LineDetection]:
    """Iterative A-line search below the pleura, then the equal-spacing filter.

    ``pleural`` must be expressed in the lung frame (its rows are typically
    negative).  Returned detections are in the lung frame, sorted by depth.
    """
    if skin_to_pleural <= 0:
        raise ValueError("skin_to_pleural must be positive")
    candidates = find_a_line_candidates(lung, pleural.theta, cfg, scale)
    return spacing_filter(candidates, pleural.mean_row, skin_to_pleural, cfg.aline_spacing_tolerance)


def detect_b_lines(lung, pleural_row: float = 0.0, cfg: PipelineConfig = PipelineConfig(), scale: float | None = None) -> list[LineDetection]:
    """Near-vertical lines spanning the lung area from top to bottom.

    Segments are returned in the lung frame, extended up to ``pleural_row``
    (a lung-frame row, usually <= 0) so they touch the pleura.
    """
    lung = as_image(lung)
    if scale is None:
        scale = _scale(lung, cfg)
    h, w = lung.shape
    if scale <= 0:
        return []
    sino = radon_transform(lung, angle_range(cfg.bline_theta_center, cfg.bline_theta_halfwidth, cfg.angle_step))
    kept: list[LineDetection] = []
    for peak in find_local_maxima(sino, cfg.peak_neighborhood, cfg.bline_min_normalized * scale):
        if len(kept) >= cfg.max_blines:
            break
        if not _long_enough(peak, sino.chords, h, cfg):
            continue
        seg = clip_line(peak.theta, peak.rho, w, h)
        if seg is None or seg[0][1] > 0.5 or seg[1][1] < h - 1.5:
            # Must span the whole lung area, top row to bottom row.
            continue
        support = line_support(lung, seg, cfg.support_ratio * peak.normalized_value)
        if support < cfg.bline_min_coverage:
            continue
        det = LineDetection(PatternClass.BLINE, peak.theta, peak.rho, seg, peak.normalized_value, support)
        if any(abs(det.mean_col - k.mean_col) < cfg.bline_merge_px for k in kept):
            continue
        kept.append(det)
    out = []
    for det in kept:
        out.append(det.with_segment((_point_at_row(det, pleural_row, w, h), _point_at_row(det, h - 1, w, h))))
    return sorted(out, key=lambda d: d.mean_col)


def _point_at_row(det: LineDetection, row: float, width: int, height: int) -> tuple[float, float]:
    t = math.radians(det.theta)
    x = width / 2 + (det.rho - (row - height / 2) * math.sin(t)) / math.cos(t)
    return (float(x), float(row))


def _row_at_col(det: LineDetection, col: float, width: int, height: int) -> float:
    t = math.radians(det.theta)
    return height / 2 + (det.rho - (col - width / 2) * math.cos(t)) / math.sin(t)


def detect_lines(rect, cfg: PipelineConfig = PipelineConfig(), provenance: dict | None = None) -> DetectionResult:
    """Run the detection stages on an already rectified (and denoised) frame."""
    rect = as_image(rect)
    h, w = rect.shape
    scale = _scale(rect, cfg)
    provenance = dict(provenance or {})
    pleural = detect_pleural(rect, cfg)
    if pleural is None:
        return DetectionResult(None, [], [], w, h, provenance)
    try:
        lung, offset = split_lung_area(rect, pleural, cfg.lung_margin)
    except ValueError:
        return DetectionResult(pleural, [], [], w, h, provenance)
    pleural_lung = pleural.translated(dy=-offset)
    skin_to_pleural = pleural.mean_row
    alines = []
    if skin_to_pleural > 0:
        alines = detect_a_lines(lung, pleural_lung, skin_to_pleural, cfg, scale=scale)
    alines = [a.translated(dy=offset, width=w, height=h) for a in alines]

    blines = []
    for b in detect_b_lines(lung, 0.0, cfg, scale=scale):
        b = b.translated(dy=offset, width=w, height=h)
        top = _row_at_col(pleural, b.mean_col, w, h)
        seg = (_point_at_row(b, top, w, h), _point_at_row(b, h - 1, w, h))
        blines.append(b.with_segment(seg))
    return DetectionResult(pleural, alines, blines, w, h, provenance)


def prepare_frame(img, roi=None, denoise_spec=DenoiseSpec(), out_size=(512, 512)) -> np.ndarray:
    """Rectify (when an ROI is given) and denoise; the frame every detection stage sees."""
    rect = as_image(img)
    if roi is not None:
        rect = warp_to_rect(rect, fit_warp(roi, *out_size))
    if denoise_spec is not None:
        rect = denoise(rect, denoise_spec)
    return rect


def run_pipeline(
    img,
    roi: TrapezoidROI | None = None,
    denoise_spec: DenoiseSpec | None = DenoiseSpec(),
    cfg: PipelineConfig = PipelineConfig(),
    out_size: tuple[int, int] = (512, 512),
    image_id: str = "",
) -> DetectionResult:
    """Warp, denoise and detect. ``roi=None`` treats the input as already rectified."""
    rect = prepare_frame(img, roi, denoise_spec, out_size)
    provenance = {
        "image": image_id,
        "config": cfg.to_dict(),
        "denoise": None if denoise_spec is None else asdict(denoise_spec),
        "roi": None if roi is None else [list(c) for c in roi.corners],
    }
    return detect_lines(rect, cfg, provenance)
