"""File codecs: 8-bit grayscale PGM/PNG, ROI configs, detection JSON, overlays."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from .core import PatternClass
from .detect import DetectionResult
from .geometry import TrapezoidROI, WarpMap, map_detection_back
from .radon import LineDetection


class FormatError(ValueError):
    pass


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    # Exactly one whitespace byte separates the header from the raster.
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: only binary PGM (P5) is supported, got {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise FormatError(f"{path}: unsupported bit depth (maxval {maxval}); only 8-bit grayscale is supported")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
    return raster.reshape(height, width).astype(np.float64) / maxval


def to_uint8(img) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path, img) -> None:
    raster = to_uint8(img)
    h, w = raster.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + raster.tobytes())


def read_png(path) -> np.ndarray:
    with PILImage.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I", "F"):
            raise FormatError(f"{path}: unsupported bit depth ({im.mode}); only 8-bit grayscale is supported")
        if im.mode not in ("L", "1"):
            raise FormatError(f"{path}: color/alpha mode {im.mode} unsupported; only 8-bit grayscale is supported")
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_png(path, img) -> None:
    PILImage.fromarray(to_uint8(img), mode="L").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"{path}: no such image")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        return read_png(path)
    raise FormatError(f"{path}: unsupported image format {suffix!r} (use .pgm or .png)")


def save_image(path, img) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        write_pgm(path, img)
    elif suffix == ".png":
        write_png(path, img)
    else:
        raise FormatError(f"{path}: unsupported image format {suffix!r} (use .pgm or .png)")


def parse_roi_config(text: str) -> dict[str, TrapezoidROI]:
    """Parse ``stem = x0,y0 x1,y1 x2,y2 x3,y3`` records (``#`` starts a comment)."""
    rois = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"ROI config line {lineno}: expected 'stem = x0,y0 x1,y1 x2,y2 x3,y3'")
        stem, coords = (part.strip() for part in line.split("=", 1))
        try:
            corners = [tuple(float(v) for v in pair.split(",")) for pair in coords.split()]
        except ValueError as exc:
            raise FormatError(f"ROI config line {lineno}: bad coordinate ({exc})") from None
        if len(corners) != 4 or any(len(c) != 2 for c in corners):
            raise FormatError(f"ROI config line {lineno}: need four x,y corner pairs")
        rois[stem] = TrapezoidROI(tuple(corners))
    return rois


def format_roi_config(rois: dict[str, TrapezoidROI]) -> str:
    lines = []
    for stem, roi in rois.items():
        lines.append(f"{stem} = " + " ".join(f"{x:g},{y:g}" for x, y in roi.corners))
    return "\n".join(lines) + "\n"


def _r(x: float) -> float:
    return round(float(x), 6)


def detection_to_dict(det: LineDetection) -> dict:
    return {
        "theta_deg": _r(det.theta),
        "rho_px": _r(det.rho),
        "segment": [[_r(x), _r(y)] for x, y in det.segment],
        "score": _r(det.score),
    }


def detection_from_dict(d: dict, cls: PatternClass) -> LineDetection:
    seg = tuple(tuple(float(v) for v in p) for p in d["segment"])
    return LineDetection(cls, float(d["theta_deg"]), float(d["rho_px"]), seg, float(d["score"]))


def result_to_dict(result: DetectionResult, image: str, config_hash: str) -> dict:
    return {
        "image": image,
        "frame": {"width": result.width, "height": result.height},
        "pleural": None if result.pleural is None else detection_to_dict(result.pleural),
        "alines": [detection_to_dict(d) for d in result.alines],
        "blines": [detection_to_dict(d) for d in result.blines],
        "config_hash": config_hash,
    }


def result_from_dict(d: dict) -> DetectionResult:
    frame = d["frame"]
    pleural = None if d.get("pleural") is None else detection_from_dict(d["pleural"], PatternClass.PLEURAL)
    return DetectionResult(
        pleural,
        [detection_from_dict(a, PatternClass.ALINE) for a in d.get("alines", [])],
        [detection_from_dict(b, PatternClass.BLINE) for b in d.get("blines", [])],
        int(frame["width"]),
        int(frame["height"]),
        {"image": d.get("image", "")},
    )


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


COLORS = {
    PatternClass.PLEURAL: (0, 255, 0),
    PatternClass.ALINE: (0, 0, 255),
    PatternClass.BLINE: (255, 0, 0),
}


def render_overlay(img, result: DetectionResult, warp: WarpMap | None = None, width: int = 2) -> PILImage.Image:
    """Draw detections on the source image: pleural green, A-lines blue, B-lines red."""
    canvas = PILImage.fromarray(to_uint8(img), mode="L").convert("RGB")
    draw = ImageDraw.Draw(canvas)
    for cls, dets in result.by_class().items():
        for det in dets:
            if warp is None:
                pts = np.asarray(det.segment, dtype=np.float64)
            else:
                pts = map_detection_back(det, warp)
            draw.line([(float(x), float(y)) for x, y in pts], fill=COLORS[cls], width=width)
    return canvas
