"""Seeded synthetic lung-ultrasound phantoms in the rectified frame.

Structures are intensity bands with a Gaussian cross-profile whose FWHM is
``line_thickness``; masks mark the half-maximum core of each band.  All
randomness flows from ``numpy.random.SeedSequence(seed)`` through PCG64
(numpy's ``default_rng``), so a seed pins a phantom byte-for-byte.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import ndimage

from .core import PatternClass
from .radon import LineDetection, clip_line

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class NoiseSpec:
    gaussian_sigma: float = 0.0
    salt_pepper_density: float = 0.0
    poisson_scale: float = 0.0  # photons per unit intensity; 0 disables
    speckle_sigma: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise ValueError(f"noise parameter {name} must be >= 0")

    @property
    def is_zero(self) -> bool:
        return not any(asdict(self).values())


MODERATE_NOISE = NoiseSpec(gaussian_sigma=0.05, speckle_sigma=0.3)


@dataclass(frozen=True)
class PhantomSpec:
    width: int = 512
    height: int = 512
    pleural_depth: float = 0.16
    pleural_tilt: float = 0.0
    n_alines: int = 0
    n_blines: int = 0
    bline_columns: tuple[float, ...] = ()
    line_thickness: float = 6.0
    aline_decay: float = 0.7
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0
    pleural_intensity: float = 0.9
    bline_intensity: float = 0.7
    extra_pleural_depth: float | None = None

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("phantom must be at least 8x8")
        if not 0 <= self.n_alines <= 3:
            raise ValueError("n_alines must lie in [0, 3]")
        if not 0 <= self.n_blines <= 5:
            raise ValueError("n_blines must lie in [0, 5]")
        if not -15 <= self.pleural_tilt <= 15:
            raise ValueError("pleural_tilt must lie in [-15, 15] degrees")
        if not 0 < self.pleural_depth < 1:
            raise ValueError("pleural_depth must be a fraction in (0, 1)")
        if len(self.bline_columns) != self.n_blines:
            raise ValueError(
                f"bline_columns has {len(self.bline_columns)} entries but n_blines = {self.n_blines}"
            )
        object.__setattr__(self, "bline_columns", tuple(float(c) for c in self.bline_columns))
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseSpec(**self.noise))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bline_columns"] = list(self.bline_columns)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        d = dict(d)
        d["noise"] = NoiseSpec(**d.get("noise", {}))
        d["bline_columns"] = tuple(d.get("bline_columns", ()))
        return cls(**d)


@dataclass
class Phantom:
    spec: PhantomSpec
    clean: np.ndarray
    noisy: np.ndarray
    masks: dict[PatternClass, np.ndarray]
    truth: list[LineDetection]


def _horizontal_line(depth_px: float, tilt: float, width: int, height: int) -> tuple[float, float]:
    """(theta, rho) of a line tilted by ``tilt`` through ``(W/2, depth_px)``."""
    return 90.0 + tilt, (depth_px - height / 2) * math.cos(math.radians(tilt))


def _signed_distance(theta: float, rho: float, xc: np.ndarray, yc: np.ndarray) -> np.ndarray:
    t = math.radians(theta)
    return xc * math.cos(t) + yc * math.sin(t) - rho


def _row_on_line(theta: float, rho: float, x: np.ndarray, width: int, height: int) -> np.ndarray:
    t = math.radians(theta)
    return height / 2 + (rho - (x - width / 2) * math.cos(t)) / math.sin(t)


def _texture(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    field_ = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=3.0, mode="wrap")
    return field_ / (field_.std() + 1e-12)


def apply_noise(img, noise: NoiseSpec, seed) -> np.ndarray:
    """Speckle, Poisson, Gaussian, then salt-and-pepper; clamped to [0, 1]."""
    out = np.array(img, dtype=np.float64)
    if noise.is_zero:
        return out
    rng = np.random.default_rng(seed)
    if noise.speckle_sigma > 0:
        out = out * (1.0 + rng.normal(0.0, noise.speckle_sigma, out.shape))
    if noise.poisson_scale > 0:
        out = rng.poisson(np.clip(out, 0, None) * noise.poisson_scale) / noise.poisson_scale
    if noise.gaussian_sigma > 0:
        out = out + rng.normal(0.0, noise.gaussian_sigma, out.shape)
    if noise.salt_pepper_density > 0:
        hit = rng.random(out.shape) < noise.salt_pepper_density
        salt = rng.random(out.shape) < 0.5
        out = np.where(hit, salt.astype(np.float64), out)
    return np.clip(out, 0.0, 1.0)


def generate_phantom(spec: PhantomSpec) -> Phantom:
    w, h = spec.width, spec.height
    tex_seed, noise_seed = np.random.SeedSequence(spec.seed).spawn(2)
    tex = _texture(np.random.default_rng(tex_seed), (h, w))

    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    xc, yc = cols - w / 2, rows - h / 2
    sigma = spec.line_thickness * FWHM_TO_SIGMA
    half = spec.line_thickness / 2

    pl_theta, pl_rho = _horizontal_line(spec.pleural_depth * h, spec.pleural_tilt, w, h)
    pl_dist = _signed_distance(pl_theta, pl_rho, xc, yc)

    # Soft tissue above the pleura is brighter than aerated lung below it.
    below = pl_dist > 0
    clean = np.where(below, 0.08 + 0.02 * tex, 0.16 + 0.04 * tex)
    skin_row = max(2.0, 0.03 * h)
    clean = np.maximum(clean, 0.5 * np.exp(-0.5 * ((rows - skin_row) / 1.0) ** 2))

    masks = {c: np.zeros((h, w), dtype=bool) for c in PatternClass}
    truth: list[LineDetection] = []

    def add_band(theta, rho, peak, cls):
        nonlocal clean
        dist = _signed_distance(theta, rho, xc, yc)
        clean = np.maximum(clean, peak * np.exp(-0.5 * (dist / sigma) ** 2))
        masks[cls] |= np.abs(dist) <= half
        seg = clip_line(theta, rho, w, h)
        if seg is not None:
            truth.append(LineDetection(cls, theta, rho, seg, peak))

    add_band(pl_theta, pl_rho, spec.pleural_intensity, PatternClass.PLEURAL)
    if spec.extra_pleural_depth is not None:
        theta2, rho2 = _horizontal_line(spec.extra_pleural_depth * h, spec.pleural_tilt, w, h)
        add_band(theta2, rho2, 0.8 * spec.pleural_intensity, PatternClass.PLEURAL)

    for k in range(1, spec.n_alines + 1):
        theta, rho = _horizontal_line((k + 1) * spec.pleural_depth * h, spec.pleural_tilt, w, h)
        add_band(theta, rho, spec.pleural_intensity * spec.aline_decay**k, PatternClass.ALINE)

    for frac in spec.bline_columns:
        x_b = frac * w
        top = float(_row_on_line(pl_theta, pl_rho, np.array([x_b]), w, h)[0])
        dx = cols - x_b
        depth = np.clip((rows - top) / max(h - top, 1.0), 0.0, 1.0)
        ramp = np.clip((rows - top) / 2.0 + 0.5, 0.0, 1.0)
        profile = spec.bline_intensity * (1.0 - 0.25 * depth) * ramp * np.exp(-0.5 * (dx / sigma) ** 2)
        clean = np.maximum(clean, profile)
        masks[PatternClass.BLINE] |= (np.abs(dx) <= half) & (rows >= top)
        x_seg = float(np.clip(x_b, 0, w - 1))
        truth.append(
            LineDetection(
                PatternClass.BLINE, 0.0, x_b - w / 2,
                ((x_seg, float(np.clip(top, 0, h - 1))), (x_seg, float(h - 1))), spec.bline_intensity,
            )
        )

    clean = np.clip(clean, 0.0, 1.0)
    noisy = apply_noise(clean, spec.noise, noise_seed)
    return Phantom(spec, clean, noisy, masks, truth)


@dataclass(frozen=True)
class PhantomRanges:
    """Sampling ranges for corpus generation (inclusive)."""

    width: int = 512
    height: int = 512
    pleural_depth: tuple[float, float] = (0.13, 0.2)
    pleural_tilt: tuple[float, float] = (-5.0, 5.0)
    n_alines: tuple[int, int] = (0, 3)
    n_blines: tuple[int, int] = (0, 5)
    line_thickness: tuple[float, float] = (5.0, 7.0)
    aline_decay: tuple[float, float] = (0.7, 0.8)
    noise: NoiseSpec = MODERATE_NOISE

    def __post_init__(self):
        for name in ("pleural_depth", "pleural_tilt", "n_alines", "n_blines", "line_thickness", "aline_decay"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"invalid range for {name}: {lo} > {hi}")
        if self.n_alines[0] < 0 or self.n_alines[1] > 3 or self.n_blines[0] < 0 or self.n_blines[1] > 5:
            raise ValueError("line counts out of range (A-lines 0-3, B-lines 0-5)")
        if self.pleural_tilt[0] < -15 or self.pleural_tilt[1] > 15:
            raise ValueError("tilt range must stay within [-15, 15]")


# Candidate B-line slots; adjacent slots are far enough apart to resolve.
_BLINE_SLOTS = np.linspace(0.12, 0.88, 7)


def sample_spec(seed: int, ranges: PhantomRanges = PhantomRanges()) -> PhantomSpec:
    """Draw a phantom spec from ``ranges``; the same seed drives the phantom itself."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    n_b = int(rng.integers(ranges.n_blines[0], ranges.n_blines[1] + 1))
    slots = np.sort(rng.choice(_BLINE_SLOTS.size, size=n_b, replace=False))
    jitter = rng.uniform(-0.02, 0.02, size=n_b)
    return PhantomSpec(
        width=ranges.width,
        height=ranges.height,
        pleural_depth=float(rng.uniform(*ranges.pleural_depth)),
        pleural_tilt=float(rng.uniform(*ranges.pleural_tilt)),
        n_alines=int(rng.integers(ranges.n_alines[0], ranges.n_alines[1] + 1)),
        n_blines=n_b,
        bline_columns=tuple(float(c) for c in _BLINE_SLOTS[slots] + jitter),
        line_thickness=float(rng.uniform(*ranges.line_thickness)),
        aline_decay=float(rng.uniform(*ranges.aline_decay)),
        noise=ranges.noise,
        seed=int(seed),
    )


def corpus(seeds, ranges: PhantomRanges = PhantomRanges()):
    for seed in seeds:
        yield generate_phantom(sample_spec(seed, ranges))


def with_noise(spec: PhantomSpec, noise: NoiseSpec) -> PhantomSpec:
    return replace(spec, noise=noise)
