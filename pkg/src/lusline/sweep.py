"""Grid search over wavelet family x decomposition level x threshold."""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .wavelet import DenoiseSpec, dwt2, filter_bank, idwt2, snr, threshold_details, coefficient_threshold

INSENSITIVE_BAND = (40, 60)
CSV_HEADER = "family,level,threshold,mean_snr_db,std_snr_db,exceed_count,n_images"


def threshold_axis(stride: int = 5, lo: int = 0, hi: int = 101) -> list[int]:
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return list(range(lo, hi + 1, stride))


@dataclass
class SweepGrid:
    families: list[str]
    levels: list[int]
    thresholds: list[int]
    per_image: np.ndarray  # [family, level, threshold, image] SNR in dB
    mode: str = "hard"
    exceed_count: np.ndarray | None = None

    @property
    def n_images(self) -> int:
        return self.per_image.shape[-1]

    @property
    def saturated(self) -> np.ndarray:
        """Cells where some image hit the exact-reconstruction ``inf`` sentinel."""
        return np.isinf(self.per_image).any(axis=-1)

    @property
    def mean_snr(self) -> np.ndarray:
        return self.per_image.mean(axis=-1)

    @property
    def std_snr(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.saturated, np.nan, self.per_image.std(axis=-1))

    def index(self, family: str, level: int, threshold: int) -> tuple[int, int, int]:
        return self.families.index(family), self.levels.index(level), self.thresholds.index(threshold)

    def to_csv(self) -> str:
        counts = self.exceed_count if self.exceed_count is not None else np.zeros(self.mean_snr.shape, dtype=int)
        mean, std = self.mean_snr, self.std_snr
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for fi, fam in enumerate(self.families):
            for li, lev in enumerate(self.levels):
                for ti, thr in enumerate(self.thresholds):
                    buf.write(
                        f"{fam},{lev},{thr},{_fmt(mean[fi, li, ti])},{_fmt(std[fi, li, ti])},"
                        f"{int(counts[fi, li, ti])},{self.n_images}\n"
                    )
        return buf.getvalue()


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.6f}"


def _family_block(args):
    family, levels, thresholds, corpus, mode = args
    bank = filter_bank(family)
    out = np.empty((len(levels), len(thresholds), len(corpus)))
    for ii, (clean, noisy) in enumerate(corpus):
        for li, level in enumerate(levels):
            try:
                pyr = dwt2(noisy, bank, level)
                for ti, thr in enumerate(thresholds):
                    den = idwt2(threshold_details(pyr, coefficient_threshold(thr), mode), bank)
                    out[li, ti, ii] = snr(clean, den)
            except Exception as exc:
                raise RuntimeError(f"denoise failed for cell ({family}, level {level}) on image {ii}: {exc}") from exc
    return out


def run_sweep(corpus, families, levels, thresholds, mode: str = "hard", jobs: int = 1) -> SweepGrid:
    """Denoise every noisy image at every cell and record SNR against its clean twin.

    ``corpus`` is a sequence of ``(clean, noisy)`` pairs.  Work is split per
    family; results are merged by family index, so ``jobs`` never changes
    the grid.
    """
    corpus = [(np.asarray(c, dtype=np.float64), np.asarray(n, dtype=np.float64)) for c, n in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    for i, (c, n) in enumerate(corpus):
        if c.shape != n.shape:
            raise ValueError(f"pair {i}: clean {c.shape} and noisy {n.shape} differ in size")
    families, levels, thresholds = list(families), [int(x) for x in levels], [int(x) for x in thresholds]
    if not families or not levels or not thresholds:
        raise ValueError("sweep axes must be non-empty")
    tasks = [(f, levels, thresholds, corpus, mode) for f in families]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(_family_block, tasks))
    else:
        blocks = [_family_block(t) for t in tasks]
    grid = SweepGrid(families, levels, thresholds, np.stack(blocks), mode)
    return exceedance_counts(grid)


def exceedance_counts(grid: SweepGrid, per_image: np.ndarray | None = None) -> SweepGrid:
    """Count, per cell, images whose SNR beats the best mean SNR of that level."""
    snrs = grid.per_image if per_image is None else np.asarray(per_image, dtype=np.float64)
    means = snrs.mean(axis=-1)
    counts = np.zeros(means.shape, dtype=int)
    for li in range(len(grid.levels)):
        best = np.max(means[:, li, :])
        counts[:, li, :] = np.sum(snrs[:, li, :, :] > best, axis=-1)
    return SweepGrid(grid.families, grid.levels, grid.thresholds, snrs, grid.mode, counts)


def threshold_sensitivity(grid: SweepGrid, level: int, band: tuple[int, int] = INSENSITIVE_BAND) -> float:
    """Mean over families of the spread (std) of mean SNR across thresholds in ``band``."""
    li = grid.levels.index(level)
    cols = [i for i, t in enumerate(grid.thresholds) if band[0] <= t <= band[1]]
    if len(cols) < 2:
        cols = list(range(len(grid.thresholds)))
    means = grid.mean_snr[:, li, :][:, cols]
    return float(np.mean(np.std(means, axis=1)))


def per_image_winners(grid: SweepGrid, level: int, threshold: int) -> np.ndarray:
    """Family index at which each image peaks; ties go to the shorter filter, then the name."""
    li, ti = grid.levels.index(level), grid.thresholds.index(threshold)
    vals = grid.per_image[:, li, ti, :]
    order = _family_order(grid.families)
    winners = np.empty(vals.shape[1], dtype=int)
    for i in range(vals.shape[1]):
        top = vals[:, i].max()
        winners[i] = next(f for f in order if vals[f, i] == top)
    return winners


def _family_order(families: list[str]) -> list[int]:
    return sorted(range(len(families)), key=lambda i: (filter_bank(families[i]).length, families[i]))


def select_spec(grid: SweepGrid, band: tuple[int, int] = INSENSITIVE_BAND) -> DenoiseSpec:
    """Pick the least threshold-sensitive level, its best threshold, then the most frequent per-image winner."""
    if grid.per_image.size == 0:
        raise ValueError("empty grid")
    if grid.exceed_count is None:
        grid = exceedance_counts(grid)
    sens = [threshold_sensitivity(grid, lev, band) for lev in grid.levels]
    li = int(np.argmin(sens))
    level = grid.levels[li]
    totals = grid.exceed_count[:, li, :].sum(axis=0)
    centre = 0.5 * (band[0] + band[1])
    ti = min(range(len(grid.thresholds)), key=lambda i: (-totals[i], abs(grid.thresholds[i] - centre), grid.thresholds[i]))
    threshold = grid.thresholds[ti]
    tally = np.bincount(per_image_winners(grid, level, threshold), minlength=len(grid.families))
    order = _family_order(grid.families)
    best = max(order, key=lambda f: tally[f])  # max keeps the first of tied entries
    return DenoiseSpec(grid.families[best], level, threshold, grid.mode)
