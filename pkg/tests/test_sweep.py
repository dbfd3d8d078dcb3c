import math
import statistics

import numpy as np
import pytest

from lusline.phantom import PhantomRanges, corpus
from lusline.sweep import (
    CSV_HEADER,
    SweepGrid,
    exceedance_counts,
    per_image_winners,
    run_sweep,
    select_spec,
    threshold_axis,
)
from lusline.wavelet import DenoiseSpec, denoise, dwt2, filter_bank, idwt2, snr

SMALL = PhantomRanges(width=64, height=64)


@pytest.fixture(scope="module")
def pairs():
    return [(p.clean, p.noisy) for p in corpus(range(500, 520), SMALL)]


def test_threshold_axis():
    assert threshold_axis(5)[:3] == [0, 5, 10] and threshold_axis(5)[-1] == 100
    assert threshold_axis(1) == list(range(102))
    with pytest.raises(ValueError):
        threshold_axis(0)


def test_single_pair_single_cell(pairs):
    clean, noisy = pairs[0]
    grid = run_sweep([(clean, noisy)], ["db4"], [3], [0])
    expected = snr(clean, idwt2(dwt2(noisy, "db4", 3), "db4"))
    assert grid.mean_snr[0, 0, 0] == pytest.approx(expected)
    assert grid.std_snr[0, 0, 0] == 0.0


def test_identical_pairs_saturate(pairs):
    clean = pairs[0][0]
    grid = run_sweep([(clean, clean), (clean, clean)], ["haar"], [2], [0])
    assert grid.saturated.all()
    assert math.isinf(grid.mean_snr[0, 0, 0]) and math.isnan(grid.std_snr[0, 0, 0])
    assert "inf,nan" in grid.to_csv()


def test_cell_means_match_scalar_recomputation(pairs):
    grid = run_sweep(pairs, ["haar", "sym17"], [5], [50])
    for fi, fam in enumerate(["haar", "sym17"]):
        vals = [snr(c, denoise(n, DenoiseSpec(fam, 5, 50))) for c, n in pairs]
        assert grid.mean_snr[fi, 0, 0] == pytest.approx(statistics.fmean(vals), abs=1e-9)
        assert grid.std_snr[fi, 0, 0] == pytest.approx(statistics.pstdev(vals), abs=1e-9)
        assert grid.n_images == len(pairs)


def test_dimension_mismatch_rejected(pairs):
    with pytest.raises(ValueError, match="differ"):
        run_sweep([(pairs[0][0], pairs[0][1][:32])], ["haar"], [2], [0])
    with pytest.raises(ValueError, match="empty"):
        run_sweep([], ["haar"], [2], [0])


def test_denoise_failure_names_cell():
    tiny = np.full((8, 8), 0.5)
    with pytest.raises(RuntimeError, match=r"\(haar, level 5\) on image 0"):
        run_sweep([(tiny, tiny)], ["haar"], [5], [0])


def _grid(per_image, families=None, levels=None, thresholds=None):
    per_image = np.asarray(per_image, dtype=float)
    f, l, t, _ = per_image.shape
    return SweepGrid(families or [f"f{i}" for i in range(f)], levels or [2, 3, 4, 5][:l],
                     thresholds or list(range(40, 40 + 10 * t, 10)), per_image)


def test_exceedance_single_cell():
    grid = exceedance_counts(_grid([[[[1.0, 2.0, 6.0]]]], ["haar"], [2], [50]))
    assert grid.exceed_count[0, 0, 0] == 1


def test_exceedance_identical_images():
    grid = exceedance_counts(_grid(np.full((2, 1, 3, 4), 7.0), ["haar", "db2"]))
    assert not grid.exceed_count.any()


def test_exceedance_hand_tally():
    # Three cells at one level: means 2, 4 and 3, so M = 4.
    snrs = [[[[1.0, 2.0, 3.0]]], [[[3.0, 4.0, 5.0]]], [[[0.0, 4.5, 4.5]]]]
    grid = exceedance_counts(_grid(snrs, ["haar", "db2", "db3"], [3], [50]))
    assert grid.exceed_count[:, 0, 0].tolist() == [0, 1, 2]
    assert (grid.exceed_count <= grid.n_images).all()


def test_exceedance_max_is_per_level():
    snrs = np.zeros((1, 2, 1, 2))
    snrs[0, 0, 0] = [10.0, 20.0]
    snrs[0, 1, 0] = [1.0, 2.0]
    grid = exceedance_counts(_grid(snrs, ["haar"], [2, 3], [50]))
    assert grid.exceed_count[0, :, 0].tolist() == [1, 1]


def test_select_single_family():
    rng = np.random.default_rng(1)
    grid = _grid(rng.normal(20, 1, (1, 4, 3, 5)), ["coif2"])
    assert select_spec(grid).family == "coif2"


def test_select_unanimous_winner():
    rng = np.random.default_rng(2)
    snrs = rng.normal(20, 1, (3, 4, 3, 6))
    snrs[1] += 100
    grid = _grid(snrs, ["haar", "db8", "sym4"])
    assert select_spec(grid).family == "db8"


def test_select_tie_prefers_shorter_filter():
    snrs = np.full((2, 1, 1, 4), 5.0)
    grid = _grid(snrs, ["db8", "db2"], [3], [50])
    assert select_spec(grid).family == "db2"
    assert per_image_winners(grid, 3, 50).tolist() == [1, 1, 1, 1]


def test_select_invariant_under_family_reordering():
    rng = np.random.default_rng(3)
    snrs = rng.normal(20, 2, (4, 4, 5, 9))
    fams = ["haar", "db4", "sym8", "sym17"]
    a = select_spec(_grid(snrs, fams))
    perm = [2, 0, 3, 1]
    b = select_spec(_grid(snrs[perm], [fams[i] for i in perm]))
    assert a == b


def test_select_empty_grid():
    with pytest.raises(ValueError):
        select_spec(SweepGrid(["haar"], [2], [50], np.zeros((1, 1, 1, 0))))


def _brute_force_select(snr_table, families, levels, thresholds):
    """Literal loops over a dict keyed by (family, level, threshold) -> per-image SNR list."""
    band = [t for t in thresholds if 40 <= t <= 60]
    def mean(xs):
        return sum(xs) / len(xs)
    def pstd(xs):
        m = mean(xs)
        return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))
    sens = {}
    for lev in levels:
        sens[lev] = mean([pstd([mean(snr_table[f, lev, t]) for t in band]) for f in families])
    level = min(levels, key=lambda lev: sens[lev])
    top = max(mean(snr_table[f, level, t]) for f in families for t in thresholds)
    totals = {t: sum(sum(1 for x in snr_table[f, level, t] if x > top) for f in families) for t in thresholds}
    best_total = max(totals.values())
    threshold = sorted((t for t in thresholds if totals[t] == best_total), key=lambda t: (abs(t - 50), t))[0]
    n = len(snr_table[families[0], level, threshold])
    tally = {f: 0 for f in families}
    key = lambda f: (len(filter_bank(f).analysis_low), f)
    for i in range(n):
        vals = {f: snr_table[f, level, threshold][i] for f in families}
        peak = max(vals.values())
        tally[sorted((f for f in families if vals[f] == peak), key=key)[0]] += 1
    most = max(tally.values())
    family = sorted((f for f in families if tally[f] == most), key=key)[0]
    return family, level, threshold


@pytest.mark.slow
def test_select_matches_brute_force_tally():
    pairs = [(p.clean, p.noisy) for p in corpus(range(600, 650), SMALL)]
    families, levels, thresholds = ["haar", "db4", "sym8", "coif1"], [2, 3, 4], [0, 20, 40, 50, 60, 80, 100]
    table = {}
    for f in families:
        for lev in levels:
            for t in thresholds:
                table[f, lev, t] = [snr(c, denoise(n, DenoiseSpec(f, lev, t))) for c, n in pairs]
    grid = run_sweep(pairs, families, levels, thresholds)
    spec = select_spec(grid)
    assert (spec.family, spec.level, spec.threshold) == _brute_force_select(table, families, levels, thresholds)


def test_parallel_equals_serial(pairs):
    args = (pairs[:6], ["haar", "db4", "sym8"], [2, 3], [0, 50, 100])
    serial = run_sweep(*args, jobs=1)
    parallel = run_sweep(*args, jobs=2)
    assert np.array_equal(serial.per_image, parallel.per_image)
    assert serial.to_csv() == parallel.to_csv()


def test_subset_mean_bound(pairs):
    grid = run_sweep(pairs, ["db4"], [3], [50])
    sub = run_sweep(pairs[:15], ["db4"], [3], [50])
    full = grid.per_image[0, 0, 0]
    removed = full[15:]
    n, k = len(full), len(removed)
    # mean(sub) - mean(full) = k/n * (mean(sub) - mean(removed))
    assert sub.mean_snr[0, 0, 0] - grid.mean_snr[0, 0, 0] == pytest.approx(
        k / n * (sub.mean_snr[0, 0, 0] - removed.mean()))


def test_csv_format(pairs):
    grid = run_sweep(pairs[:3], ["haar", "db2"], [2, 3], [0, 50])
    lines = grid.to_csv().split("\n")
    assert lines[0] == CSV_HEADER
    assert len([ln for ln in lines[1:] if ln]) == 2 * 2 * 2
    fam, lev, thr, mean, std, exceed, n = lines[1].split(",")
    assert (fam, lev, thr, n) == ("haar", "2", "0", "3")
    assert len(mean.split(".")[1]) == 6
    assert "\r" not in grid.to_csv()
