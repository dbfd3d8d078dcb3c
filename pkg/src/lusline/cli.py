"""``lusline`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .core import PatternClass
from .detect import PipelineConfig, detect_lines, prepare_frame
from .formats import (
    FormatError,
    dump_json,
    load_image,
    parse_roi_config,
    render_overlay,
    result_from_dict,
    result_to_dict,
    save_image,
)
from .geometry import fit_warp
from .radon import radon_transform
from .phantom import NoiseSpec, PhantomRanges, generate_phantom, sample_spec
from .scoring import evaluate_corpus
from .sweep import run_sweep, select_spec, threshold_axis
from .wavelet import FAMILIES, DenoiseSpec, filter_table

CONFIG_ENV = "LUSLINE_CONFIG"
MASK_SUFFIX = {PatternClass.PLEURAL: "pleural", PatternClass.ALINE: "aline", PatternClass.BLINE: "bline"}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _write_manifest(path: Path, command: str, config: dict, inputs, outputs, started: float, reproducible: bool,
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "reproducible": reproducible,
        "started_at": 0.0 if reproducible else round(started, 3),
        "duration_s": 0.0 if reproducible else round(time.time() - started, 3),
        **(extra or {}),
    }
    path.write_text(dump_json(manifest))


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("E_IO", f"cannot create output directory {path}: {exc}") from None
    if not os.access(path, os.W_OK):
        raise CliError("E_IO", f"output directory {path} is not writable")
    return path


# phantom ---------------------------------------------------------------

def _phantom_job(args):
    idx, seed, ranges, out = args
    ph = generate_phantom(sample_spec(seed, ranges))
    stem = f"phantom_{idx:04d}"
    files = {"clean": f"{stem}_clean.pgm", "noisy": f"{stem}_noisy.pgm"}
    save_image(out / files["clean"], ph.clean)
    save_image(out / files["noisy"], ph.noisy)
    for cls, suffix in MASK_SUFFIX.items():
        files[f"mask_{suffix}"] = f"{stem}_mask_{suffix}.pgm"
        save_image(out / files[f"mask_{suffix}"], ph.masks[cls].astype(np.float64))
    return {"stem": stem, "seed": int(seed), "spec": ph.spec.to_dict(), "files": files}


def cmd_phantom(args) -> int:
    started = time.time()
    out = _ensure_dir(Path(args.out))
    try:
        ranges = PhantomRanges(
            width=args.width,
            height=args.height,
            pleural_depth=tuple(args.depth),
            pleural_tilt=tuple(args.tilt),
            n_alines=tuple(args.alines),
            n_blines=tuple(args.blines),
            noise=NoiseSpec(args.gaussian, args.salt_pepper, args.poisson, args.speckle),
        )
    except ValueError as exc:
        raise CliError("E_RANGE", str(exc)) from None
    if args.count < 1:
        raise CliError("E_RANGE", "--count must be >= 1")
    seeds = np.random.default_rng(args.seed).integers(0, 2**63 - 1, size=args.count)
    jobs = [(i, int(s), ranges, out) for i, s in enumerate(seeds)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_phantom_job, jobs))
    else:
        records = [_phantom_job(j) for j in jobs]
    outputs = [f for r in records for f in r["files"].values()]
    _write_manifest(out / "manifest.json", "phantom", {"count": args.count, "seed": args.seed, "ranges": asdict(ranges)},
                    [], outputs, started, args.reproducible, {"phantoms": records})
    print(f"wrote {args.count} phantoms to {out}")
    return 0


# sweep -----------------------------------------------------------------

def _corpus_pairs(corpus_dir: Path):
    if not corpus_dir.is_dir():
        raise CliError("E_IO", f"corpus directory {corpus_dir} does not exist")
    cleans = {p.name[: -len("_clean.pgm")]: p for p in corpus_dir.glob("*_clean.pgm")}
    noisies = {p.name[: -len("_noisy.pgm")]: p for p in corpus_dir.glob("*_noisy.pgm")}
    stems = sorted(set(cleans) | set(noisies))
    if not stems:
        raise CliError("E_PAIRS", f"no *_clean.pgm / *_noisy.pgm pairs in {corpus_dir}")
    for stem in stems:
        if stem not in cleans:
            raise CliError("E_PAIRS", f"missing clean image for {stem} ({stem}_clean.pgm)")
        if stem not in noisies:
            raise CliError("E_PAIRS", f"missing noisy image for {stem} ({stem}_noisy.pgm)")
    return stems, cleans, noisies


def _families(spec: str) -> list[str]:
    if spec == "all":
        return list(FAMILIES)
    fams = [f.strip() for f in spec.split(",") if f.strip()]
    bad = [f for f in fams if f not in FAMILIES]
    if bad:
        raise CliError("E_FAMILY", f"unknown wavelet families {bad}")
    return fams


def cmd_sweep(args) -> int:
    started = time.time()
    stems, cleans, noisies = _corpus_pairs(Path(args.corpus))
    corpus = [(load_image(cleans[s]), load_image(noisies[s])) for s in stems]
    families = _families(args.families)
    levels = [int(x) for x in args.levels.split(",")]
    if any(l not in (2, 3, 4, 5) for l in levels):
        raise CliError("E_RANGE", "levels must be within 2..5")
    if args.thresholds:
        thresholds = [int(x) for x in args.thresholds.split(",")]
    else:
        thresholds = threshold_axis(args.stride)
    if any(not 0 <= t <= 101 for t in thresholds):
        raise CliError("E_RANGE", "thresholds must be within 0..101")
    grid = run_sweep(corpus, families, levels, thresholds, mode=args.mode, jobs=args.jobs)
    out = Path(args.out)
    _ensure_dir(out.parent if str(out.parent) else Path("."))
    out.write_text(grid.to_csv(), newline="\n")
    spec = select_spec(grid)
    print(f"selected: family={spec.family} level={spec.level} threshold={spec.threshold} mode={spec.mode}")
    _write_manifest(
        out.with_suffix(".manifest.json"), "sweep",
        {"families": families, "levels": levels, "thresholds": thresholds, "mode": args.mode,
         "selected_spec": asdict(spec)},
        [str(Path(args.corpus) / f"{s}_noisy.pgm") for s in stems], [str(out)], started, args.reproducible,
    )
    return 0


# detect ----------------------------------------------------------------

def _pipeline_config(path: str | None) -> PipelineConfig:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return PipelineConfig()
    try:
        return PipelineConfig.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise CliError("E_CONFIG", f"cannot load pipeline config {path}: {exc}") from None


def _denoise_spec(args) -> DenoiseSpec | None:
    if args.no_denoise:
        return None
    try:
        return DenoiseSpec(args.family, args.level, args.threshold, args.mode)
    except ValueError as exc:
        raise CliError("E_RANGE", str(exc)) from None


def _image_stem(path: Path) -> str:
    return path.stem


def _detect_job(job):
    path, roi, spec, cfg, out_size, out, overlay, dump_sinogram = job
    img = load_image(path)
    stem = _image_stem(path)
    rect = prepare_frame(img, roi, spec, out_size)
    result = detect_lines(rect, cfg, {"image": stem})
    chash = cfg.digest({"denoise": None if spec is None else asdict(spec),
                        "roi": None if roi is None else [list(c) for c in roi.corners], "frame": list(out_size)})
    (out / f"{stem}.json").write_text(dump_json(result_to_dict(result, stem, chash)))
    written = [f"{stem}.json"]
    if overlay:
        warp = None if roi is None else fit_warp(roi, *out_size)
        render_overlay(img, result, warp).save(out / f"{stem}_overlay.png", format="PNG")
        written.append(f"{stem}_overlay.png")
    if dump_sinogram:
        # Rows are angles -90..179 in 1-degree steps, columns are offsets.
        norm = radon_transform(rect, np.arange(-90.0, 180.0)).normalized
        peak = norm.max()
        save_image(out / f"{stem}_sinogram.pgm", norm / peak if peak > 0 else norm)
        written.append(f"{stem}_sinogram.pgm")
    return written


def cmd_detect(args) -> int:
    started = time.time()
    cfg = _pipeline_config(args.config)
    spec = _denoise_spec(args)
    rois = None
    if args.roi_config:
        try:
            rois = parse_roi_config(Path(args.roi_config).read_text())
        except OSError as exc:
            raise CliError("E_IO", f"cannot read ROI config: {exc}") from None
    out = _ensure_dir(Path(args.out))
    jobs = []
    for p in map(Path, args.images):
        if not p.is_file():
            raise CliError("E_IO", f"cannot read image {p}")
        roi = None
        if rois is not None:
            stem = _image_stem(p)
            if stem not in rois:
                raise CliError("E_ROI", f"no ROI entry for image stem {stem!r} in {args.roi_config}")
            roi = rois[stem]
        jobs.append((p, roi, spec, cfg, (args.width, args.height), out, args.overlay,
                     args.dump_sinogram))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            written = list(pool.map(_detect_job, jobs))
    else:
        written = [_detect_job(j) for j in jobs]
    _write_manifest(out / "manifest.json", "detect",
                    {"pipeline": cfg.to_dict(), "denoise": None if spec is None else asdict(spec),
                     "roi_config": args.roi_config, "frame": [args.width, args.height]},
                    args.images, [f for w in written for f in w], started, args.reproducible)
    print(f"wrote {len(jobs)} detection files to {out}")
    return 0


# eval ------------------------------------------------------------------

def _truth_stem(stem: str) -> str:
    for suffix in ("_noisy", "_clean"):
        if stem.endswith(suffix):
            return stem[: -len(suffix)]
    return stem


def cmd_eval(args) -> int:
    started = time.time()
    det_dir, truth_dir = Path(args.detections), Path(args.truth)
    det_files = sorted(p for p in det_dir.glob("*.json") if p.name != "manifest.json")
    if not det_files:
        raise CliError("E_PAIRS", f"no detection JSON files in {det_dir}")
    items, unmatched = [], []
    for p in det_files:
        stem = _truth_stem(p.stem)
        mask_paths = {cls: truth_dir / f"{stem}_mask_{sfx}.pgm" for cls, sfx in MASK_SUFFIX.items()}
        if not all(m.is_file() for m in mask_paths.values()):
            unmatched.append(p.stem)
            continue
        result = result_from_dict(json.loads(p.read_text()))
        masks = {cls: load_image(m) > 0.5 for cls, m in mask_paths.items()}
        items.append((stem, result, masks))
    if unmatched:
        raise CliError("E_PAIRS", f"no truth masks for detections: {', '.join(unmatched)}")
    report = evaluate_corpus(items, args.tolerance, args.stroke)
    out = Path(args.out)
    _ensure_dir(out.parent if str(out.parent) else Path("."))
    out.write_text(dump_json(report.to_dict()))
    for cls, s in report.classes.items():
        p = "undefined" if s.precision is None else f"{s.precision:.4f}"
        r = "undefined" if s.recall is None else f"{s.recall:.4f}"
        print(f"{cls.value:8s} P={p} R={r} F0.5={s.f05:.4f} F1={s.f1:.4f} F2={s.f2:.4f}")
    _write_manifest(out.with_suffix(".manifest.json"), "eval",
                    {"tolerance": args.tolerance, "stroke_width": args.stroke},
                    [str(p) for p in det_files], [str(out)], started, args.reproducible)
    return 0


# overlay / filters -----------------------------------------------------

def cmd_overlay(args) -> int:
    started = time.time()
    img = load_image(args.image)
    result = result_from_dict(json.loads(Path(args.detections).read_text()))
    warp = None
    if args.roi_config:
        rois = parse_roi_config(Path(args.roi_config).read_text())
        stem = _image_stem(Path(args.image))
        if stem not in rois:
            raise CliError("E_ROI", f"no ROI entry for image stem {stem!r}")
        warp = fit_warp(rois[stem], result.width, result.height)
    out = Path(args.out)
    render_overlay(img, result, warp).save(out, format="PNG")
    _write_manifest(out.with_suffix(".manifest.json"), "overlay", {"roi_config": args.roi_config},
                    [args.image, args.detections], [str(out)], started, args.reproducible)
    return 0


def cmd_filters(args) -> int:
    sys.stdout.write(filter_table(_families(args.families)))
    return 0


# parser ----------------------------------------------------------------

def _add_common(p):
    p.add_argument("--reproducible", action="store_true", help="zero manifest timestamps for byte-identical reruns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lusline", description="Lung-ultrasound line pattern extraction")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a seeded synthetic phantom corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--alines", type=int, nargs=2, default=(0, 3), metavar=("LO", "HI"))
    p.add_argument("--blines", type=int, nargs=2, default=(0, 5), metavar=("LO", "HI"))
    p.add_argument("--depth", type=float, nargs=2, default=(0.13, 0.2), metavar=("LO", "HI"))
    p.add_argument("--tilt", type=float, nargs=2, default=(-5.0, 5.0), metavar=("LO", "HI"))
    p.add_argument("--gaussian", type=float, default=0.05)
    p.add_argument("--speckle", type=float, default=0.3)
    p.add_argument("--salt-pepper", type=float, default=0.0)
    p.add_argument("--poisson", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("sweep", help="wavelet family x level x threshold SNR grid search")
    p.add_argument("--corpus", required=True)
    p.add_argument("--families", default="haar,db4,sym8,sym17", help="comma list or 'all'")
    p.add_argument("--levels", default="2,3,4,5")
    p.add_argument("--thresholds", default=None, help="comma list; overrides --stride")
    p.add_argument("--stride", type=int, default=5)
    p.add_argument("--mode", choices=("hard", "soft"), default="hard")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("detect", help="detect pleural, A- and B-lines")
    p.add_argument("images", nargs="+")
    p.add_argument("--roi-config", default=None, help="stem = x0,y0 x1,y1 x2,y2 x3,y3 records; omit for rectified input")
    p.add_argument("--config", default=None, help=f"pipeline config JSON (default: ${CONFIG_ENV})")
    p.add_argument("--family", default="sym17")
    p.add_argument("--level", type=int, default=5)
    p.add_argument("--threshold", type=int, default=50)
    p.add_argument("--mode", choices=("hard", "soft"), default="hard")
    p.add_argument("--no-denoise", action="store_true")
    p.add_argument("--width", type=int, default=512, help="rectified frame width")
    p.add_argument("--height", type=int, default=512, help="rectified frame height")
    p.add_argument("--overlay", action="store_true")
    p.add_argument("--dump-sinogram", action="store_true", help="also write the normalized sinogram as {stem}_sinogram.pgm")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against truth masks")
    p.add_argument("--detections", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--tolerance", type=int, default=3)
    p.add_argument("--stroke", type=int, default=5)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("overlay", help="render detections onto the source image")
    p.add_argument("--image", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--roi-config", default=None)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("filters", help="dump the wavelet filter-bank catalog")
    p.add_argument("--families", default="all")
    p.set_defaults(func=cmd_filters)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"lusline: error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"lusline: error[E_FORMAT]: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"lusline: error[E_RUNTIME]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
