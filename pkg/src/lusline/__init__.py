"""Lung-ultrasound pleural/A-line/B-line extraction with wavelet denoising and Radon peaks."""

__version__ = "0.1.0"

from .core import PatternClass, crop_rows, dilate, gaussian_blur
from .detect import DetectionResult, PipelineConfig, detect_lines, run_pipeline
from .geometry import TrapezoidROI, WarpMap, fit_warp, map_detection_back, warp_to_rect
from .phantom import NoiseSpec, PhantomSpec, apply_noise, generate_phantom
from .radon import LineDetection, Sinogram, find_local_maxima, radon_transform
from .scoring import evaluate_corpus, f_beta, precision_recall
from .sweep import SweepGrid, run_sweep, select_spec
from .wavelet import DenoiseSpec, denoise, dwt2, filter_bank, idwt2, snr
