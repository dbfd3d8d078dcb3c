import numpy as np
import pytest

from lusline.phantom import NoiseSpec, PhantomSpec, generate_phantom

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def full_phantom():
    """512x512 phantom with one pleural line, two A-lines and three B-lines."""
    spec = PhantomSpec(
        pleural_depth=0.16, pleural_tilt=2.0, n_alines=2, n_blines=3,
        bline_columns=(0.25, 0.5, 0.75), noise=NoiseSpec(gaussian_sigma=0.05, speckle_sigma=0.3), seed=77,
    )
    return generate_phantom(spec)


def horizontal_band_image(height, width, rows, intensities, background=0.05, sigma=1.5):
    """Background plus Gaussian-profile horizontal bands centered on ``rows``."""
    y = np.arange(height, dtype=np.float64)[:, None]
    img = np.full((height, width), background)
    for r, a in zip(rows, intensities):
        img = np.maximum(img, a * np.exp(-0.5 * ((y - r) / sigma) ** 2) * np.ones((1, width)))
    return img
