import numpy as np
import pytest

from breathflow.synth import texture


def smooth_texture(size=128, seed=0, margin=0):
    """Gradient-rich test image from the synth generator's texture recipe."""
    return texture(size + 2 * margin, size + 2 * margin, seed)


def shift_rows_replicate(img, k=1):
    """out[y] = img[y - k], first rows replicated."""
    out = np.empty_like(img)
    out[k:] = img[:-k]
    out[:k] = img[:1]
    return out


def shift_bilinear_x(img, dx):
    """out[y, x] = img[y, x - dx] by linear interpolation, edges clamped."""
    w = img.shape[1]
    src = np.clip(np.arange(w) - dx, 0, w - 1)
    x0 = np.floor(src).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    f = src - x0
    return img[:, x0] * (1 - f) + img[:, x1] * f


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
