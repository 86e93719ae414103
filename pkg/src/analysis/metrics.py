"""
Full-reference image quality metrics.

Both metrics compare an RGB prediction against its clean reference with a
dynamic range of 1. SSIM is computed per channel with a Gaussian
window (sigma 1.5, 11 taps unless asked otherwise) and averaged over channels.
"""
import math
from dataclasses import dataclass
from functools import partial
from typing import Dict

import numpy as np
from scipy.ndimage import gaussian_filter
from skimage.metrics import peak_signal_noise_ratio

from ..utils.exceptions import ParameterError, ShapeError

SSIM_SIGMA = 1.5


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and reference {gt.shape} differ in shape")


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """10 * log10(1 / MSE); identical images give +inf."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_pair(pred, gt)
    if not np.any(pred != gt):
        return math.inf
    with np.errstate(divide="ignore"):
        return float(peak_signal_noise_ratio(gt, pred, data_range=1.0))


def _ssim_map_mean(x: np.ndarray, y: np.ndarray, radius: int, c1: float, c2: float) -> float:
    blur = partial(gaussian_filter, sigma=SSIM_SIGMA, radius=radius, mode="reflect")
    mu_x, mu_y = blur(x), blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))
    h, w = s.shape
    return float(s[radius:h - radius, radius:w - radius].mean())


def ssim(pred: np.ndarray, gt: np.ndarray, window: int = 11, k1: float = 0.01, k2: float = 0.03) -> float:
    """
    Mean structural similarity, channels averaged.

    The Gaussian kernel spans exactly `window` taps; the window shrinks to the
    largest odd size that fits images smaller than it. Borders within the kernel
    radius are left out of the mean.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_pair(pred, gt)
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be odd and >= 1, got {window}")
    smallest = min(gt.shape[0], gt.shape[1])
    win = max(min(window, smallest if smallest % 2 else smallest - 1), 1)
    radius = (win - 1) // 2
    c1, c2 = k1 ** 2, k2 ** 2
    if gt.ndim == 2:
        return _ssim_map_mean(pred, gt, radius, c1, c2)
    return float(np.mean([_ssim_map_mean(pred[..., c], gt[..., c], radius, c1, c2) for c in range(gt.shape[2])]))


@dataclass(frozen=True)
class MetricRow:
    sample_id: str
    psnr: float
    ssim: float

    def __post_init__(self):
        if self.ssim > 1.0 + 1e-9:
            raise ParameterError(f"ssim above 1 for {self.sample_id}: {self.ssim}")

    @property
    def is_perfect(self) -> bool:
        return math.isinf(self.psnr)

    def to_dict(self) -> Dict[str, object]:
        return {'sample_id': self.sample_id, 'psnr': self.psnr, 'ssim': self.ssim}
