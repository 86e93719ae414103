"""
Physical priors for nighttime haze.

Dark-channel and bright-channel maps, atmospheric-light estimation, the two
prior-based transmission estimates, the soft-matting Laplacian and the color
guided filter. Numpy functions take ImageRGB/ImageGray arrays; the `_torch`
twins take (B, 3, H, W) tensors and produce identical values.
"""
import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sparse
import torch
import torch.nn.functional as F
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import maximum_filter, minimum_filter, uniform_filter

from ..data.image_io import ImageGray, ImageRGB, check_gray, check_rgb
from ..utils.exceptions import DimensionError, NumericGuardError, ParameterError, ResourceLimitError

logger = logging.getLogger(__name__)

T_MIN = 0.05
OMEGA = 0.95
AIRLIGHT_FRACTION = 0.001
AIRLIGHT_FLOOR = 1e-3
MATTING_MAX_PIXELS = 64 * 64


def _check_patch(patch: int) -> int:
    if int(patch) != patch or patch < 1 or patch % 2 == 0:
        raise ParameterError(f"patch must be an odd integer >= 1, got {patch}")
    return int(patch)


def dark_channel(img: ImageRGB, patch: int = 15) -> ImageGray:
    """Patch-wise minimum over the channel minimum; borders replicate edge pixels."""
    patch = _check_patch(patch)
    img = check_rgb(img)
    return minimum_filter(img.min(axis=2), size=patch, mode="nearest")


def bright_channel(img: ImageRGB, patch: int = 15) -> ImageGray:
    """Patch-wise maximum over the channel maximum; borders replicate edge pixels."""
    patch = _check_patch(patch)
    img = check_rgb(img)
    return maximum_filter(img.max(axis=2), size=patch, mode="nearest")


def dark_channel_torch(x: torch.Tensor, patch: int) -> torch.Tensor:
    """(B, 3, H, W) -> (B, 1, H, W) dark channel with replicated borders."""
    patch = _check_patch(patch)
    m = x.min(dim=1, keepdim=True).values
    if patch == 1:
        return m
    r = patch // 2
    return -F.max_pool2d(F.pad(-m, (r, r, r, r), mode="replicate"), patch, stride=1)


def bright_channel_torch(x: torch.Tensor, patch: int) -> torch.Tensor:
    """(B, 3, H, W) -> (B, 1, H, W) bright channel with replicated borders."""
    patch = _check_patch(patch)
    m = x.max(dim=1, keepdim=True).values
    if patch == 1:
        return m
    r = patch // 2
    return F.max_pool2d(F.pad(m, (r, r, r, r), mode="replicate"), patch, stride=1)


@dataclass(frozen=True)
class PriorMaps:
    """Dark and bright channel of one image at a given patch size."""
    dark: ImageGray
    bright: ImageGray
    patch: int

    @property
    def prior_sum(self) -> ImageGray:
        return self.dark + self.bright


def compute_prior_maps(img: ImageRGB, patch: int = 15) -> PriorMaps:
    return PriorMaps(dark_channel(img, patch), bright_channel(img, patch), patch)


@dataclass(frozen=True)
class AtmosphericLight:
    """Per-channel airlight, each component in [0, 1] and not all zero."""
    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        if a.shape != (3,):
            raise DimensionError(f"atmospheric light must have 3 components, got {a.shape}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise ParameterError(f"atmospheric light components must lie in [0, 1], got {a}")
        if not np.any(a > 0):
            raise ParameterError("atmospheric light must not be all zero")
        object.__setattr__(self, "a", a)

    @property
    def max_channel(self) -> float:
        return float(self.a.max())

    def to_list(self) -> list:
        return [float(v) for v in self.a]


LightLike = Union[AtmosphericLight, Sequence[float], np.ndarray]


def as_light(a: LightLike) -> AtmosphericLight:
    return a if isinstance(a, AtmosphericLight) else AtmosphericLight(np.asarray(a, dtype=np.float64))


def estimate_atmospheric_light(img: ImageRGB, patch: int = 15, fraction: float = AIRLIGHT_FRACTION) -> AtmosphericLight:
    """
    Mean color of the brightest `fraction` of dark-channel pixels.

    At least one pixel is always selected; ties are broken by pixel order.
    Components are floored at a small positive value so the result never
    degenerates to black.
    """
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must lie in (0, 1], got {fraction}")
    img = check_rgb(img)
    dark = dark_channel(img, patch).reshape(-1)
    count = min(dark.size, max(1, int(np.ceil(fraction * dark.size - 1e-9))))
    order = np.argsort(dark, kind="stable")[dark.size - count:]
    a = img.reshape(-1, 3)[order].mean(axis=0)
    return AtmosphericLight(np.clip(a, AIRLIGHT_FLOOR, 1.0))


def dcp_transmission(
    img: ImageRGB,
    a: LightLike,
    patch: int = 15,
    omega: float = OMEGA,
    t_min: float = T_MIN,
) -> ImageGray:
    """t = 1 - omega * dark_channel(img / a), clamped to [t_min, 1]."""
    if not 0.0 < omega <= 1.0:
        raise ParameterError(f"omega must lie in (0, 1], got {omega}")
    patch = _check_patch(patch)
    img = check_rgb(img)
    light = np.asarray(a.a if isinstance(a, AtmosphericLight) else a, dtype=np.float64).reshape(3)
    if np.any(light <= 0.0):
        raise NumericGuardError(f"atmospheric light has a zero component: {light}")
    normalized = (img / light).min(axis=2)
    t = 1.0 - omega * minimum_filter(normalized, size=patch, mode="nearest")
    return np.clip(t, t_min, 1.0)


def bcp_transmission(
    img: ImageRGB,
    a: LightLike,
    patch: int = 15,
    t_min: float = T_MIN,
    eps: float = 1e-3,
) -> ImageGray:
    """
    t = (bright_channel(img) - max(a)) / (1 - max(a)), clamped to [t_min, 1].

    When max(a) is within `eps` of 1 the ratio is meaningless and t = 1.
    """
    light = as_light(a)
    bright = bright_channel(img, patch)
    a_max = light.max_channel
    if a_max >= 1.0 - eps:
        return np.ones_like(bright)
    return np.clip((bright - a_max) / (1.0 - a_max), t_min, 1.0)


@dataclass(frozen=True)
class MattingLaplacian:
    """
    Soft-matting Laplacian of an image.

    `matrix` is an n x n symmetric CSR matrix with zero row sums, n = H * W in
    row-major pixel order.
    """
    matrix: sparse.csr_matrix
    shape: tuple
    window: int
    epsilon: float

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    def quadratic(self, x: np.ndarray) -> float:
        """x^T L x for a map of `shape` (or its flattening)."""
        v = np.asarray(x, dtype=np.float64).reshape(-1)
        return float(v @ (self.matrix @ v))

    def as_torch(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        coo = self.matrix.tocoo()
        indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
        values = torch.from_numpy(coo.data).to(dtype)
        return torch.sparse_coo_tensor(indices, values, (self.n, self.n)).coalesce()


def build_matting_laplacian(
    img: ImageRGB,
    window: int = 3,
    epsilon: float = 1e-7,
    max_pixels: int = MATTING_MAX_PIXELS,
) -> MattingLaplacian:
    """
    Assemble the matting Laplacian over all windows fully inside the image.

    Each window w adds  delta_ij - (1 + (I_i - mu)^T (Sigma + eps/|w| Id)^-1 (I_j - mu)) / |w|
    to every pixel pair (i, j) it contains.

    Raises:
        ResourceLimitError: the image has more than `max_pixels` pixels
    """
    window = _check_patch(window)
    if epsilon <= 0:
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    img = check_rgb(img)
    height, width = img.shape[:2]
    n = height * width
    if n > max_pixels:
        raise ResourceLimitError(
            f"matting Laplacian of a {height}x{width} image exceeds the {max_pixels}-pixel budget"
        )

    if height < window or width < window:
        return MattingLaplacian(sparse.csr_matrix((n, n)), (height, width), window, epsilon)

    size = window * window
    patches = sliding_window_view(img, (window, window), axis=(0, 1))
    colors = patches.reshape(-1, 3, size).transpose(0, 2, 1)
    index = sliding_window_view(np.arange(n).reshape(height, width), (window, window)).reshape(-1, size)

    centered = colors - colors.mean(axis=1, keepdims=True)
    cov = np.einsum("kmi,kmj->kij", centered, centered) / size
    inv = np.linalg.inv(cov + (epsilon / size) * np.eye(3))
    affinity = (1.0 + np.einsum("kai,kij,kbj->kab", centered, inv, centered)) / size
    values = np.eye(size)[None] - affinity

    rows = np.broadcast_to(index[:, :, None], values.shape).ravel()
    cols = np.broadcast_to(index[:, None, :], values.shape).ravel()
    matrix = sparse.coo_matrix((values.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    matrix = ((matrix + matrix.T) * 0.5).tocsr()
    # rows sum to zero analytically; remove the rounding residue on the diagonal
    matrix = (matrix - sparse.diags(np.asarray(matrix.sum(axis=1)).ravel())).tocsr()
    logger.debug(f"Matting Laplacian for {height}x{width}: {matrix.nnz} non-zeros")
    return MattingLaplacian(matrix, (height, width), window, epsilon)


def box_filter(x: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a (2r+1) x (2r+1) window with reflected borders, per channel."""
    size = 2 * radius + 1
    if x.ndim == 2:
        return uniform_filter(x, size=size, mode="reflect")
    return uniform_filter(x, size=(size, size) + (1,) * (x.ndim - 2), mode="reflect")


def guided_filter(guide: ImageRGB, src: ImageGray, radius: int = 8, eps: float = 1e-3) -> ImageGray:
    """
    Color-guided filter of a single-channel map.

    Per window: q = a^T I + b with a = (Sigma + eps Id)^-1 cov(I, p) and
    b = mean(p) - a^T mean(I); a and b are then box-averaged. Output clamped to [0, 1].
    """
    guide = check_rgb(guide, "guide")
    src = check_gray(src, "src")
    if guide.shape[:2] != src.shape:
        raise DimensionError(f"guide {guide.shape[:2]} and src {src.shape} differ in size")
    if radius < 0 or eps <= 0:
        raise ParameterError(f"radius must be >= 0 and eps > 0, got {radius}, {eps}")

    mean_i = box_filter(guide, radius)
    mean_p = box_filter(src, radius)
    cov_ip = box_filter(guide * src[..., None], radius) - mean_i * mean_p[..., None]
    corr_ii = box_filter(guide[..., :, None] * guide[..., None, :], radius)
    sigma = corr_ii - mean_i[..., :, None] * mean_i[..., None, :]

    a = np.linalg.solve(sigma + eps * np.eye(3), cov_ip[..., None])[..., 0]
    b = mean_p - np.sum(a * mean_i, axis=2)
    q = np.sum(box_filter(a, radius) * guide, axis=2) + box_filter(b, radius)
    return np.clip(q, 0.0, 1.0)
