"""
Image representation, PNG I/O, cropping and augmentation.

Images are plain numpy arrays so every other module can use them directly:

* ImageRGB  -- float array of shape (H, W, 3), channel order R, G, B, values in [0, 1]
* ImageGray -- float array of shape (H, W), values in [0, 1]

The helpers here validate that contract at the package boundaries; internal
computations are free to work on unvalidated intermediates.
"""
import logging
import os
from typing import List, Optional, Tuple

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from ..utils.exceptions import DimensionError, ImageFormatError, ParameterError

ImageRGB = np.ndarray
ImageGray = np.ndarray

logger = logging.getLogger(__name__)


def check_rgb(img: np.ndarray, name: str = "image") -> ImageRGB:
    """Validate an ImageRGB and return it as float64."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"{name} must be at least 1x1, got {img.shape}")
    img = img.astype(np.float64, copy=False)
    if not np.all(np.isfinite(img)):
        raise ParameterError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ParameterError(f"{name} values must lie in [0, 1]")
    return img


def check_gray(img: np.ndarray, name: str = "map") -> ImageGray:
    """Validate an ImageGray and return it as float64."""
    img = np.asarray(img)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"{name} must have shape (H, W), got {img.shape}")
    img = img.astype(np.float64, copy=False)
    if not np.all(np.isfinite(img)):
        raise ParameterError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ParameterError(f"{name} values must lie in [0, 1]")
    return img


def clamp01(img: np.ndarray) -> np.ndarray:
    """Explicit clamp to the unit interval."""
    return np.clip(img, 0.0, 1.0)


def luminance(img: ImageRGB) -> ImageGray:
    """Channel mean, the luminance proxy used throughout the package."""
    return np.asarray(img).mean(axis=2)


def load_image(path: str) -> ImageRGB:
    """
    Load an 8-bit PNG as an ImageRGB.

    Each 8-bit value v becomes v / 255. Grayscale and RGBA files are converted
    to RGB.

    Raises:
        FileNotFoundError: the file does not exist
        ImageFormatError: the file cannot be decoded
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"Image not found: {path}")
    try:
        with Image.open(path) as pil:
            pil.load()
            if pil.mode != "RGB":
                pil = pil.convert("RGB")
            data = np.asarray(pil, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageFormatError(f"Cannot decode image {path}: {e}") from e
    return data.astype(np.float64) / 255.0


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.round(clamp01(img) * 255.0).astype(np.uint8)


def save_image(img: ImageRGB, path: str) -> None:
    """
    Save an ImageRGB as an 8-bit PNG.

    Values are rounded to the nearest 8-bit level, so a save/load round trip
    changes any value by at most 1/510. Unwritable paths raise OSError.
    """
    img = check_rgb(img)
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    Image.fromarray(_quantize(img)).save(path, format="PNG")


def save_gray(img: ImageGray, path: str) -> None:
    """Dump a single-channel map (prior, transmission) as a grayscale PNG."""
    img = check_gray(img)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    Image.fromarray(_quantize(img)).save(path, format="PNG")


def crop_offsets(shape: Tuple[int, int], crop: int, count: int, seed: int) -> List[Tuple[int, int]]:
    """
    Draw `count` top-left offsets for crop x crop windows.

    The offsets are a pure function of (shape, crop, count, seed) and windows
    are allowed to overlap.
    """
    height, width = int(shape[0]), int(shape[1])
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if crop < 1 or crop > min(height, width):
        raise DimensionError(f"crop {crop} does not fit an image of {height}x{width}")
    rng = np.random.default_rng(seed)
    ys = rng.integers(0, height - crop + 1, size=count)
    xs = rng.integers(0, width - crop + 1, size=count)
    return [(int(y), int(x)) for y, x in zip(ys, xs)]


def random_overlap_crops(img: ImageRGB, crop: int, count: int, seed: int) -> List[ImageRGB]:
    """Return `count` possibly overlapping crop x crop windows of `img`."""
    img = check_rgb(img)
    offsets = crop_offsets(img.shape[:2], crop, count, seed)
    return [img[y:y + crop, x:x + crop].copy() for y, x in offsets]


def dihedral_transform(img: np.ndarray, rotation: int, flip: bool) -> np.ndarray:
    """Rotate by rotation * 90 degrees counter-clockwise, then optionally flip horizontally."""
    out = np.rot90(img, k=rotation % 4, axes=(0, 1))
    if flip:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def augment(
    img: ImageRGB,
    pair: Optional[ImageRGB] = None,
    seed: int = 0,
) -> Tuple[ImageRGB, Optional[ImageRGB]]:
    """
    Apply one random element of the dihedral group to `img` and `pair`.

    Rotation (0, 90, 180 or 270 degrees) and horizontal flip are sampled
    independently and uniformly; `pair` receives exactly the same transform.
    """
    img = np.asarray(img)
    if pair is not None:
        pair = np.asarray(pair)
        if pair.shape != img.shape:
            raise DimensionError(f"pair shape {pair.shape} does not match image shape {img.shape}")
    rng = np.random.default_rng(seed)
    rotation = int(rng.integers(0, 4))
    flip = bool(rng.integers(0, 2))
    out = dihedral_transform(img, rotation, flip)
    out_pair = dihedral_transform(pair, rotation, flip) if pair is not None else None
    return out, out_pair


def to_tensor(img: ImageRGB, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, 3) array to a (1, 3, H, W) tensor."""
    arr = np.ascontiguousarray(np.asarray(img).transpose(2, 0, 1))
    return torch.from_numpy(arr).to(dtype).unsqueeze(0)


def to_image(tensor: torch.Tensor) -> ImageRGB:
    """(1, 3, H, W) or (3, H, W) tensor to a clamped (H, W, 3) float64 array."""
    t = tensor.detach().cpu()
    if t.dim() == 4:
        if t.shape[0] != 1:
            raise DimensionError(f"expected a single image, got batch of {t.shape[0]}")
        t = t[0]
    return clamp01(t.double().numpy().transpose(1, 2, 0))
