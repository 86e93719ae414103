"""
Procedural nighttime-haze scenes.

Renders paired clean/hazy scenes: a low-light base with textured structures and
colored point lights, a normalized depth map, a spatially variant airlight that
blends toward each light's color, additive per-light glow, and the post effects
(bloom, motion blur, sensor noise) applied to the hazy member only.
"""
import logging
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import convolve, gaussian_filter
from tqdm import tqdm

from ..data.image_io import ImageGray, ImageRGB, check_gray, check_rgb, clamp01, crop_offsets, save_image
from ..data.manifest import CLEAN_DIR, HAZY_DIR, MANIFEST_NAME, DatasetManifest, ManifestRecord, assign_splits
from ..utils.error_logger import ErrorLogger
from ..utils.exceptions import DimensionError, ParameterError

logger = logging.getLogger(__name__)

# structures never rise more than this above the ambient level
TEXTURE_CEILING = 0.2
# light disks are at least this much brighter than ambient
LIGHT_MIN_BOOST = 0.5


class DepthStyle(str, Enum):
    LINEAR_RAMP = "linear-ramp"
    BLOBS = "blobs"
    MIXED = "mixed"


class Degradation(str, Enum):
    GLOW = "glow"
    BLOOM = "bloom"
    BLUR = "blur"
    NOISE = "noise"


ALL_DEGRADATIONS = frozenset(Degradation)


def _triple(value, name: str) -> Tuple[float, float, float]:
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64).reshape(-1), (3,))
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ParameterError(f"{name} components must lie in [0, 1], got {value}")
    return tuple(float(v) for v in arr)


@dataclass
class SceneSpec:
    """Parameters of one procedural scene."""
    seed: int = 0
    size: Tuple[int, int] = (64, 64)
    num_lights: int = 3
    depth_style: DepthStyle = DepthStyle.MIXED
    haze_beta: float = 1.2
    ambient: float = 0.1
    airlight: Tuple[float, float, float] = (0.35, 0.32, 0.28)
    texture: float = 0.1
    light_spread: float = 0.15

    def __post_init__(self):
        self.depth_style = DepthStyle(self.depth_style)
        self.size = (int(self.size[0]), int(self.size[1]))
        if self.size[0] < 1 or self.size[1] < 1:
            raise ParameterError(f"size must be positive, got {self.size}")
        if self.num_lights < 0:
            raise ParameterError(f"num_lights must be >= 0, got {self.num_lights}")
        if self.haze_beta < 0:
            raise ParameterError(f"haze_beta must be >= 0, got {self.haze_beta}")
        if not 0.0 <= self.ambient <= 1.0:
            raise ParameterError(f"ambient must lie in [0, 1], got {self.ambient}")
        if self.texture < 0 or self.light_spread <= 0:
            raise ParameterError("texture must be >= 0 and light_spread > 0")
        self.airlight = _triple(self.airlight, "airlight")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'seed': self.seed,
            'size': list(self.size),
            'num_lights': self.num_lights,
            'depth_style': self.depth_style.value,
            'haze_beta': self.haze_beta,
            'ambient': self.ambient,
            'airlight': list(self.airlight),
            'texture': self.texture,
            'light_spread': self.light_spread,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SceneSpec':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class DegradationConfig:
    """Post effects; `enabled` selects which ones run."""
    glow_strength: float = 0.3
    bloom_threshold: float = 0.8
    bloom_strength: float = 0.5
    bloom_sigma: float = 3.0
    blur_len: int = 5
    noise_sigma: float = 0.01
    enabled: FrozenSet[Degradation] = field(default_factory=lambda: ALL_DEGRADATIONS)

    def __post_init__(self):
        self.enabled = frozenset(Degradation(d) for d in self.enabled)
        magnitudes = (self.glow_strength, self.bloom_threshold, self.bloom_strength, self.bloom_sigma, self.noise_sigma)
        if any(m < 0 for m in magnitudes):
            raise ParameterError("degradation magnitudes must be >= 0")
        if int(self.blur_len) != self.blur_len or self.blur_len < 1:
            raise ParameterError(f"blur_len must be an integer >= 1, got {self.blur_len}")
        self.blur_len = int(self.blur_len)

    @property
    def effective_glow(self) -> float:
        return self.glow_strength if Degradation.GLOW in self.enabled else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'glow_strength': self.glow_strength,
            'bloom_threshold': self.bloom_threshold,
            'bloom_strength': self.bloom_strength,
            'bloom_sigma': self.bloom_sigma,
            'blur_len': self.blur_len,
            'noise_sigma': self.noise_sigma,
            'enabled': sorted(d.value for d in self.enabled),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DegradationConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass(frozen=True)
class LightSource:
    y: float
    x: float
    radius: float
    color: Tuple[float, float, float]
    intensity: float
    glow_sigma: float


def sample_lights(spec: SceneSpec) -> List[LightSource]:
    """
    Place `num_lights` lights for a scene; a pure function of the spec.

    Centers keep at least two diameters between disks so every light renders
    as its own bright region. When a small canvas cannot hold that separation
    the last attempted position is accepted.
    """
    rng = np.random.default_rng([spec.seed, 1])
    height, width = spec.size
    short = min(height, width)
    lights: List[LightSource] = []
    for _ in range(spec.num_lights):
        radius = float(rng.uniform(max(1.5, short / 40), max(2.0, short / 20)))
        lo_y, hi_y = min(radius, height / 2), max(height - radius, height / 2)
        lo_x, hi_x = min(radius, width / 2), max(width - radius, width / 2)
        for _attempt in range(200):
            y, x = float(rng.uniform(lo_y, hi_y)), float(rng.uniform(lo_x, hi_x))
            if all(np.hypot(y - o.y, x - o.x) > 2.0 * (radius + o.radius) + 2.0 for o in lights):
                break
        color = rng.uniform(0.6, 1.0, size=3)
        color = color / color.max()
        intensity = float(rng.uniform(0.85, 1.0))
        lights.append(LightSource(
            y=y, x=x, radius=radius,
            color=tuple(float(c) for c in color),
            intensity=intensity,
            glow_sigma=intensity * short / 8.0,
        ))
    return lights


def _grid(size: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    return np.mgrid[0:size[0], 0:size[1]].astype(np.float64)


def _normalize(d: np.ndarray) -> np.ndarray:
    span = d.max() - d.min()
    return (d - d.min()) / span if span > 0 else np.zeros_like(d)


def _depth_map(spec: SceneSpec) -> ImageGray:
    rng = np.random.default_rng([spec.seed, 2])
    height, width = spec.size
    yy, xx = _grid(spec.size)
    tilt = rng.uniform(-0.3, 0.3)
    ramp = _normalize(1.0 - yy / max(height - 1, 1) + tilt * xx / max(width - 1, 1))
    if spec.depth_style == DepthStyle.LINEAR_RAMP:
        return ramp

    blobs = np.zeros(spec.size)
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        sigma = rng.uniform(0.1, 0.35) * min(height, width)
        blobs += rng.uniform(0.5, 1.0) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma ** 2))
    blobs = _normalize(blobs)
    if spec.depth_style == DepthStyle.BLOBS:
        return blobs
    return _normalize(ramp + blobs)


def _light_distances(lights: Sequence[LightSource], size: Tuple[int, int]) -> np.ndarray:
    yy, xx = _grid(size)
    return np.stack([np.hypot(yy - l.y, xx - l.x) for l in lights]) if lights else np.zeros((0,) + size)


def render_clean_scene(spec: SceneSpec) -> Tuple[ImageRGB, ImageGray]:
    """
    Render the clean member of a pair and its normalized depth.

    The base is `ambient` everywhere; textured structures deviate from it by at
    most `texture` and never exceed ambient + 0.2; each light is a disk at least
    0.5 brighter than ambient (for ambient <= 0.5).
    """
    rng = np.random.default_rng([spec.seed, 0])
    height, width = spec.size
    clean = np.full((height, width, 3), spec.ambient)

    if spec.texture > 0:
        for _ in range(int(rng.integers(3, 9))):
            y0, x0 = int(rng.integers(0, height)), int(rng.integers(0, width))
            h = int(rng.integers(1, max(2, height // 2)))
            w = int(rng.integers(1, max(2, width // 3)))
            tint = rng.uniform(0.8, 1.2, size=3)
            clean[y0:y0 + h, x0:x0 + w] += spec.texture * rng.uniform(-1.0, 1.0) * tint
        grain = gaussian_filter(rng.normal(size=(height, width)), sigma=1.5)
        grain /= max(np.abs(grain).max(), 1e-12)
        clean += 0.5 * spec.texture * grain[..., None]
        clean = np.clip(clean, 0.0, min(1.0, spec.ambient + TEXTURE_CEILING))

    lights = sample_lights(spec)
    for light, dist in zip(lights, _light_distances(lights, spec.size)):
        disk = dist <= light.radius
        radiance = np.clip(spec.ambient + LIGHT_MIN_BOOST + 0.5 * light.intensity * np.asarray(light.color), 0.0, 1.0)
        clean[disk] = np.maximum(clean[disk], radiance)

    return clamp01(clean), _depth_map(spec)


@dataclass
class HazeComponents:
    """Pre-clamp hazy image and the fields it was composed from."""
    hazy: np.ndarray
    transmission: ImageGray
    airlight: np.ndarray
    glow: np.ndarray

    def recompose(self, clean: ImageRGB) -> np.ndarray:
        t = self.transmission[..., None]
        return clean * t + self.airlight * (1.0 - t) + self.glow

    def invert(self) -> np.ndarray:
        """Recover the clean image wherever t > 0 (undefined elsewhere)."""
        t = self.transmission[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.hazy - self.airlight * (1.0 - t) - self.glow) / t


def compose_haze_components(
    clean: ImageRGB,
    depth: ImageGray,
    spec: SceneSpec,
    lights: Sequence[LightSource],
    glow_strength: float = 0.0,
) -> HazeComponents:
    """I = J t + A (1 - t) + G with t = exp(-beta depth), before clamping."""
    clean = check_rgb(clean, "clean")
    depth = check_gray(depth, "depth")
    if clean.shape[:2] != depth.shape:
        raise DimensionError(f"clean {clean.shape[:2]} and depth {depth.shape} differ in size")
    size = depth.shape

    with np.errstate(over="ignore"):
        t = np.exp(-spec.haze_beta * depth)

    airlight = np.broadcast_to(np.asarray(spec.airlight), size + (3,)).copy()
    glow = np.zeros(size + (3,))
    if lights:
        dist = _light_distances(lights, size)
        nearest = dist.argmin(axis=0)
        colors = np.asarray([l.color for l in lights])
        sigma_a = spec.light_spread * float(np.hypot(*size))
        weight = np.exp(-dist.min(axis=0) / sigma_a)[..., None]
        airlight = (1.0 - weight) * airlight + weight * colors[nearest]
        if glow_strength > 0:
            for light, d in zip(lights, dist):
                kernel = np.exp(-d ** 2 / (2.0 * light.glow_sigma ** 2))
                glow += glow_strength * light.intensity * kernel[..., None] * np.asarray(light.color)

    hazy = clean * t[..., None] + airlight * (1.0 - t[..., None]) + glow
    return HazeComponents(hazy, t, airlight, glow)


def compose_haze(
    clean: ImageRGB,
    depth: ImageGray,
    spec: SceneSpec,
    lights: Sequence[LightSource],
    glow_strength: float = 0.0,
) -> ImageRGB:
    """Clamped hazy image; see compose_haze_components."""
    return clamp01(compose_haze_components(clean, depth, spec, lights, glow_strength).hazy)


def motion_blur_kernel(length: int, angle: float) -> np.ndarray:
    """Normalized line kernel of `length` samples at `angle` radians."""
    if length <= 1:
        return np.ones((1, 1))
    size = length if length % 2 == 1 else length + 1
    kernel = np.zeros((size, size))
    c = size // 2
    for offset in np.arange(length) - (length - 1) / 2.0:
        y = int(round(c + offset * np.sin(angle)))
        x = int(round(c + offset * np.cos(angle)))
        kernel[y, x] += 1.0
    return kernel / kernel.sum()


def apply_degradations(img: ImageRGB, cfg: DegradationConfig, seed: int) -> ImageRGB:
    """
    Apply the enabled post effects in the order bloom, motion blur, noise, then clamp.

    Glow is part of haze composition and is not applied here.
    """
    img = check_rgb(img)
    rng = np.random.default_rng(seed)
    out = img.copy()

    if Degradation.BLOOM in cfg.enabled and cfg.bloom_strength > 0:
        bright = out * (out.mean(axis=2) > cfg.bloom_threshold)[..., None]
        out = out + cfg.bloom_strength * gaussian_filter(bright, sigma=(cfg.bloom_sigma, cfg.bloom_sigma, 0))

    if Degradation.BLUR in cfg.enabled and cfg.blur_len > 1:
        kernel = motion_blur_kernel(cfg.blur_len, float(rng.uniform(0.0, np.pi)))
        out = np.stack([convolve(out[..., ch], kernel, mode="constant") for ch in range(3)], axis=2)

    if Degradation.NOISE in cfg.enabled and cfg.noise_sigma > 0:
        out = out + rng.normal(0.0, cfg.noise_sigma, size=out.shape)

    return clamp01(out)


def _uniform(rng: np.random.Generator, bounds: Sequence[float]) -> float:
    lo, hi = float(bounds[0]), float(bounds[1])
    return lo if hi <= lo else float(rng.uniform(lo, hi))


@dataclass
class SceneRanges:
    """Sampling ranges for SceneSpec; (lo, hi) pairs are inclusive."""
    size: Tuple[int, int] = (96, 96)
    num_lights: Tuple[int, int] = (1, 5)
    haze_beta: Tuple[float, float] = (0.5, 2.0)
    ambient: Tuple[float, float] = (0.03, 0.15)
    texture: Tuple[float, float] = (0.03, 0.1)
    depth_styles: Tuple[str, ...] = tuple(s.value for s in DepthStyle)

    def sample(self, rng: np.random.Generator, seed: int) -> SceneSpec:
        airlight = np.clip(rng.uniform(0.2, 0.45) * rng.uniform(0.85, 1.15, size=3), 0.0, 1.0)
        return SceneSpec(
            seed=seed,
            size=tuple(self.size),
            num_lights=int(rng.integers(self.num_lights[0], self.num_lights[1] + 1)),
            depth_style=DepthStyle(self.depth_styles[int(rng.integers(0, len(self.depth_styles)))]),
            haze_beta=_uniform(rng, self.haze_beta),
            ambient=_uniform(rng, self.ambient),
            airlight=tuple(airlight),
            texture=_uniform(rng, self.texture),
        )


@dataclass
class DegradationRanges:
    """Sampling ranges for DegradationConfig."""
    glow_strength: Tuple[float, float] = (0.1, 0.4)
    bloom_threshold: Tuple[float, float] = (0.7, 0.9)
    blur_len: Tuple[int, int] = (1, 5)
    noise_sigma: Tuple[float, float] = (0.0, 0.02)
    enabled: Tuple[str, ...] = tuple(d.value for d in Degradation)

    def sample(self, rng: np.random.Generator) -> DegradationConfig:
        return DegradationConfig(
            glow_strength=_uniform(rng, self.glow_strength),
            bloom_threshold=_uniform(rng, self.bloom_threshold),
            blur_len=int(rng.integers(self.blur_len[0], self.blur_len[1] + 1)),
            noise_sigma=_uniform(rng, self.noise_sigma),
            enabled=frozenset(self.enabled),
        )


def generate_dataset(
    count: int,
    out_root: str,
    spec_ranges: Optional[SceneRanges] = None,
    cfg_ranges: Optional[DegradationRanges] = None,
    crop: int = 0,
    crops_per_image: int = 1,
    seed: int = 0,
    fractions: Sequence[float] = (0.8, 0.1, 0.1),
    show_progress: bool = True,
) -> DatasetManifest:
    """
    Render `count` source pairs and write their crops under out_root/hazy and out_root/gt.

    Both members of a pair receive the same crop windows. Splits are assigned per
    source scene, so crops of one scene never straddle two splits. `crop = 0`
    stores whole images (one per source). Files are named `{source:05d}_{crop:02d}.png`
    and the manifest is written to out_root/manifest.txt.
    """
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    spec_ranges = spec_ranges or SceneRanges()
    cfg_ranges = cfg_ranges or DegradationRanges()
    per_image = crops_per_image if crop > 0 else 1
    if per_image < 1:
        raise ParameterError(f"crops_per_image must be >= 1, got {crops_per_image}")

    splits = assign_splits(count, fractions)
    records: List[ManifestRecord] = []
    try:
        for i in tqdm(range(count), desc="synth", unit="scene", disable=not show_progress):
            rng = np.random.default_rng([seed, i])
            spec = spec_ranges.sample(rng, seed=int(rng.integers(0, 2**31 - 1)))
            degradation = cfg_ranges.sample(rng)

            clean, depth = render_clean_scene(spec)
            hazy = compose_haze(clean, depth, spec, sample_lights(spec), degradation.effective_glow)
            hazy = apply_degradations(hazy, degradation, seed=int(rng.integers(0, 2**31 - 1)))

            if crop > 0:
                offsets = crop_offsets(spec.size, crop, per_image, int(rng.integers(0, 2**31 - 1)))
                windows = [(slice(y, y + crop), slice(x, x + crop)) for y, x in offsets]
            else:
                windows = [(slice(None), slice(None))]

            for k, (ys, xs) in enumerate(windows):
                name = f"{i:05d}_{k:02d}.png"
                hazy_rel = os.path.join(HAZY_DIR, name)
                clean_rel = os.path.join(CLEAN_DIR, name)
                save_image(hazy[ys, xs], os.path.join(out_root, hazy_rel))
                save_image(clean[ys, xs], os.path.join(out_root, clean_rel))
                records.append(ManifestRecord(splits[i], hazy_rel, clean_rel))
    except Exception as e:
        ErrorLogger.log_error(e, {"action": "generate_dataset", "out_root": out_root, "count": count})
        raise

    manifest = DatasetManifest.from_records(records, root=out_root, paired=True)
    manifest.save(os.path.join(out_root, MANIFEST_NAME))
    logger.info(f"Generated {len(records)} pairs from {count} scenes in {out_root}: {manifest.split_sizes()}")
    return manifest
