"""
Classical single-image dehazing.

BCCR: a boundary-constrained transmission refined by weighted contextual
regularization, used to polish pseudo ground truths. DCP: guided-filtered
dark-channel transmission, used as a baseline.
"""
import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.ndimage import grey_closing

from ..data.image_io import ImageGray, ImageRGB, check_gray, check_rgb, clamp01
from ..physics.priors import (
    T_MIN,
    LightLike,
    dcp_transmission,
    estimate_atmospheric_light,
    guided_filter,
)
from ..utils.exceptions import DimensionError, NumericGuardError, ParameterError

logger = logging.getLogger(__name__)

# circular first-order differences: horizontal, vertical, two diagonals
DIRECTIONS: Tuple[Tuple[int, int], ...] = ((0, 1), (1, 0), (1, 1), (1, -1))


@dataclass
class BccrParams:
    """Parameters of boundary-constrained, contextually regularized dehazing."""
    c0: Tuple[float, float, float] = (20 / 255, 20 / 255, 20 / 255)
    c1: Tuple[float, float, float] = (300 / 255, 300 / 255, 300 / 255)
    patch: int = 3
    lambda_reg: float = 2.0
    iters: int = 8
    weight_sigma: float = 0.5
    beta0: float = 1.0
    beta_rate: float = 2.0 * np.sqrt(2.0)
    t_min: float = T_MIN
    airlight_patch: int = 15
    airlight_fraction: float = 0.001

    def __post_init__(self):
        self.c0 = tuple(float(v) for v in np.broadcast_to(np.asarray(self.c0, dtype=np.float64).reshape(-1), (3,)))
        self.c1 = tuple(float(v) for v in np.broadcast_to(np.asarray(self.c1, dtype=np.float64).reshape(-1), (3,)))
        if not all(lo < hi for lo, hi in zip(self.c0, self.c1)):
            raise ParameterError(f"c0 must be below c1 componentwise, got {self.c0} and {self.c1}")
        if self.iters < 1:
            raise ParameterError(f"iters must be >= 1, got {self.iters}")
        if self.lambda_reg <= 0 or self.weight_sigma <= 0:
            raise ParameterError("lambda_reg and weight_sigma must be > 0")
        if self.patch < 1 or self.patch % 2 == 0:
            raise ParameterError(f"patch must be odd and >= 1, got {self.patch}")
        if self.beta0 <= 0 or self.beta_rate <= 1:
            raise ParameterError("beta0 must be > 0 and beta_rate > 1")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'c0': list(self.c0),
            'c1': list(self.c1),
            'patch': self.patch,
            'lambda_reg': self.lambda_reg,
            'iters': self.iters,
            'weight_sigma': self.weight_sigma,
            'beta0': self.beta0,
            'beta_rate': self.beta_rate,
            't_min': self.t_min,
            'airlight_patch': self.airlight_patch,
            'airlight_fraction': self.airlight_fraction,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BccrParams':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def params_hash(self) -> str:
        """sha256 of the canonical JSON form; identifies the parameters in provenance records."""
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _light_vector(a: LightLike) -> np.ndarray:
    return np.asarray(getattr(a, "a", a), dtype=np.float64).reshape(3)


def boundary_constraint(img: ImageRGB, a: LightLike, p: BccrParams) -> ImageGray:
    """
    Lower bound on transmission that keeps the radiance inside [c0, c1].

    t_b = min(1, max_c max((a_c - I_c)/(a_c - c0_c), (a_c - I_c)/(a_c - c1_c))),
    followed by a grey closing with a `patch` window and a clamp to [t_min, 1].
    """
    img = check_rgb(img)
    light = _light_vector(a)
    c0, c1 = np.asarray(p.c0), np.asarray(p.c1)
    if np.any(np.abs(light - c0) < 1e-12) or np.any(np.abs(light - c1) < 1e-12):
        raise NumericGuardError(f"atmospheric light {light} coincides with a radiance bound")

    diff = light - img
    bound = np.maximum(diff / (light - c0), diff / (light - c1)).max(axis=2)
    t_b = np.minimum(bound, 1.0)
    t_b = grey_closing(t_b, size=(p.patch, p.patch), mode="nearest")
    return np.clip(t_b, p.t_min, 1.0)


def _difference(x: np.ndarray, shift: Tuple[int, int]) -> np.ndarray:
    return np.roll(x, (-shift[0], -shift[1]), axis=(0, 1)) - x


def contextual_weights(guide: ImageRGB, weight_sigma: float) -> np.ndarray:
    """W_j(p) = exp(-||guide(p + s_j) - guide(p)|| / weight_sigma), shape (4, H, W)."""
    return np.stack([
        np.exp(-np.linalg.norm(_difference(guide, s), axis=2) / weight_sigma) for s in DIRECTIONS
    ])


def contextual_objective(t: np.ndarray, t_b: np.ndarray, weights: np.ndarray, lambda_reg: float) -> float:
    """(lambda/2) ||t - t_b||^2 + sum_j ||W_j o (D_j t)||_1."""
    data = 0.5 * lambda_reg * float(np.sum((t - t_b) ** 2))
    return data + weighted_tv(t, weights)


def weighted_tv(t: np.ndarray, weights: np.ndarray) -> float:
    return float(sum(np.sum(w * np.abs(_difference(t, s))) for w, s in zip(weights, DIRECTIONS)))


def _difference_otf(shift: Tuple[int, int], shape: Tuple[int, int]) -> np.ndarray:
    kernel = np.zeros(shape)
    kernel[0, 0] = -1.0
    kernel[(-shift[0]) % shape[0], (-shift[1]) % shape[1]] += 1.0
    return np.fft.fft2(kernel)


def contextual_regularize(
    t_b: ImageGray,
    guide: ImageRGB,
    p: BccrParams,
    objective_trace: Optional[List[float]] = None,
) -> ImageGray:
    """
    Minimize the weighted contextual objective by half-quadratic splitting.

    Each outer iteration shrinks the auxiliary differences, then solves the
    quadratic t-step in the Fourier domain. A candidate that would raise the
    objective is pulled back toward the current iterate by step halving, or
    rejected, so the objective never increases across iterations.

    When `objective_trace` is given, the starting objective and the objective
    after every outer iteration are appended to it.
    """
    t_b = check_gray(t_b, "t_b")
    guide = check_rgb(guide, "guide")
    if guide.shape[:2] != t_b.shape:
        raise DimensionError(f"guide {guide.shape[:2]} and t_b {t_b.shape} differ in size")

    weights = contextual_weights(guide, p.weight_sigma)
    otfs = [_difference_otf(s, t_b.shape) for s in DIRECTIONS]
    denominator_reg = sum(np.abs(k) ** 2 for k in otfs)
    data_fft = p.lambda_reg * np.fft.fft2(t_b)

    t = np.clip(t_b, p.t_min, 1.0)
    objective = contextual_objective(t, t_b, weights, p.lambda_reg)
    if objective_trace is not None:
        objective_trace.append(objective)
    beta = p.beta0
    for it in range(p.iters):
        numerator = data_fft.copy()
        for w, s, otf in zip(weights, DIRECTIONS, otfs):
            d = _difference(t, s)
            u = np.sign(d) * np.maximum(np.abs(d) - w / beta, 0.0)
            numerator += beta * np.conj(otf) * np.fft.fft2(u)
        candidate = np.real(np.fft.ifft2(numerator / (p.lambda_reg + beta * denominator_reg)))
        candidate = np.clip(candidate, p.t_min, 1.0)

        step = 1.0
        for _ in range(8):
            trial = t + step * (candidate - t)
            trial_objective = contextual_objective(trial, t_b, weights, p.lambda_reg)
            if trial_objective <= objective:
                t, objective = trial, trial_objective
                break
            step *= 0.5
        if objective_trace is not None:
            objective_trace.append(objective)
        logger.debug(f"BCCR iteration {it}: beta={beta:.3f} objective={objective:.6f}")
        beta *= p.beta_rate
    return t


def recover_radiance(img: ImageRGB, t: ImageGray, a: LightLike, t_min: float = T_MIN) -> ImageRGB:
    """J = (I - a) / max(t, t_min) + a, clamped to [0, 1]."""
    img = check_rgb(img)
    t = np.asarray(t, dtype=np.float64)
    if t.shape != img.shape[:2]:
        raise DimensionError(f"transmission {t.shape} does not match image {img.shape[:2]}")
    light = _light_vector(a)
    return clamp01((img - light) / np.maximum(t, t_min)[..., None] + light)


def dehaze_bccr(img: ImageRGB, p: BccrParams = None) -> ImageRGB:
    """Estimate airlight, bound and regularize the transmission, then invert the scattering model."""
    p = p or BccrParams()
    img = check_rgb(img)
    light = estimate_atmospheric_light(img, p.airlight_patch, p.airlight_fraction)
    t_b = boundary_constraint(img, light, p)
    t = contextual_regularize(t_b, img, p)
    return recover_radiance(img, t, light, p.t_min)


def dehaze_dcp(
    img: ImageRGB,
    patch: int = 15,
    omega: float = 0.95,
    t_min: float = T_MIN,
    radius: int = 8,
    eps: float = 1e-3,
    fraction: float = 0.001,
) -> ImageRGB:
    """Dark-channel dehazing with a guided-filter refined transmission."""
    img = check_rgb(img)
    light = estimate_atmospheric_light(img, patch, fraction)
    t = dcp_transmission(img, light, patch, omega, t_min)
    t = np.clip(guided_filter(img, t, radius, eps), t_min, 1.0)
    return recover_radiance(img, t, light, t_min)
