"""
Supervised and unsupervised loss committees.

Supervised:   L_sl = L_psnr + lambda_per * L_per
Unsupervised: L_ul = lambda_dcp L_dcp + lambda_bcp L_bcp + lambda_spa L_spa
                     + lambda_exp L_exp + lambda_col L_col

The prior losses compare the classical DCP/BCP transmissions of the hazy input
against a transmission derived from the network's prediction through the
scattering model. They run at a reduced resolution (at most 64x64) so the
matting Laplacian stays small.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..physics.priors import (
    MATTING_MAX_PIXELS,
    MattingLaplacian,
    bcp_transmission,
    build_matting_laplacian,
    dcp_transmission,
    estimate_atmospheric_light,
)
from ..utils.exceptions import NumericGuardError, ParameterError, ShapeError

logger = logging.getLogger(__name__)

LaplacianLike = Union[MattingLaplacian, torch.Tensor]


@dataclass
class SupervisedLossConfig:
    lambda_per: float = 0.2
    feature_layers: List[int] = field(default_factory=lambda: [0, 1])
    psnr_eps: float = 1e-10

    def __post_init__(self):
        self.feature_layers = [int(j) for j in self.feature_layers]
        if self.lambda_per < 0:
            raise ParameterError(f"lambda_per must be >= 0, got {self.lambda_per}")
        if self.psnr_eps <= 0:
            raise ParameterError(f"psnr_eps must be > 0, got {self.psnr_eps}")

    def to_dict(self) -> Dict:
        return {'lambda_per': self.lambda_per, 'feature_layers': list(self.feature_layers), 'psnr_eps': self.psnr_eps}

    @classmethod
    def from_dict(cls, data: Dict) -> 'SupervisedLossConfig':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class UnsupervisedLossConfig:
    """Weights of the unsupervised terms and the prior settings they are computed with."""
    lambda_dcp: float = 1e-4
    lambda_bcp: float = 1e-4
    lambda_spa: float = 5.0
    lambda_exp: float = 1e-3
    lambda_col: float = 0.2
    dcp_inner_lambda: float = 1e-4
    exposure_level: float = 0.6
    spa_region: int = 4
    exp_region: int = 16
    loss_size: int = 32
    prior_patch: int = 5
    omega: float = 0.95
    t_min: float = 0.05
    airlight_fraction: float = 0.001
    matting_window: int = 3
    matting_epsilon: float = 1e-7

    def __post_init__(self):
        weights = (self.lambda_dcp, self.lambda_bcp, self.lambda_spa, self.lambda_exp, self.lambda_col, self.dcp_inner_lambda)
        if any(w < 0 for w in weights):
            raise ParameterError("loss weights must be >= 0")
        if not 0.0 < self.exposure_level < 1.0:
            raise ParameterError(f"exposure_level must lie in (0, 1), got {self.exposure_level}")
        if self.spa_region < 1 or self.exp_region < 1:
            raise ParameterError("spa_region and exp_region must be >= 1")
        if not 1 <= self.loss_size or self.loss_size * self.loss_size > MATTING_MAX_PIXELS:
            raise ParameterError(f"loss_size must lie in [1, 64], got {self.loss_size}")

    @property
    def weights(self) -> Dict[str, float]:
        return {
            'dcp': self.lambda_dcp,
            'bcp': self.lambda_bcp,
            'spa': self.lambda_spa,
            'exp': self.lambda_exp,
            'col': self.lambda_col,
        }

    def to_dict(self) -> Dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: Dict) -> 'UnsupervisedLossConfig':
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class LossReport:
    """Named loss terms of one batch, their weights and the weighted total."""
    terms: Dict[str, torch.Tensor]
    weights: Dict[str, float]
    total: torch.Tensor

    @classmethod
    def from_terms(cls, terms: Dict[str, torch.Tensor], weights: Dict[str, float]) -> 'LossReport':
        total = sum(weights[name] * value for name, value in terms.items())
        if not isinstance(total, torch.Tensor):
            total = torch.zeros(())
        return cls(terms, dict(weights), total)

    def recompute(self) -> float:
        return float(sum(self.weights[n] * float(v) for n, v in self.terms.items()))

    def to_dict(self) -> Dict[str, float]:
        values = {name: float(value.detach()) for name, value in self.terms.items()}
        values['total'] = float(self.total.detach())
        return values

    def format_fields(self) -> str:
        """`name=value` pairs separated by tabs, total last."""
        return "\t".join(f"{name}={value:.6g}" for name, value in self.to_dict().items())


def _check_pair(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.dim() != 4 or pred.shape[1] != 3:
        raise ShapeError(f"expected (B, 3, H, W) batches, got {tuple(pred.shape)}")


def psnr_loss(pred: torch.Tensor, gt: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    """Negative PSNR, 10 log10(max(MSE, eps)) per sample, averaged over the batch."""
    _check_pair(pred, gt)
    mse = (pred - gt).pow(2).mean(dim=(1, 2, 3))
    return (10.0 * torch.log10(mse.clamp(min=eps))).mean()


class FeatureExtractor(nn.Module):
    """
    Fixed two-stage convolutional feature pyramid.

    Weights are drawn once from a private generator seeded with `seed` and are
    never trained.
    """

    def __init__(self, seed: int = 0, widths: Sequence[int] = (16, 32)):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        self.stages = nn.ModuleList()
        in_ch = 3
        for i, out_ch in enumerate(widths):
            conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)
            fan_in = in_ch * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=generator) * np.sqrt(2.0 / fan_in))
                conv.bias.zero_()
            layers = [conv, nn.ReLU()]
            if i > 0:
                layers.insert(0, nn.AvgPool2d(2))
            self.stages.append(nn.Sequential(*layers))
            in_ch = out_ch
        self.requires_grad_(False)
        self.eval()

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features


class IdentityExtractor(nn.Module):
    """Single stage whose 1x1 convolution is the identity; reduces L_per to mean absolute error."""

    def __init__(self):
        super().__init__()
        self.conv = nn.Conv2d(3, 3, 1, bias=False)
        with torch.no_grad():
            self.conv.weight.copy_(torch.eye(3).reshape(3, 3, 1, 1))
        self.requires_grad_(False)

    @property
    def num_stages(self) -> int:
        return 1

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        return [self.conv(x)]


def perceptual_loss(
    pred: torch.Tensor,
    gt: torch.Tensor,
    extractor: nn.Module,
    layers: Sequence[int] = (0, 1),
) -> torch.Tensor:
    """Sum over the selected stages of ||phi_j(pred) - phi_j(gt)||_1 / (C_j H_j W_j), batch-averaged."""
    _check_pair(pred, gt)
    stages = getattr(extractor, "num_stages", None)
    for j in layers:
        if stages is not None and not 0 <= j < stages:
            raise ParameterError(f"feature layer {j} outside extractor with {stages} stages")
    pred_features = extractor(pred)
    with torch.no_grad():
        gt_features = extractor(gt)
    loss = pred.new_zeros(())
    for j in layers:
        loss = loss + (pred_features[j] - gt_features[j]).abs().mean()
    return loss


def resize_for_loss(x: torch.Tensor, size: int) -> torch.Tensor:
    """Area-downsample so neither side exceeds `size`; smaller inputs pass through."""
    height, width = x.shape[2:]
    if height <= size and width <= size:
        return x
    scale = size / max(height, width)
    return F.adaptive_avg_pool2d(x, (max(1, int(round(height * scale))), max(1, int(round(width * scale)))))


@dataclass
class PriorTargets:
    """Per-batch constants of the prior losses, computed once from the hazy input."""
    hazy: torch.Tensor
    airlight: torch.Tensor
    t_dcp: torch.Tensor
    t_bcp: torch.Tensor
    laplacians: List[torch.Tensor]

    @property
    def size(self):
        return tuple(self.hazy.shape[2:])


def prepare_prior_targets(
    input_hazy: torch.Tensor,
    cfg: Optional[UnsupervisedLossConfig] = None,
    with_laplacian: bool = True,
) -> PriorTargets:
    """Airlight, DCP/BCP transmissions and matting Laplacians of a hazy batch at the loss resolution."""
    cfg = cfg or UnsupervisedLossConfig()
    hazy = resize_for_loss(input_hazy.detach(), cfg.loss_size).clamp(0.0, 1.0)
    dtype, device = hazy.dtype, hazy.device
    lights, t_dcp, t_bcp, laplacians = [], [], [], []
    for sample in hazy.cpu().double().numpy().transpose(0, 2, 3, 1):
        light = estimate_atmospheric_light(sample, cfg.prior_patch, cfg.airlight_fraction)
        lights.append(light.a)
        t_dcp.append(dcp_transmission(sample, light, cfg.prior_patch, cfg.omega, cfg.t_min))
        t_bcp.append(bcp_transmission(sample, light, cfg.prior_patch, cfg.t_min))
        if with_laplacian:
            L = build_matting_laplacian(sample, cfg.matting_window, cfg.matting_epsilon)
            laplacians.append(L.as_torch(dtype).to(device))

    def stack(maps) -> torch.Tensor:
        return torch.from_numpy(np.stack(maps)[:, None]).to(dtype=dtype, device=device)

    return PriorTargets(
        hazy=hazy,
        airlight=torch.from_numpy(np.stack(lights)).to(dtype=dtype, device=device)[:, :, None, None],
        t_dcp=stack(t_dcp),
        t_bcp=stack(t_bcp),
        laplacians=laplacians,
    )


def model_transmission(
    input_hazy: torch.Tensor,
    pred_clean: torch.Tensor,
    airlight: torch.Tensor,
    t_min: float = 0.05,
    eps: float = 1e-3,
) -> torch.Tensor:
    """
    Transmission implied by a prediction: median_c (I - a) / (J - a), clamped to [t_min, 1].

    Denominators closer to zero than `eps` are pushed out to +-eps. Returns (B, 1, H, W).
    """
    _check_pair(pred_clean, input_hazy)
    if torch.any(airlight <= 0):
        raise NumericGuardError("atmospheric light has a non-positive component")
    denominator = pred_clean - airlight
    sign = torch.where(denominator >= 0, torch.ones_like(denominator), -torch.ones_like(denominator))
    denominator = torch.where(denominator.abs() < eps, sign * eps, denominator)
    ratio = (input_hazy - airlight) / denominator
    return ratio.median(dim=1, keepdim=True).values.clamp(t_min, 1.0)


def _laplacian_list(L, batch: int) -> Optional[List[torch.Tensor]]:
    if L is None:
        return None
    items = list(L) if isinstance(L, (list, tuple)) else [L]
    items = [l.as_torch() if isinstance(l, MattingLaplacian) else l for l in items]
    if len(items) != batch:
        raise ShapeError(f"{len(items)} Laplacians for a batch of {batch}")
    return items


def _targets(input_hazy, cfg, targets, with_laplacian) -> PriorTargets:
    return targets if targets is not None else prepare_prior_targets(input_hazy, cfg, with_laplacian)


def dcp_loss(
    input_hazy: torch.Tensor,
    pred_clean: torch.Tensor,
    L: Optional[Union[LaplacianLike, Sequence[LaplacianLike]]] = None,
    inner_lambda: float = 1e-4,
    cfg: Optional[UnsupervisedLossConfig] = None,
    targets: Optional[PriorTargets] = None,
) -> torch.Tensor:
    """
    E = t~^T L t~ + inner_lambda ||t~ - t_dcp||^2, averaged over the batch.

    t~ is the model transmission of `pred_clean`; L is the matting Laplacian of
    the hazy input at the loss resolution (one per sample, built when omitted).
    """
    cfg = cfg or UnsupervisedLossConfig()
    laplacians = _laplacian_list(L, input_hazy.shape[0])
    targets = _targets(input_hazy, cfg, targets, with_laplacian=laplacians is None)
    laplacians = laplacians or targets.laplacians

    pred = resize_for_loss(pred_clean, cfg.loss_size)
    t_model = model_transmission(targets.hazy, pred, targets.airlight, cfg.t_min)
    pixels = t_model.shape[2] * t_model.shape[3]
    losses = []
    for b, lap in enumerate(laplacians):
        if tuple(lap.shape) != (pixels, pixels):
            raise ShapeError(f"Laplacian {tuple(lap.shape)} does not match {tuple(t_model.shape[2:])} loss-resolution transmission")
        v = t_model[b].reshape(-1, 1)
        lap = lap.to(dtype=v.dtype, device=v.device)
        smooth = (v * torch.sparse.mm(lap, v)).sum()
        penalty = inner_lambda * (v - targets.t_dcp[b].reshape(-1, 1)).pow(2).sum()
        losses.append(smooth + penalty)
    return torch.stack(losses).mean()


def bcp_loss(
    input_hazy: torch.Tensor,
    pred_clean: torch.Tensor,
    cfg: Optional[UnsupervisedLossConfig] = None,
    targets: Optional[PriorTargets] = None,
) -> torch.Tensor:
    """Mean absolute difference between the BCP transmission and the model transmission."""
    cfg = cfg or UnsupervisedLossConfig()
    targets = _targets(input_hazy, cfg, targets, with_laplacian=False)
    pred = resize_for_loss(pred_clean, cfg.loss_size)
    t_model = model_transmission(targets.hazy, pred, targets.airlight, cfg.t_min)
    return (targets.t_bcp - t_model).abs().mean()


_NEIGHBOUR_KERNELS = torch.tensor([
    [[0, 0, 0], [-1, 1, 0], [0, 0, 0]],
    [[0, 0, 0], [0, 1, -1], [0, 0, 0]],
    [[0, -1, 0], [0, 1, 0], [0, 0, 0]],
    [[0, 0, 0], [0, 1, 0], [0, -1, 0]],
], dtype=torch.float64)[:, None]


def _check_region(region: int, x: torch.Tensor, name: str) -> None:
    if region > min(x.shape[2:]):
        raise ParameterError(f"{name} {region} is larger than the {tuple(x.shape[2:])} image")


def spatial_consistency_loss(input_hazy: torch.Tensor, pred: torch.Tensor, region: int = 4) -> torch.Tensor:
    """Mean over region cells of sum over 4 neighbours of (|dY_pred| - |dY_in|)^2, Y = channel mean."""
    _check_pair(pred, input_hazy)
    _check_region(region, pred, "spa_region")
    kernels = _NEIGHBOUR_KERNELS.to(dtype=pred.dtype, device=pred.device)
    y_in = F.avg_pool2d(input_hazy.mean(dim=1, keepdim=True), region)
    y_pred = F.avg_pool2d(pred.mean(dim=1, keepdim=True), region)
    d_in = F.conv2d(y_in, kernels, padding=1).abs()
    d_pred = F.conv2d(y_pred, kernels, padding=1).abs()
    return (d_pred - d_in).pow(2).sum(dim=1).mean()


def exposure_loss(pred: torch.Tensor, exposure_level: float = 0.6, region: int = 16) -> torch.Tensor:
    """Mean over region cells of |mean(Y_pred) - E|."""
    _check_region(region, pred, "exp_region")
    y = F.avg_pool2d(pred.mean(dim=1, keepdim=True), region)
    return (y - exposure_level).abs().mean()


def color_constancy_loss(pred: torch.Tensor) -> torch.Tensor:
    """Sum over channel pairs of squared differences of channel means, batch-averaged."""
    mean_rgb = pred.mean(dim=(2, 3))
    r, g, b = mean_rgb[:, 0], mean_rgb[:, 1], mean_rgb[:, 2]
    return ((r - g).pow(2) + (r - b).pow(2) + (g - b).pow(2)).mean()


def spa_exp_col_losses(input_hazy: torch.Tensor, pred_clean: torch.Tensor, cfg: Optional[UnsupervisedLossConfig] = None):
    cfg = cfg or UnsupervisedLossConfig()
    _check_pair(pred_clean, input_hazy)
    return (
        spatial_consistency_loss(input_hazy, pred_clean, cfg.spa_region),
        exposure_loss(pred_clean, cfg.exposure_level, cfg.exp_region),
        color_constancy_loss(pred_clean),
    )


def supervised_total(
    pred: torch.Tensor,
    gt: torch.Tensor,
    cfg: Optional[SupervisedLossConfig] = None,
    extractor: Optional[nn.Module] = None,
) -> LossReport:
    """L_psnr + lambda_per * L_per."""
    cfg = cfg or SupervisedLossConfig()
    extractor = extractor if extractor is not None else FeatureExtractor().to(dtype=pred.dtype, device=pred.device)
    terms = {
        'psnr': psnr_loss(pred, gt, cfg.psnr_eps),
        'per': perceptual_loss(pred, gt, extractor, cfg.feature_layers),
    }
    return LossReport.from_terms(terms, {'psnr': 1.0, 'per': cfg.lambda_per})


def unsupervised_total(
    input_hazy: torch.Tensor,
    pred: torch.Tensor,
    cfg: Optional[UnsupervisedLossConfig] = None,
    L: Optional[Union[LaplacianLike, Sequence[LaplacianLike]]] = None,
    targets: Optional[PriorTargets] = None,
) -> LossReport:
    """Weighted sum of the dcp, bcp, spa, exp and col terms."""
    cfg = cfg or UnsupervisedLossConfig()
    if targets is None:
        targets = prepare_prior_targets(input_hazy, cfg, with_laplacian=L is None)
    spa, exp, col = spa_exp_col_losses(input_hazy, pred, cfg)
    terms = {
        'dcp': dcp_loss(input_hazy, pred, L, cfg.dcp_inner_lambda, cfg, targets),
        'bcp': bcp_loss(input_hazy, pred, cfg, targets),
        'spa': spa,
        'exp': exp,
        'col': col,
    }
    return LossReport.from_terms(terms, cfg.weights)
